#include "scram/scram.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "scram/kernels.hpp"
#include "scram/parallel.hpp"

namespace scram {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

SparseIndexSets expand_neighbourhood(std::span<const NeighbourField> fields,
                                     int b, bool causal) {
    if (fields.empty()) {
        throw ArgumentError("expand_neighbourhood: no neighbour fields");
    }
    if (b < 0) throw ArgumentError("expand_neighbourhood: b must be >= 0");
    const NeighbourField& first = fields.front();
    for (const NeighbourField& f : fields) {
        if (!(f.height() == first.height() && f.width() == first.width() &&
              f.key_height() == first.key_height() &&
              f.key_width() == first.key_width())) {
            throw DimensionError("expand_neighbourhood: inconsistent field shapes");
        }
    }

    const int kh = first.key_height();
    const int kw = first.key_width();
    SparseIndexSets out;
    out.key_height = kh;
    out.key_width = kw;
    out.sets.resize(static_cast<std::size_t>(first.pixels()));

    for (int i = 0; i < first.pixels(); ++i) {
        auto& set = out.sets[static_cast<std::size_t>(i)];
        for (const NeighbourField& f : fields) {
            const PixelIndex m = f.at_linear(i);
            if (NeighbourField::is_sentinel(m)) continue;
            const int y_lo = std::max(0, m.y - b);
            const int y_hi = std::min(kh - 1, m.y + b);
            const int x_lo = std::max(0, m.x - b);
            const int x_hi = std::min(kw - 1, m.x + b);
            for (int y = y_lo; y <= y_hi; ++y) {
                for (int x = x_lo; x <= x_hi; ++x) {
                    const int j = y * kw + x;
                    if (causal && causal_mask_positions(i, j)) continue;
                    set.push_back(j);
                }
            }
        }
        std::sort(set.begin(), set.end());
        set.erase(std::unique(set.begin(), set.end()), set.end());
    }
    return out;
}

AttentionOutput sparse_attention_output(const FieldImage& Q, const FieldImage& K,
                                        const FieldImage& V,
                                        const SparseIndexSets& sets, bool causal,
                                        int threads) {
    if (Q.depth() != K.depth()) {
        throw DimensionError("sparse_attention_output: query depth != key depth");
    }
    if (K.height() != V.height() || K.width() != V.width()) {
        throw DimensionError("sparse_attention_output: key/value shape mismatch");
    }
    if (sets.n_queries() != Q.pixels() || sets.key_height != K.height() ||
        sets.key_width != K.width()) {
        throw DimensionError("sparse_attention_output: index sets do not match fields");
    }
    if (causal && (Q.height() != K.height() || Q.width() != K.width())) {
        throw DimensionError("sparse_attention_output: causal mask requires "
                             "matching query/key shapes");
    }

    const int n_q = Q.pixels();
    const int d_k = Q.depth();
    const int d_v = V.depth();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    const auto& kt = kernels::active();

    AttentionOutput out(Q.height(), Q.width(), d_v);
    out.normalizer.assign(static_cast<std::size_t>(n_q), 0.0);
    std::atomic<bool> empty_row{false};

    parallel_for(0, n_q, threads, [&](int i) {
        const auto& set = sets.sets[static_cast<std::size_t>(i)];
        const auto q = Q.at_linear(i);

        // final -inf guard: indices at or past i never contribute
        std::vector<double> scores;
        std::vector<std::int32_t> live;
        scores.reserve(set.size());
        live.reserve(set.size());
        for (const std::int32_t j : set) {
            if (causal && causal_mask_positions(i, j)) continue;
            live.push_back(j);
            scores.push_back(scale * kt.dot(q.data(), K.at_linear(j).data(), d_k));
        }
        if (live.empty()) {
            if (!causal) {
                empty_row.store(true);
                return;
            }
            out.degenerate[static_cast<std::size_t>(i)] = 1;
            out.normalizer[static_cast<std::size_t>(i)] = kNegInf;
            return;
        }

        const double m = kt.reduce_max(scores.data(), static_cast<int>(scores.size()));
        double sum = 0.0;
        for (double& s : scores) {
            s = std::exp(s - m);
            sum += s;
        }
        const double inv = 1.0 / sum;
        auto o = out.at_linear_mut(i);
        for (std::size_t t = 0; t < live.size(); ++t) {
            const double w = scores[t] * inv;
            const auto v = V.at_linear(live[t]);
            for (int c = 0; c < d_v; ++c) o[c] += w * static_cast<double>(v[c]);
        }
        out.normalizer[static_cast<std::size_t>(i)] = m + std::log(sum);
    });

    if (empty_row.load()) {
        throw DegenerateRowError(
            "sparse_attention_output: empty index set for an unmasked query");
    }
    return out;
}

AttentionOutput scram_forward(const FieldImage& Q, const FieldImage& K,
                              const FieldImage& V, const ScramConfig& config,
                              int threads) {
    config.validate();
    const std::vector<NeighbourField> fields =
        top_kappa(Q, K, config.kappa, config.policy, config.patchmatch,
                  config.causal, threads);
    const SparseIndexSets sets =
        expand_neighbourhood(fields, config.b, config.causal);
    return sparse_attention_output(Q, K, V, sets, config.causal, threads);
}

}  // namespace scram
