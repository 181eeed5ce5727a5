#include "scram/attention.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "scram/kernels.hpp"
#include "scram/parallel.hpp"

namespace scram {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_attention_shapes(const FieldImage& Q, const FieldImage& K,
                            const FieldImage& V, bool causal) {
    if (Q.depth() != K.depth()) {
        throw DimensionError("attention: query depth != key depth");
    }
    if (K.height() != V.height() || K.width() != V.width()) {
        throw DimensionError("attention: key and value rasters differ in shape");
    }
    if (causal && (Q.height() != K.height() || Q.width() != K.width())) {
        throw DimensionError("attention: causal mask requires query and key "
                             "fields of the same shape");
    }
}

// One query row of the exact oracle. scores is scratch of size n_k.
// Returns the log-sum-exp normalizer, or -inf for a fully masked row.
double attend_row(std::span<const float> q, const FieldImage& K,
                  const FieldImage& V, int query_index, bool causal,
                  std::vector<double>& scores, std::span<double> out,
                  double* weights_row) {
    const auto& kt = kernels::active();
    const int n_k = K.pixels();
    const int d_k = K.depth();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));

    kt.scores_row(q.data(), K.raw(), n_k, d_k, scale, scores.data());

    int limit = n_k;  // first masked index under causal order
    if (causal) limit = std::min(query_index, n_k);

    std::fill(out.begin(), out.end(), 0.0);
    if (limit == 0) {
        if (weights_row != nullptr) std::fill(weights_row, weights_row + n_k, 0.0);
        return kNegInf;
    }

    const double m = kt.reduce_max(scores.data(), limit);
    double sum = 0.0;
    for (int j = 0; j < limit; ++j) {
        scores[j] = std::exp(scores[j] - m);
        sum += scores[j];
    }
    kt.weighted_sum_rows(scores.data(), V.raw(), limit, V.depth(), out.data());
    const double inv = 1.0 / sum;
    for (double& v : out) v *= inv;

    if (weights_row != nullptr) {
        for (int j = 0; j < limit; ++j) weights_row[j] = scores[j] * inv;
        std::fill(weights_row + limit, weights_row + n_k, 0.0);
    }
    return m + std::log(sum);
}

AttentionOutput run_full_attention(const FieldImage& Q, const FieldImage& K,
                                   const FieldImage& V, bool causal, int threads,
                                   AttentionWeights* weights) {
    check_attention_shapes(Q, K, V, causal);
    const int n_q = Q.pixels();
    const int n_k = K.pixels();

    AttentionOutput out(Q.height(), Q.width(), V.depth());
    out.normalizer.assign(static_cast<std::size_t>(n_q), 0.0);
    if (weights != nullptr) {
        weights->n_queries = n_q;
        weights->n_keys = n_k;
        weights->p.assign(static_cast<std::size_t>(n_q) * n_k, 0.0);
    }

    parallel_for(0, n_q, threads, [&](int i) {
        std::vector<double> scores(static_cast<std::size_t>(n_k));
        double* wrow = weights != nullptr
                           ? weights->p.data() + static_cast<std::size_t>(i) * n_k
                           : nullptr;
        const double lse = attend_row(Q.at_linear(i), K, V, i, causal, scores,
                                      out.at_linear_mut(i), wrow);
        out.normalizer[static_cast<std::size_t>(i)] = lse;
        if (lse == kNegInf) out.degenerate[static_cast<std::size_t>(i)] = 1;
    });
    return out;
}

}  // namespace

double compatibility(std::span<const float> q, std::span<const float> k, int d_k) {
    if (d_k < 1 || q.size() != static_cast<std::size_t>(d_k) ||
        k.size() != static_cast<std::size_t>(d_k)) {
        throw DimensionError("compatibility: vector lengths must equal d_k");
    }
    return kernels::active().dot(q.data(), k.data(), d_k) /
           std::sqrt(static_cast<double>(d_k));
}

std::vector<double> softmax_row(std::span<const double> scores) {
    if (scores.empty()) {
        throw ArgumentError("softmax_row: empty score row");
    }
    double m = kNegInf;
    for (double s : scores) m = std::max(m, s);
    if (m == kNegInf) {
        throw DegenerateRowError("softmax_row: all entries are -inf");
    }
    std::vector<double> p(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp(scores[i] - m);
        sum += p[i];
    }
    const double inv = 1.0 / sum;
    for (double& v : p) v *= inv;
    return p;
}

AttentionOutput full_attention(const FieldImage& Q, const FieldImage& K,
                               const FieldImage& V, bool causal, int threads) {
    return run_full_attention(Q, K, V, causal, threads, nullptr);
}

std::pair<AttentionOutput, AttentionWeights> full_attention_with_weights(
    const FieldImage& Q, const FieldImage& K, const FieldImage& V, bool causal,
    int threads) {
    AttentionWeights w;
    AttentionOutput out = run_full_attention(Q, K, V, causal, threads, &w);
    return {std::move(out), std::move(w)};
}

AttentionOutput nonlocal_mean(const FieldImage& Q, const FieldImage& K,
                              const FieldImage& V, const CompatFunctor& f,
                              int threads) {
    check_attention_shapes(Q, K, V, false);
    const int n_q = Q.pixels();
    const int n_k = K.pixels();

    AttentionOutput out(Q.height(), Q.width(), V.depth());
    out.normalizer.assign(static_cast<std::size_t>(n_q), 0.0);

    std::atomic<bool> degenerate{false};
    parallel_for(0, n_q, threads, [&](int i) {
        std::vector<double> w(static_cast<std::size_t>(n_k));
        const auto q = Q.at_linear(i);
        double c = 0.0;
        for (int j = 0; j < n_k; ++j) {
            w[static_cast<std::size_t>(j)] = f(q, K.at_linear(j));
            c += w[static_cast<std::size_t>(j)];
        }
        if (!(c > 0.0) || !std::isfinite(c)) {
            degenerate.store(true);
            return;
        }
        auto o = out.at_linear_mut(i);
        kernels::active().weighted_sum_rows(w.data(), V.raw(), n_k, V.depth(),
                                            o.data());
        const double inv = 1.0 / c;
        for (double& v : o) v *= inv;
        out.normalizer[static_cast<std::size_t>(i)] = c;
    });
    if (degenerate.load()) {
        throw DegenerateNormalizerError(
            "nonlocal_mean: zero or non-finite normalizer");
    }
    return out;
}

std::vector<std::vector<PixelIndex>> top_k_exact(const FieldImage& Q,
                                                 const FieldImage& K, int kappa,
                                                 int threads) {
    if (Q.depth() != K.depth()) {
        throw DimensionError("top_k_exact: query depth != key depth");
    }
    const int n_k = K.pixels();
    if (kappa < 1 || kappa > n_k) {
        throw ArgumentError("top_k_exact: kappa must be in [1, n]");
    }
    const int n_q = Q.pixels();
    const double scale = 1.0 / std::sqrt(static_cast<double>(K.depth()));

    std::vector<std::vector<PixelIndex>> result(static_cast<std::size_t>(n_q));
    parallel_for(0, n_q, threads, [&](int i) {
        std::vector<double> scores(static_cast<std::size_t>(n_k));
        kernels::active().scores_row(Q.at_linear(i).data(), K.raw(), n_k,
                                     K.depth(), scale, scores.data());
        std::vector<int> order(static_cast<std::size_t>(n_k));
        for (int j = 0; j < n_k; ++j) order[static_cast<std::size_t>(j)] = j;
        auto better = [&](int a, int b) {
            const double sa = scores[static_cast<std::size_t>(a)];
            const double sb = scores[static_cast<std::size_t>(b)];
            return sa > sb || (sa == sb && a < b);
        };
        std::partial_sort(order.begin(), order.begin() + kappa, order.end(),
                          better);
        auto& row = result[static_cast<std::size_t>(i)];
        row.reserve(static_cast<std::size_t>(kappa));
        for (int r = 0; r < kappa; ++r) {
            row.push_back(K.from_row_major(order[static_cast<std::size_t>(r)]));
        }
    });
    return result;
}

std::vector<std::vector<PixelIndex>> top_k_mode_exact(const FieldImage& Q,
                                                      const FieldImage& K,
                                                      int kappa, int L,
                                                      int threads) {
    if (Q.depth() != K.depth()) {
        throw DimensionError("top_k_mode_exact: query depth != key depth");
    }
    const int n_k = K.pixels();
    if (kappa < 1 || kappa > n_k) {
        throw ArgumentError("top_k_mode_exact: kappa must be in [1, n]");
    }
    if (L < 0) {
        throw ArgumentError("top_k_mode_exact: L must be >= 0");
    }
    const int n_q = Q.pixels();
    const double scale = 1.0 / std::sqrt(static_cast<double>(K.depth()));

    std::vector<std::vector<PixelIndex>> result(static_cast<std::size_t>(n_q));
    std::atomic<bool> infeasible{false};
    parallel_for(0, n_q, threads, [&](int i) {
        std::vector<double> scores(static_cast<std::size_t>(n_k));
        kernels::active().scores_row(Q.at_linear(i).data(), K.raw(), n_k,
                                     K.depth(), scale, scores.data());
        auto& row = result[static_cast<std::size_t>(i)];
        for (int r = 0; r < kappa; ++r) {
            int best = -1;
            double best_score = kNegInf;
            for (int j = 0; j < n_k; ++j) {
                const PixelIndex pj = K.from_row_major(j);
                bool ok = true;
                for (const PixelIndex sel : row) {
                    if (chebyshev(pj, sel) <= L) {
                        ok = false;
                        break;
                    }
                }
                if (!ok) continue;
                if (scores[static_cast<std::size_t>(j)] > best_score) {
                    best_score = scores[static_cast<std::size_t>(j)];
                    best = j;
                }
            }
            if (best < 0) {
                infeasible.store(true);
                return;
            }
            row.push_back(K.from_row_major(best));
        }
    });
    if (infeasible.load()) {
        throw InfeasiblePolicyError(
            "top_k_mode_exact: separation constraint cannot yield kappa keys");
    }
    return result;
}

}  // namespace scram
