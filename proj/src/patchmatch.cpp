#include "scram/patchmatch.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "scram/kernels.hpp"
#include "scram/parallel.hpp"

namespace scram {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kInitRetries = 32;

// Distinct stream tags so init / search / scan draws never collide.
enum StreamTag : std::uint64_t { kInitStream = 0x1111, kSearchStream = 0x2222 };

PixelIndex offset_of(Direction d, int jump) {
    switch (d) {
        case Direction::Up: return {-jump, 0};
        case Direction::Down: return {jump, 0};
        case Direction::Left: return {0, -jump};
        case Direction::Right: return {0, jump};
    }
    return {0, 0};
}

bool causal_ok(PixelIndex candidate, int pos_linear, int key_width, bool causal) {
    if (!causal) return true;
    return candidate.y * key_width + candidate.x < pos_linear;
}

struct PassContext {
    const FieldImage& Q;
    const FieldImage& K;
    std::span<const NeighbourField> priors;
    const ValidityPolicy& policy;
    bool causal;
    double scale;

    double compat(int query_linear, PixelIndex key) const {
        return scale * kernels::active().dot(Q.at_linear(query_linear).data(),
                                             K.at(key).data(), Q.depth());
    }
};

}  // namespace

bool is_index_valid(PixelIndex candidate, PixelIndex pos,
                    std::span<const NeighbourField> priors,
                    const ValidityPolicy& policy) {
    for (const NeighbourField& prior : priors) {
        const PixelIndex prev = prior.at(pos);
        if (NeighbourField::is_sentinel(prev)) continue;
        if (policy.kind == ValidityPolicy::Kind::MaxNonDuplicate) {
            if (prev == candidate) return false;
        } else {
            if (chebyshev(prev, candidate) <= policy.separation) return false;
        }
    }
    return true;
}

NeighbourField init_random(int height, int width, int key_height, int key_width,
                           const ValidityPolicy& policy,
                           std::span<const NeighbourField> priors,
                           std::uint64_t seed, std::uint64_t run_index,
                           bool causal) {
    NeighbourField field(height, width, key_height, key_width);
    const int n_keys = key_height * key_width;

    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const PixelIndex pos{y, x};
            const int pos_linear = y * width + x;
            // causal: sample directly from the strict past
            const int limit = causal ? std::min(pos_linear, n_keys) : n_keys;
            if (limit == 0) continue;  // sentinel stays (causal position 0)

            StreamRng rng(seed ^ kInitStream, run_index,
                          static_cast<std::uint64_t>(pos_linear), 0);
            bool placed = false;
            for (int attempt = 0; attempt < kInitRetries && !placed; ++attempt) {
                const int j = static_cast<int>(
                    rng.next_below(static_cast<std::uint32_t>(limit)));
                const PixelIndex cand{j / key_width, j % key_width};
                if (is_index_valid(cand, pos, priors, policy)) {
                    field.set(y, x, cand);
                    placed = true;
                }
            }
            if (!placed) {
                // linear scan from a random start, wrapping
                const int start = static_cast<int>(
                    rng.next_below(static_cast<std::uint32_t>(limit)));
                for (int k = 0; k < limit && !placed; ++k) {
                    const int j = (start + k) % limit;
                    const PixelIndex cand{j / key_width, j % key_width};
                    if (is_index_valid(cand, pos, priors, policy)) {
                        field.set(y, x, cand);
                        placed = true;
                    }
                }
            }
            if (!placed && !causal) {
                throw InfeasiblePolicyError(
                    "init_random: no valid key index for position (" +
                    std::to_string(y) + "," + std::to_string(x) + ")");
            }
        }
    }
    return field;
}

std::optional<PixelIndex> propagate_candidate(PixelIndex pos, Direction direction,
                                              int jump,
                                              const NeighbourField& current) {
    const PixelIndex off = offset_of(direction, jump);
    const PixelIndex neighbour{pos.y + off.y, pos.x + off.x};
    if (neighbour.y < 0 || neighbour.y >= current.height() || neighbour.x < 0 ||
        neighbour.x >= current.width()) {
        return std::nullopt;
    }
    const PixelIndex match = current.at(neighbour);
    if (NeighbourField::is_sentinel(match)) return std::nullopt;
    const PixelIndex candidate{match.y - off.y, match.x - off.x};
    if (candidate.y < 0 || candidate.y >= current.key_height() ||
        candidate.x < 0 || candidate.x >= current.key_width()) {
        return std::nullopt;
    }
    return candidate;
}

std::vector<PixelIndex> random_search_candidates(PixelIndex best, int key_height,
                                                 int key_width, StreamRng& rng) {
    std::vector<PixelIndex> out;
    const int radius = std::max(key_height, key_width);
    for (int dist = radius; dist >= 1; dist /= 2) {
        const int y_lo = std::max(0, best.y - dist);
        const int y_hi = std::min(key_height - 1, best.y + dist);
        const int x_lo = std::max(0, best.x - dist);
        const int x_hi = std::min(key_width - 1, best.x + dist);
        out.push_back({rng.next_range(y_lo, y_hi), rng.next_range(x_lo, x_hi)});
    }
    return out;
}

NeighbourField patchmatch_pass(const FieldImage& Q, const FieldImage& K,
                               const PatchMatchConfig& config,
                               const ValidityPolicy& policy,
                               std::span<const NeighbourField> priors,
                               bool causal, std::uint64_t run_index, int threads) {
    config.validate();
    if (Q.depth() != K.depth()) {
        throw DimensionError("patchmatch_pass: query depth != key depth");
    }
    for (const NeighbourField& prior : priors) {
        if (prior.height() != Q.height() || prior.width() != Q.width()) {
            throw DimensionError("patchmatch_pass: prior field shape mismatch");
        }
    }
    if (causal && (Q.height() != K.height() || Q.width() != K.width())) {
        throw DimensionError("patchmatch_pass: causal runs need matching shapes");
    }

    const PassContext ctx{Q, K, priors, policy, causal,
                          1.0 / std::sqrt(static_cast<double>(Q.depth()))};

    NeighbourField prev = init_random(Q.height(), Q.width(), K.height(), K.width(),
                                      policy, priors, config.seed, run_index,
                                      causal);
    NeighbourField next = prev;

    // Causal runs propagate only from row-major-earlier neighbours so a
    // position's entry never depends on keys at or past it.
    static constexpr Direction kAllDirs[] = {Direction::Up, Direction::Down,
                                             Direction::Left, Direction::Right};
    static constexpr Direction kCausalDirs[] = {Direction::Up, Direction::Left};
    const std::span<const Direction> directions =
        causal ? std::span<const Direction>(kCausalDirs)
               : std::span<const Direction>(kAllDirs);

    const int n_q = Q.pixels();
    for (int iter = 0; iter < config.iterations; ++iter) {
        parallel_for(0, n_q, threads, [&](int i) {
            const PixelIndex pos = {i / Q.width(), i % Q.width()};
            PixelIndex best = prev.at_linear(i);
            double best_score =
                NeighbourField::is_sentinel(best) ? kNegInf : ctx.compat(i, best);

            auto try_accept = [&](PixelIndex cand) {
                if (!causal_ok(cand, i, K.width(), causal)) return;
                if (!is_index_valid(cand, pos, priors, policy)) return;
                const double s = ctx.compat(i, cand);
                if (s > best_score) {
                    best = cand;
                    best_score = s;
                }
            };

            for (const int jump : config.jumps) {
                for (const Direction dir : directions) {
                    if (const auto cand = propagate_candidate(pos, dir, jump, prev)) {
                        try_accept(*cand);
                    }
                }
            }
            if (!NeighbourField::is_sentinel(best)) {
                StreamRng rng(config.seed ^ kSearchStream, run_index,
                              static_cast<std::uint64_t>(i),
                              static_cast<std::uint64_t>(iter));
                for (const PixelIndex cand :
                     random_search_candidates(best, K.height(), K.width(), rng)) {
                    try_accept(cand);
                }
            }
            next.set_linear(i, best);
        });
        std::swap(prev, next);
    }
    return prev;
}

std::vector<NeighbourField> top_kappa(const FieldImage& Q, const FieldImage& K,
                                      int kappa, const ValidityPolicy& policy,
                                      const PatchMatchConfig& config, bool causal,
                                      int threads) {
    if (kappa < 1) throw ArgumentError("top_kappa: kappa must be >= 1");
    std::vector<NeighbourField> fields;
    fields.reserve(static_cast<std::size_t>(kappa));
    for (int run = 0; run < kappa; ++run) {
        fields.push_back(patchmatch_pass(Q, K, config, policy,
                                         std::span<const NeighbourField>(fields),
                                         causal,
                                         static_cast<std::uint64_t>(run), threads));
    }
    return fields;
}

void validate_neighbour_fields(std::span<const NeighbourField> fields,
                               const ValidityPolicy& policy, bool causal) {
    for (std::size_t r = 0; r < fields.size(); ++r) {
        const NeighbourField& f = fields[r];
        for (int i = 0; i < f.pixels(); ++i) {
            const PixelIndex e = f.at_linear(i);
            if (NeighbourField::is_sentinel(e)) {
                if (!causal) {
                    throw InfeasiblePolicyError(
                        "validate_neighbour_fields: sentinel entry outside a "
                        "causal run");
                }
                continue;
            }
            if (e.y < 0 || e.y >= f.key_height() || e.x < 0 ||
                e.x >= f.key_width()) {
                throw ArgumentError("validate_neighbour_fields: entry out of bounds");
            }
            if (causal && e.y * f.key_width() + e.x >= i) {
                throw ArgumentError(
                    "validate_neighbour_fields: causal entry not in strict past");
            }
            const PixelIndex pos{i / f.width(), i % f.width()};
            if (!is_index_valid(e, pos, fields.first(r), policy)) {
                throw InfeasiblePolicyError(
                    "validate_neighbour_fields: policy violated at position " +
                    std::to_string(i) + " of run " + std::to_string(r));
            }
        }
    }
}

double nnf_objective(const FieldImage& Q, const FieldImage& K,
                     const NeighbourField& field) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(Q.depth()));
    double total = 0.0;
    for (int i = 0; i < field.pixels(); ++i) {
        const PixelIndex e = field.at_linear(i);
        if (NeighbourField::is_sentinel(e)) continue;
        total += scale * kernels::active().dot(Q.at_linear(i).data(),
                                               K.at(e).data(), Q.depth());
    }
    return total;
}

}  // namespace scram
