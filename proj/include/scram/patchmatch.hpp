#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "scram/field.hpp"
#include "scram/rng.hpp"

namespace scram {

/// Per-query index of a matched key position. An entry of (-1, -1) is
/// the "no valid key" sentinel; it only occurs in causal runs, where
/// early positions can have an empty valid set.
class NeighbourField {
public:
    NeighbourField() = default;
    NeighbourField(int height, int width, int key_height, int key_width)
        : height_(height), width_(width), key_height_(key_height),
          key_width_(key_width),
          entries_(static_cast<std::size_t>(height) * width, PixelIndex{-1, -1}) {}

    int height() const { return height_; }
    int width() const { return width_; }
    int key_height() const { return key_height_; }
    int key_width() const { return key_width_; }
    int pixels() const { return height_ * width_; }

    PixelIndex at(int y, int x) const {
        return entries_[static_cast<std::size_t>(y) * width_ + x];
    }
    PixelIndex at(PixelIndex p) const { return at(p.y, p.x); }
    PixelIndex at_linear(int i) const { return entries_[static_cast<std::size_t>(i)]; }

    void set(int y, int x, PixelIndex match) {
        entries_[static_cast<std::size_t>(y) * width_ + x] = match;
    }
    void set_linear(int i, PixelIndex match) {
        entries_[static_cast<std::size_t>(i)] = match;
    }

    static bool is_sentinel(PixelIndex p) { return p.y < 0 || p.x < 0; }

    const std::vector<PixelIndex>& entries() const { return entries_; }

    friend bool operator==(const NeighbourField& a, const NeighbourField& b) {
        return a.height_ == b.height_ && a.width_ == b.width_ &&
               a.key_height_ == b.key_height_ && a.key_width_ == b.key_width_ &&
               a.entries_ == b.entries_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    int key_height_ = 0;
    int key_width_ = 0;
    std::vector<PixelIndex> entries_;
};

/// Constraint a candidate key must satisfy against the entries of all
/// prior runs at the same query position.
struct ValidityPolicy {
    enum class Kind { MaxNonDuplicate, ModeSeparated };

    Kind kind = Kind::MaxNonDuplicate;
    int separation = 0;  // L, ModeSeparated only

    static ValidityPolicy max_non_duplicate() { return {Kind::MaxNonDuplicate, 0}; }
    static ValidityPolicy mode_separated(int L) {
        if (L < 1) throw ArgumentError("ValidityPolicy: separation L must be >= 1");
        return {Kind::ModeSeparated, L};
    }
};

struct PatchMatchConfig {
    int iterations = 8;
    std::vector<int> jumps = {8, 4, 2, 1};
    std::uint64_t seed = 0;

    void validate() const {
        if (iterations < 1) throw ArgumentError("PatchMatchConfig: iterations >= 1");
        if (jumps.empty() || jumps.back() != 1) {
            throw ArgumentError("PatchMatchConfig: jump sequence must end at 1");
        }
        for (std::size_t i = 1; i < jumps.size(); ++i) {
            if (jumps[i] >= jumps[i - 1]) {
                throw ArgumentError(
                    "PatchMatchConfig: jump sequence must be strictly decreasing");
            }
        }
    }
};

enum class Direction { Up, Down, Left, Right };

/// True when `candidate` may be stored at query position `pos` given
/// the entries of the prior fields there. O(#priors). Sentinel prior
/// entries impose no constraint.
bool is_index_valid(PixelIndex candidate, PixelIndex pos,
                    std::span<const NeighbourField> priors,
                    const ValidityPolicy& policy);

/// Randomly initialized field: each entry uniform over the key indices
/// valid under (policy, priors) and, when causal, restricted to the
/// strict row-major past of the position. Bounded rejection sampling
/// with a linear-scan fallback. A position with no valid index throws
/// InfeasiblePolicyError in non-causal runs and stores the sentinel in
/// causal ones.
NeighbourField init_random(int height, int width, int key_height, int key_width,
                           const ValidityPolicy& policy,
                           std::span<const NeighbourField> priors,
                           std::uint64_t seed, std::uint64_t run_index,
                           bool causal = false);

/// Candidate from the neighbour `jump` pixels away in `direction`: the
/// neighbour's stored match displaced by the opposite offset, so a
/// coherent match slides along with the query. Empty when the neighbour
/// or the shifted candidate is out of bounds (or the neighbour holds
/// the sentinel).
std::optional<PixelIndex> propagate_candidate(PixelIndex pos, Direction direction,
                                              int jump,
                                              const NeighbourField& current);

/// One candidate per distance in [R, R/2, ..., 1] with R =
/// max(key_height, key_width), each uniform over the axis-aligned
/// square window of that half-width around `best`, clamped to bounds.
std::vector<PixelIndex> random_search_candidates(PixelIndex best, int key_height,
                                                 int key_width, StreamRng& rng);

/// One adapted jump-flood pass: T iterations of propagation plus random
/// search, double-buffered (candidates read the previous iteration's
/// entries). A candidate replaces the stored match only on strictly
/// greater compatibility and a passing validity check. Deterministic
/// for a fixed (seed, run_index) at any thread count.
NeighbourField patchmatch_pass(const FieldImage& Q, const FieldImage& K,
                               const PatchMatchConfig& config,
                               const ValidityPolicy& policy,
                               std::span<const NeighbourField> priors,
                               bool causal = false, std::uint64_t run_index = 0,
                               int threads = 1);

/// kappa sequential passes, each constrained against all previous
/// fields; field r approximates the rank-r match under the policy.
std::vector<NeighbourField> top_kappa(const FieldImage& Q, const FieldImage& K,
                                      int kappa, const ValidityPolicy& policy,
                                      const PatchMatchConfig& config,
                                      bool causal = false, int threads = 1);

/// Exhaustive post-hoc check that every entry is in bounds and
/// satisfies the policy against all earlier fields (and the causal
/// order when set). Throws on violation.
void validate_neighbour_fields(std::span<const NeighbourField> fields,
                               const ValidityPolicy& policy, bool causal = false);

/// Sum over queries of compat(q_i, k_j(i)), sentinel entries skipped.
double nnf_objective(const FieldImage& Q, const FieldImage& K,
                     const NeighbourField& field);

}  // namespace scram
