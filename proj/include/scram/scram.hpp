#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scram/field.hpp"
#include "scram/patchmatch.hpp"

namespace scram {

/// Per-query sorted, deduplicated key index lists (row-major indices
/// into the key raster).
struct SparseIndexSets {
    int key_height = 0;
    int key_width = 0;
    std::vector<std::vector<std::int32_t>> sets;

    int n_queries() const { return static_cast<int>(sets.size()); }
};

struct ScramConfig {
    int kappa = 1;
    int b = 0;  // neighbourhood half-width
    ValidityPolicy policy = ValidityPolicy::max_non_duplicate();
    PatchMatchConfig patchmatch;
    bool causal = false;

    void validate() const {
        if (kappa < 1) throw ArgumentError("ScramConfig: kappa must be >= 1");
        if (b < 0) throw ArgumentError("ScramConfig: b must be >= 0");
        patchmatch.validate();
    }
};

/// True when key position j is masked for query position i
/// (row-major generation order, strict past: j >= i is masked).
inline bool causal_mask_positions(int i, int j) { return j >= i; }

/// Union of the (2b+1)^2 windows around every field's match per query,
/// clipped to the key raster, deduplicated and sorted. With `causal`,
/// indices at or past the query position are dropped. b = 0 yields
/// exactly the match indices.
SparseIndexSets expand_neighbourhood(std::span<const NeighbourField> fields,
                                     int b, bool causal = false);

/// Sparse softmax restricted to each query's index set (max-subtracted)
/// and the weighted value sum over it. Under `causal`, any index at or
/// past the query is masked to -inf before normalization; a query whose
/// effective set is empty gets a zero vector and a degenerate flag. An
/// empty set outside causal mode throws DegenerateRowError.
AttentionOutput sparse_attention_output(const FieldImage& Q, const FieldImage& K,
                                        const FieldImage& V,
                                        const SparseIndexSets& sets,
                                        bool causal = false, int threads = 1);

/// End-to-end approximate attention: top-kappa PatchMatch, window
/// expansion, sparse softmax output. Deterministic given the seed.
AttentionOutput scram_forward(const FieldImage& Q, const FieldImage& K,
                              const FieldImage& V, const ScramConfig& config,
                              int threads = 1);

}  // namespace scram
