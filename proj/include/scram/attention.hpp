#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "scram/field.hpp"

namespace scram {

/// Dense per-query attention distribution, oracle/diagnostic use only.
/// Row i sums to 1 for unmasked queries; rows of degenerate (fully
/// masked) queries are all zero.
struct AttentionWeights {
    int n_queries = 0;
    int n_keys = 0;
    std::vector<double> p;  // row-major n_queries x n_keys

    double at(int i, int j) const {
        return p[static_cast<std::size_t>(i) * n_keys + j];
    }
    std::span<const double> row(int i) const {
        return {p.data() + static_cast<std::size_t>(i) * n_keys,
                static_cast<std::size_t>(n_keys)};
    }
};

/// Scaled dot-product compatibility (q . k) / sqrt(d_k).
/// Throws DimensionError when either vector's length differs from d_k.
double compatibility(std::span<const float> q, std::span<const float> k, int d_k);

/// Max-subtracted softmax over a score row. Entries may be -inf
/// (masked); an all -inf row throws DegenerateRowError.
std::vector<double> softmax_row(std::span<const double> scores);

/// Exact O(n_q * n_k) attention: o_i = sum_j p_ij v_j with p the
/// row-wise softmax of the compatibility scores. With `causal`, key
/// positions at row-major index >= the query index score -inf (the
/// strict past only); query 0 yields a zero vector and a degenerate
/// flag. Q may have a different raster shape than K unless causal.
AttentionOutput full_attention(const FieldImage& Q, const FieldImage& K,
                               const FieldImage& V, bool causal = false,
                               int threads = 1);

/// Same, also materializing the dense weight matrix (keep n small).
std::pair<AttentionOutput, AttentionWeights> full_attention_with_weights(
    const FieldImage& Q, const FieldImage& K, const FieldImage& V,
    bool causal = false, int threads = 1);

/// Pairwise weight function for the generalized non-local mean.
using CompatFunctor =
    std::function<double(std::span<const float>, std::span<const float>)>;

/// Generalized non-local mean y_i = (1/C_i) sum_j f(q_i, k_j) v_j with
/// C_i = sum_j f(q_i, k_j). f must be nonnegative; a zero or non-finite
/// normalizer throws DegenerateNormalizerError.
AttentionOutput nonlocal_mean(const FieldImage& Q, const FieldImage& K,
                              const FieldImage& V, const CompatFunctor& f,
                              int threads = 1);

/// Per query, the kappa key positions with the largest compatibility,
/// descending; ties broken by ascending row-major key index.
std::vector<std::vector<PixelIndex>> top_k_exact(const FieldImage& Q,
                                                 const FieldImage& K, int kappa,
                                                 int threads = 1);

/// Greedy exact counterpart of the mode-separated variant: repeatedly
/// take the compatibility argmax among keys at Chebyshev distance > L
/// from every previously selected key. Throws InfeasiblePolicyError
/// when fewer than kappa keys can be selected.
std::vector<std::vector<PixelIndex>> top_k_mode_exact(const FieldImage& Q,
                                                      const FieldImage& K,
                                                      int kappa, int L,
                                                      int threads = 1);

}  // namespace scram
