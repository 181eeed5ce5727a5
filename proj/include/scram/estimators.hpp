#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "scram/field.hpp"
#include "scram/patchmatch.hpp"
#include "scram/rng.hpp"

namespace scram {

/// Per-query mode centers (typically the entries of mode-separated
/// PatchMatch fields).
struct ModeSet {
    int key_height = 0;
    int key_width = 0;
    std::vector<std::vector<PixelIndex>> modes;  // per query

    static ModeSet from_fields(std::span<const NeighbourField> fields);
};

struct SnisConfig {
    int samples = 1;      // T_s per query
    double alpha = 0.9;   // mixture weight of the mode component
    double phi = 2.0;     // RBF length-scale, pixels
    std::uint64_t seed = 0;

    void validate() const;
};

struct SnisDiagnostics {
    std::vector<double> ess;             // per query
    std::vector<double> variance;        // per query x channel
    std::vector<double> log_weight_sum;  // per query
};

struct MhConfig {
    int chains = 1;
    int steps = 1;
    double phi = 2.0;
    std::uint64_t seed = 0;
    bool record_visits = false;  // tabulate the empirical state histogram
    // no burn-in: every state of every chain, initial states included,
    // enters the average

    void validate() const;
};

struct MhDiagnostics {
    int chains = 0;
    std::vector<double> acceptance;           // per query x chain
    std::vector<std::uint32_t> visit_counts;  // per query x key, when recorded
};

/// exp((q . k) / sqrt(d_k)), the unnormalized attention mass of key k
/// for query q. Strictly positive. Estimator internals stay in
/// log-space and only exponentiate differences.
double unnormalized_target(std::span<const float> q, std::span<const float> k,
                           int d_k);

/// Mode-anchored mixture importance pmf over the key raster:
/// r(j) = (alpha/#modes) * sum_m g(j; mode_m, phi) + (1-alpha)/n with g
/// a discrete RBF on Euclidean pixel distance, explicitly normalized
/// over all n cells. With no modes the mixture degenerates to the
/// uniform term (alpha = 1 then throws).
double importance_pmf(int j, std::span<const PixelIndex> modes, double alpha,
                      double phi, int height, int width);

/// Self-normalized importance sampling refinement of the attention
/// output, with per-query ESS and delta-method variance diagnostics.
std::pair<AttentionOutput, SnisDiagnostics> snis_estimate(
    const FieldImage& Q, const FieldImage& K, const FieldImage& V,
    const ModeSet& modes, const SnisConfig& config, int threads = 1);

/// Symmetric random-walk proposal over the key raster: the offset is
/// drawn from a discrete RBF on the full offset box (so the density
/// depends only on the displacement and q(s->t) = q(t->s) exactly); an
/// out-of-bounds landing is a self-proposal. Public so tests can
/// tabulate the transition kernel.
class MhProposal {
public:
    MhProposal(int height, int width, double phi);

    int height() const { return height_; }
    int width() const { return width_; }

    /// pmf of drawing displacement (dy, dx); dy in [-(H-1), H-1],
    /// dx in [-(W-1), W-1]. Zero outside the box.
    double offset_pmf(int dy, int dx) const;

    /// Proposed state from `current`; returns `current` itself when the
    /// sampled offset leaves the raster.
    PixelIndex propose(PixelIndex current, StreamRng& rng) const;

private:
    int height_;
    int width_;
    double phi_;
    std::vector<double> row_weight_;  // index dy + (H-1)
    std::vector<double> col_weight_;
    std::vector<double> row_cdf_;
    std::vector<double> col_cdf_;
    double row_total_ = 0;
    double col_total_ = 0;
};

/// Metropolis chains seeded at the per-query modes (cycling when
/// chains > modes). Every visited state of every chain is pooled into
/// the output mean; per-chain acceptance rates are reported.
std::pair<AttentionOutput, MhDiagnostics> mh_estimate(const FieldImage& Q,
                                                      const FieldImage& K,
                                                      const FieldImage& V,
                                                      const ModeSet& modes,
                                                      const MhConfig& config,
                                                      int threads = 1);

}  // namespace scram
