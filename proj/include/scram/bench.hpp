#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scram/field.hpp"
#include "scram/scram.hpp"

namespace scram {

/// One timing sample of a forward pass.
struct BenchRecord {
    std::string method;
    int n = 0;
    int height = 0;
    int width = 0;
    int d_k = 0;
    int kappa = 0;
    int b = 0;
    std::string variant;
    double seconds_mean = 0.0;
    double seconds_std = 0.0;
    int reps = 0;
    int threads = 1;
    std::uint64_t seed = 0;
    bool timed_out = false;  // excluded from the exponent fit
};

struct BenchOptions {
    std::vector<std::string> methods;            // "full", "scram"
    std::vector<std::pair<int, int>> sizes;      // (H, W), ascending by n
    int reps = 5;
    std::uint64_t seed = 0;
    int threads = 1;
    int d_k = 3;
    int d_v = 3;
    int kappa = 2;
    int b = 1;
    ValidityPolicy policy = ValidityPolicy::max_non_duplicate();
    double timeout_seconds = 120.0;

    void validate() const;
};

struct BenchResult {
    std::vector<BenchRecord> records;
    std::map<std::string, double> exponents;  // fitted log-log slope per method
    // outputs of the final timed rep, keyed "method@n", for determinism checks
    std::map<std::string, AttentionOutput> outputs;
};

/// Times each method's forward pass per size (one untimed warmup, then
/// the mean of `reps` runs) and fits the log(time)-vs-log(n) slope by
/// least squares. Warmups that exceed the timeout are recorded but
/// excluded from the fit.
BenchResult run_scaling_bench(const BenchOptions& options);

/// Pinned CSV schema:
/// method,n,H,W,d_k,kappa,b,variant,seconds_mean,seconds_std,reps,threads,seed
void write_bench_csv(const std::vector<BenchRecord>& records, std::ostream& os);

/// Gnuplot-friendly blocks: one indexed block per method of "n seconds".
void write_gnuplot_data(const BenchResult& result, std::ostream& os);

struct QualityConfig {
    std::string label;
    int kappa = 1;
    int b = 0;
    ValidityPolicy policy = ValidityPolicy::max_non_duplicate();
    PatchMatchConfig patchmatch;
};

/// Aggregated approximation-quality metrics of one configuration
/// against the exact oracle.
struct QualityRow {
    std::string label;
    int kappa = 0;
    int b = 0;
    std::string variant;
    double median_l2 = 0.0;
    double mean_l2 = 0.0;
    double median_linf = 0.0;
    double max_linf = 0.0;
    double median_coverage = 0.0;  // true attention mass on the sparse support
    double argmax_hit_rate = 0.0;  // fraction of queries whose support holds the argmax
};

/// Per-config errors of the sparse output against full attention, plus
/// captured attention mass and argmax containment. Refuses rasters past
/// the exact-oracle guard (n > 2^14).
std::vector<QualityRow> quality_report(const FieldImage& Q, const FieldImage& K,
                                       const FieldImage& V,
                                       const std::vector<QualityConfig>& configs,
                                       int threads = 1);

/// Same report over caller-supplied supports (any provenance: PatchMatch,
/// exact top-k, hand-built).
struct LabeledSets {
    std::string label;
    SparseIndexSets sets;
    int kappa = 0;
    int b = 0;
    std::string variant = "custom";
};
std::vector<QualityRow> quality_report_sets(const FieldImage& Q,
                                            const FieldImage& K,
                                            const FieldImage& V,
                                            const std::vector<LabeledSets>& entries,
                                            int threads = 1);

void write_quality_csv(const std::vector<QualityRow>& rows, std::ostream& os);

}  // namespace scram
