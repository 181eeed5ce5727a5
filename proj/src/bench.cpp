#include "scram/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "scram/attention.hpp"
#include "scram/kernels.hpp"
#include "scram/parallel.hpp"
#include "scram/synth.hpp"

namespace scram {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 0) {
        const double lo = *std::max_element(v.begin(), v.begin() + mid);
        return 0.5 * (lo + hi);
    }
    return hi;
}

}  // namespace

void BenchOptions::validate() const {
    if (methods.empty()) throw ArgumentError("bench: no methods given");
    for (const std::string& m : methods) {
        if (m != "full" && m != "scram") {
            throw ArgumentError("bench: unknown method '" + m + "'");
        }
    }
    if (sizes.empty()) throw ArgumentError("bench: no sizes given");
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        if (sizes[i].first * sizes[i].second <=
            sizes[i - 1].first * sizes[i - 1].second) {
            throw ArgumentError("bench: sizes must be ascending in n");
        }
    }
    if (reps < 3) throw ArgumentError("bench: reps must be >= 3");
    if (d_k < 1 || d_v < 1 || kappa < 1 || b < 0) {
        throw ArgumentError("bench: bad field/sparsity parameters");
    }
}

BenchResult run_scaling_bench(const BenchOptions& options) {
    options.validate();
    BenchResult result;

    for (const auto& [h, w] : options.sizes) {
        const int n = h * w;
        const FieldImage Q = gen_uniform(h, w, options.d_k, options.seed * 3 + 1);
        const FieldImage K = gen_uniform(h, w, options.d_k, options.seed * 3 + 2);
        const FieldImage V = gen_uniform(h, w, options.d_v, options.seed * 3 + 3);

        ScramConfig scfg;
        scfg.kappa = options.kappa;
        scfg.b = options.b;
        scfg.policy = options.policy;
        scfg.patchmatch.seed = options.seed;

        for (const std::string& method : options.methods) {
            auto forward = [&]() -> AttentionOutput {
                if (method == "full") {
                    return full_attention(Q, K, V, false, options.threads);
                }
                return scram_forward(Q, K, V, scfg, options.threads);
            };

            BenchRecord rec;
            rec.method = method;
            rec.n = n;
            rec.height = h;
            rec.width = w;
            rec.d_k = options.d_k;
            rec.kappa = method == "scram" ? options.kappa : 0;
            rec.b = method == "scram" ? options.b : 0;
            rec.variant =
                method == "scram"
                    ? (options.policy.kind == ValidityPolicy::Kind::MaxNonDuplicate
                           ? "max"
                           : "mode")
                    : "none";
            rec.threads = options.threads;
            rec.seed = options.seed;

            // warmup, doubling as the timeout probe
            const auto warm0 = Clock::now();
            AttentionOutput last = forward();
            const double warm_s = seconds_since(warm0);
            if (warm_s > options.timeout_seconds) {
                rec.timed_out = true;
                rec.seconds_mean = warm_s;
                rec.seconds_std = 0.0;
                rec.reps = 1;
                result.records.push_back(rec);
                continue;
            }

            std::vector<double> times;
            times.reserve(static_cast<std::size_t>(options.reps));
            for (int r = 0; r < options.reps; ++r) {
                const auto t0 = Clock::now();
                last = forward();
                times.push_back(seconds_since(t0));
            }
            double mean = 0.0;
            for (double t : times) mean += t;
            mean /= static_cast<double>(times.size());
            double var = 0.0;
            for (double t : times) var += (t - mean) * (t - mean);
            var /= static_cast<double>(times.size());

            rec.seconds_mean = mean;
            rec.seconds_std = std::sqrt(var);
            rec.reps = options.reps;
            result.records.push_back(rec);
            result.outputs.emplace(method + "@" + std::to_string(n),
                                   std::move(last));
        }
    }

    // least-squares slope of log(seconds) vs log(n) per method
    for (const std::string& method : options.methods) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int count = 0;
        for (const BenchRecord& rec : result.records) {
            if (rec.method != method || rec.timed_out) continue;
            const double x = std::log(static_cast<double>(rec.n));
            const double y = std::log(rec.seconds_mean);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++count;
        }
        if (count >= 2) {
            result.exponents[method] =
                (count * sxy - sx * sy) / (count * sxx - sx * sx);
        }
    }
    return result;
}

void write_bench_csv(const std::vector<BenchRecord>& records, std::ostream& os) {
    os << "method,n,H,W,d_k,kappa,b,variant,seconds_mean,seconds_std,reps,"
          "threads,seed\n";
    for (const BenchRecord& r : records) {
        os << r.method << ',' << r.n << ',' << r.height << ',' << r.width << ','
           << r.d_k << ',' << r.kappa << ',' << r.b << ',' << r.variant << ','
           << r.seconds_mean << ',' << r.seconds_std << ',' << r.reps << ','
           << r.threads << ',' << r.seed << '\n';
    }
}

void write_gnuplot_data(const BenchResult& result, std::ostream& os) {
    bool first = true;
    std::vector<std::string> methods;
    for (const BenchRecord& r : result.records) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
            methods.push_back(r.method);
        }
    }
    for (const std::string& method : methods) {
        if (!first) os << "\n\n";
        first = false;
        os << "# method: " << method;
        const auto it = result.exponents.find(method);
        if (it != result.exponents.end()) os << " (slope " << it->second << ")";
        os << "\n# n seconds_mean seconds_std\n";
        for (const BenchRecord& r : result.records) {
            if (r.method != method) continue;
            os << r.n << ' ' << r.seconds_mean << ' ' << r.seconds_std;
            if (r.timed_out) os << " # timed out";
            os << '\n';
        }
    }
}

std::vector<QualityRow> quality_report_sets(const FieldImage& Q,
                                            const FieldImage& K,
                                            const FieldImage& V,
                                            const std::vector<LabeledSets>& entries,
                                            int threads) {
    if (K.pixels() > (1 << 14)) {
        throw ArgumentError(
            "quality_report: raster exceeds the exact-oracle guard of 2^14 keys");
    }
    if (Q.depth() != K.depth()) {
        throw DimensionError("quality_report: query depth != key depth");
    }

    const int n_q = Q.pixels();
    const auto [oracle, weights] = full_attention_with_weights(Q, K, V, false, threads);
    const auto argmax = top_k_exact(Q, K, 1, threads);

    std::vector<QualityRow> rows;
    rows.reserve(entries.size());
    for (const LabeledSets& entry : entries) {
        const SparseIndexSets& sets = entry.sets;
        const AttentionOutput approx =
            sparse_attention_output(Q, K, V, sets, false, threads);

        std::vector<double> l2(static_cast<std::size_t>(n_q));
        std::vector<double> linf(static_cast<std::size_t>(n_q));
        std::vector<double> coverage(static_cast<std::size_t>(n_q));
        int hits = 0;
        for (int i = 0; i < n_q; ++i) {
            const auto a = approx.at_linear(i);
            const auto o = oracle.at_linear(i);
            double sq = 0.0, mx = 0.0;
            for (int c = 0; c < V.depth(); ++c) {
                const double d = a[c] - o[c];
                sq += d * d;
                mx = std::max(mx, std::abs(d));
            }
            l2[static_cast<std::size_t>(i)] = std::sqrt(sq);
            linf[static_cast<std::size_t>(i)] = mx;

            double mass = 0.0;
            const auto& set = sets.sets[static_cast<std::size_t>(i)];
            for (const std::int32_t j : set) mass += weights.at(i, j);
            coverage[static_cast<std::size_t>(i)] = mass;

            const int arg = K.row_major(argmax[static_cast<std::size_t>(i)][0]);
            if (std::binary_search(set.begin(), set.end(), arg)) ++hits;
        }

        QualityRow row;
        row.label = entry.label;
        row.kappa = entry.kappa;
        row.b = entry.b;
        row.variant = entry.variant;
        row.median_l2 = median_of(l2);
        double mean_l2 = 0.0;
        for (double v : l2) mean_l2 += v;
        row.mean_l2 = mean_l2 / n_q;
        row.median_linf = median_of(linf);
        row.max_linf = *std::max_element(linf.begin(), linf.end());
        row.median_coverage = median_of(coverage);
        row.argmax_hit_rate = static_cast<double>(hits) / n_q;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<QualityRow> quality_report(const FieldImage& Q, const FieldImage& K,
                                       const FieldImage& V,
                                       const std::vector<QualityConfig>& configs,
                                       int threads) {
    std::vector<LabeledSets> entries;
    entries.reserve(configs.size());
    for (const QualityConfig& qc : configs) {
        const auto fields = top_kappa(Q, K, qc.kappa, qc.policy, qc.patchmatch,
                                      false, threads);
        LabeledSets entry;
        entry.label = qc.label;
        entry.sets = expand_neighbourhood(fields, qc.b, false);
        entry.kappa = qc.kappa;
        entry.b = qc.b;
        entry.variant = qc.policy.kind == ValidityPolicy::Kind::MaxNonDuplicate
                            ? "max"
                            : "mode";
        entries.push_back(std::move(entry));
    }
    return quality_report_sets(Q, K, V, entries, threads);
}

void write_quality_csv(const std::vector<QualityRow>& rows, std::ostream& os) {
    os << "label,kappa,b,variant,median_l2,mean_l2,median_linf,max_linf,"
          "median_coverage,argmax_hit_rate\n";
    for (const QualityRow& r : rows) {
        os << r.label << ',' << r.kappa << ',' << r.b << ',' << r.variant << ','
           << r.median_l2 << ',' << r.mean_l2 << ',' << r.median_linf << ','
           << r.max_linf << ',' << r.median_coverage << ',' << r.argmax_hit_rate
           << '\n';
    }
}

}  // namespace scram
