// Command-line surface: gen / attend / patchmatch / bench / quality.
// Results go to files or stdout (CSV); diagnostics to stderr.
// Exit codes: 0 ok, 1 usage, 2 data error, 3 infeasible policy or
// degenerate rows.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "scram/attention.hpp"
#include "scram/bench.hpp"
#include "scram/estimators.hpp"
#include "scram/io.hpp"
#include "scram/kernels.hpp"
#include "scram/patchmatch.hpp"
#include "scram/scram.hpp"
#include "scram/synth.hpp"

namespace {

// flag-consistency problems surface as exit code 1, like parser errors
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::uint64_t seed = 0;
    int threads = 1;
    std::string simd = "auto";
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--threads", c.threads, "worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--simd", c.simd, "kernel backend: auto|scalar|portable|avx2")
        ->check(CLI::IsMember({"auto", "scalar", "portable", "avx2"}))
        ->capture_default_str();
}

void apply_simd(const Common& c) {
    using scram::kernels::Backend;
    if (c.simd == "auto") {
        scram::kernels::select_best_backend();
    } else if (c.simd == "scalar") {
        scram::kernels::select_backend(Backend::Scalar);
    } else if (c.simd == "portable") {
        scram::kernels::select_backend(Backend::Portable);
    } else {
        scram::kernels::select_backend(Backend::Avx2);
    }
}

std::pair<int, int> parse_size(const std::string& text) {
    const auto x = text.find('x');
    if (x != std::string::npos) {
        try {
            const int h = std::stoi(text.substr(0, x));
            const int w = std::stoi(text.substr(x + 1));
            if (h >= 1 && w >= 1) return {h, w};
        } catch (const std::exception&) {
        }
    }
    throw UsageError("size must look like HxW: '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

scram::ValidityPolicy make_policy(const std::string& variant, int L) {
    if (variant == "max") return scram::ValidityPolicy::max_non_duplicate();
    return scram::ValidityPolicy::mode_separated(L);
}

// ---- gen ----------------------------------------------------------------

struct GenArgs {
    Common common;
    std::string kind;
    std::string size;
    int depth = 1;
    int count = 3;
    double amplitude = 1.0;
    double width = 1.5;
    int dk = 4;
    float lo = -1.0f, hi = 1.0f;
    std::string out;
    std::string out_q, out_k;
    std::string source;
};

int run_gen(const GenArgs& a) {
    apply_simd(a.common);
    const auto [h, w] = parse_size(a.size);

    scram::SyntheticSpec spec;
    spec.height = h;
    spec.width = w;
    spec.depth = a.depth;
    spec.seed = a.common.seed;
    spec.rank = a.dk;
    spec.blob_count = a.count;
    spec.blob_amplitude = a.amplitude;
    spec.blob_width = a.width;
    if (a.kind == "blobs") {
        spec.kind = scram::SyntheticSpec::Kind::GaussianBlobs;
    } else if (a.kind == "uniform") {
        spec.kind = scram::SyntheticSpec::Kind::UniformRandom;
    } else {
        spec.kind = scram::SyntheticSpec::Kind::LowRankSvd;
    }

    switch (spec.kind) {
        case scram::SyntheticSpec::Kind::GaussianBlobs: {
            if (a.out.empty()) throw UsageError("gen blobs: -o required");
            const auto blobs =
                scram::gen_blobs(spec.height, spec.width, spec.depth,
                                 spec.blob_count, spec.blob_amplitude,
                                 spec.blob_width, spec.seed);
            scram::write_field(blobs.field, a.out);
            for (const auto& c : blobs.centers) {
                std::cerr << "blob center: (" << c.y << "," << c.x << ")\n";
            }
            break;
        }
        case scram::SyntheticSpec::Kind::UniformRandom: {
            if (a.out.empty()) throw UsageError("gen uniform: -o required");
            scram::write_field(scram::gen_uniform(spec.height, spec.width,
                                                  spec.depth, spec.seed, a.lo, a.hi),
                               a.out);
            break;
        }
        case scram::SyntheticSpec::Kind::LowRankSvd: {
            if (a.out_q.empty() || a.out_k.empty()) {
                throw UsageError("gen lowrank: --out-q and --out-k required");
            }
            scram::Matrix source;
            if (!a.source.empty()) {
                const scram::FieldImage raster = scram::read_field(a.source);
                if (raster.depth() != 1) {
                    throw scram::ArgumentError(
                        "gen lowrank: source must be single-channel");
                }
                if (raster.height() != h * w || raster.width() != h * w) {
                    throw scram::ArgumentError(
                        "gen lowrank: source raster must be (H*W) x (H*W)");
                }
                source = scram::Matrix(raster.height(), raster.width());
                for (std::size_t i = 0; i < raster.data().size(); ++i) {
                    source.a[i] = raster.data()[i];
                }
            } else {
                source = scram::smooth_source(h, w, spec.seed);
            }
            const auto lr =
                scram::gen_lowrank_qk(source, h, w, h, w, spec.rank, spec.seed);
            if (lr.rank_deficient) {
                std::cerr << "source rank " << lr.effective_rank << " < d_k "
                          << spec.rank << "; zero-padded remaining channels\n";
            }
            scram::write_field(lr.queries, a.out_q);
            scram::write_field(lr.keys, a.out_k);
            break;
        }
    }
    return 0;
}

// ---- attend --------------------------------------------------------------

struct AttendArgs {
    Common common;
    std::string q_path, k_path, v_path, out;
    std::string estimator = "sparse";
    std::string variant = "max";
    int kappa = 1;
    int L = 2;
    int b = 0;
    bool causal = false;
    int iters = 8;
    int samples = 0;  // 0 -> kappa * (2b+1)^2
    double alpha = 0.9;
    double phi = 2.0;
    int chains = 0;  // 0 -> kappa
    int steps = 100;
    std::string diag;
    std::string heatmap;
    int heatmap_query = 0;
};

int run_attend(const AttendArgs& a) {
    apply_simd(a.common);
    const scram::FieldImage Q = scram::read_field(a.q_path);
    const scram::FieldImage K = scram::read_field(a.k_path);
    const scram::FieldImage V = scram::read_field(a.v_path);

    scram::ScramConfig cfg;
    cfg.kappa = a.kappa;
    cfg.b = a.b;
    cfg.policy = make_policy(a.variant, a.L);
    cfg.patchmatch.iterations = a.iters;
    cfg.patchmatch.seed = a.common.seed;
    cfg.causal = a.causal;

    scram::AttentionOutput out;
    std::vector<double> ess;
    std::vector<double> acceptance;  // mean per query

    if (a.estimator == "full") {
        out = scram::full_attention(Q, K, V, a.causal, a.common.threads);
    } else if (a.estimator == "sparse") {
        out = scram::scram_forward(Q, K, V, cfg, a.common.threads);
    } else {
        const auto fields = scram::top_kappa(Q, K, a.kappa, cfg.policy,
                                             cfg.patchmatch, a.causal,
                                             a.common.threads);
        const auto modes = scram::ModeSet::from_fields(fields);
        if (a.estimator == "snis") {
            scram::SnisConfig sc;
            sc.samples = a.samples > 0
                             ? a.samples
                             : a.kappa * (2 * a.b + 1) * (2 * a.b + 1);
            sc.alpha = a.alpha;
            sc.phi = a.phi;
            sc.seed = a.common.seed;
            auto [o, d] = scram::snis_estimate(Q, K, V, modes, sc, a.common.threads);
            out = std::move(o);
            ess = std::move(d.ess);
        } else {  // mh
            scram::MhConfig mc;
            mc.chains = a.chains > 0 ? a.chains : a.kappa;
            mc.steps = a.steps;
            mc.phi = a.phi;
            mc.seed = a.common.seed;
            auto [o, d] = scram::mh_estimate(Q, K, V, modes, mc, a.common.threads);
            out = std::move(o);
            acceptance.assign(static_cast<std::size_t>(Q.pixels()), 0.0);
            for (int i = 0; i < Q.pixels(); ++i) {
                double m = 0.0;
                for (int c = 0; c < d.chains; ++c) {
                    m += d.acceptance[static_cast<std::size_t>(i) * d.chains + c];
                }
                acceptance[static_cast<std::size_t>(i)] = m / d.chains;
            }
        }
    }

    scram::write_field(out.to_field(), a.out);

    if (!a.diag.empty()) {
        std::ostringstream df;
        df << "query,degenerate,normalizer,ess,acceptance_mean\n";
        for (int i = 0; i < out.pixels(); ++i) {
            df << i << ',' << int(out.degenerate[static_cast<std::size_t>(i)]) << ',';
            if (!out.normalizer.empty()) df << out.normalizer[static_cast<std::size_t>(i)];
            df << ',';
            if (!ess.empty()) df << ess[static_cast<std::size_t>(i)];
            df << ',';
            if (!acceptance.empty()) df << acceptance[static_cast<std::size_t>(i)];
            df << '\n';
        }
        scram::write_text(df.str(), a.diag);
    }

    if (!a.heatmap.empty()) {
        const int qi = a.heatmap_query;
        if (qi < 0 || qi >= Q.pixels()) {
            throw scram::ArgumentError("attend: --heatmap-query out of range");
        }
        std::vector<double> row(static_cast<std::size_t>(K.pixels()), 0.0);
        if (a.estimator == "full") {
            const auto [o2, weights] =
                scram::full_attention_with_weights(Q, K, V, a.causal, a.common.threads);
            const auto r = weights.row(qi);
            std::copy(r.begin(), r.end(), row.begin());
        } else {
            const auto fields = scram::top_kappa(Q, K, a.kappa, cfg.policy,
                                                 cfg.patchmatch, a.causal,
                                                 a.common.threads);
            const auto sets = scram::expand_neighbourhood(fields, a.b, a.causal);
            const auto& set = sets.sets[static_cast<std::size_t>(qi)];
            std::vector<double> scores;
            scores.reserve(set.size());
            for (const std::int32_t j : set) {
                scores.push_back(scram::compatibility(Q.at_linear(qi),
                                                      K.at_linear(j), Q.depth()));
            }
            if (!scores.empty()) {
                const auto probs = scram::softmax_row(scores);
                for (std::size_t t = 0; t < set.size(); ++t) {
                    row[static_cast<std::size_t>(set[t])] = probs[t];
                }
            }
        }
        scram::export_heatmap(row, K.height(), K.width(), a.heatmap);
    }
    return 0;
}

// ---- patchmatch ----------------------------------------------------------

struct PatchmatchArgs {
    Common common;
    std::string q_path, k_path, out;
    std::string variant = "max";
    int kappa = 1;
    int L = 2;
    bool causal = false;
    int iters = 8;
};

int run_patchmatch(const PatchmatchArgs& a) {
    apply_simd(a.common);
    const scram::FieldImage Q = scram::read_field(a.q_path);
    const scram::FieldImage K = scram::read_field(a.k_path);
    scram::PatchMatchConfig pc;
    pc.iterations = a.iters;
    pc.seed = a.common.seed;
    const auto fields = scram::top_kappa(Q, K, a.kappa, make_policy(a.variant, a.L),
                                         pc, a.causal, a.common.threads);
    scram::write_field(scram::encode_neighbour_fields(fields), a.out);
    return 0;
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
    Common common;
    std::string methods = "full,scram";
    std::string sizes = "32x32,64x64,128x128";
    int reps = 5;
    int dk = 3;
    int dv = 3;
    int kappa = 2;
    int b = 1;
    std::string variant = "max";
    int L = 2;
    double timeout = 120.0;
    std::string out;
    std::string plot;
};

int run_bench(const BenchArgs& a) {
    apply_simd(a.common);
    scram::BenchOptions opt;
    opt.methods = split_list(a.methods);
    for (const std::string& s : split_list(a.sizes)) {
        opt.sizes.push_back(parse_size(s));
    }
    opt.reps = a.reps;
    opt.seed = a.common.seed;
    opt.threads = a.common.threads;
    opt.d_k = a.dk;
    opt.d_v = a.dv;
    opt.kappa = a.kappa;
    opt.b = a.b;
    opt.policy = make_policy(a.variant, a.L);
    opt.timeout_seconds = a.timeout;

    const scram::BenchResult result = scram::run_scaling_bench(opt);

    if (a.out.empty()) {
        scram::write_bench_csv(result.records, std::cout);
    } else {
        std::ostringstream csv;
        scram::write_bench_csv(result.records, csv);
        scram::write_text(csv.str(), a.out);
    }
    if (!a.plot.empty()) {
        std::ostringstream data;
        scram::write_gnuplot_data(result, data);
        scram::write_text(data.str(), a.plot);
    }
    for (const auto& [method, slope] : result.exponents) {
        std::cerr << "fitted exponent " << method << ": " << slope << '\n';
    }
    return 0;
}

// ---- quality ---------------------------------------------------------------

struct QualityArgs {
    Common common;
    std::string q_path, k_path, v_path;
    std::string kappas = "1";
    std::string bs = "0";
    std::string variant = "max";
    int L = 2;
    int iters = 8;
    std::string out;
};

int run_quality(const QualityArgs& a) {
    apply_simd(a.common);
    const scram::FieldImage Q = scram::read_field(a.q_path);
    const scram::FieldImage K = scram::read_field(a.k_path);
    const scram::FieldImage V = scram::read_field(a.v_path);

    std::vector<scram::QualityConfig> configs;
    for (const std::string& ks : split_list(a.kappas)) {
        for (const std::string& bs : split_list(a.bs)) {
            scram::QualityConfig qc;
            qc.kappa = std::stoi(ks);
            qc.b = std::stoi(bs);
            qc.policy = make_policy(a.variant, a.L);
            qc.patchmatch.iterations = a.iters;
            qc.patchmatch.seed = a.common.seed;
            qc.label = a.variant + "-k" + ks + "-b" + bs;
            configs.push_back(std::move(qc));
        }
    }
    const auto rows = scram::quality_report(Q, K, V, configs, a.common.threads);
    if (a.out.empty()) {
        scram::write_quality_csv(rows, std::cout);
    } else {
        std::ostringstream csv;
        scram::write_quality_csv(rows, csv);
        scram::write_text(csv.str(), a.out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse approximate attention toolkit"};
    app.require_subcommand(1);

    GenArgs gen;
    CLI::App* cgen = app.add_subcommand("gen", "generate synthetic fields");
    add_common(cgen, gen.common);
    cgen->add_option("--kind", gen.kind, "blobs|uniform|lowrank")
        ->required()
        ->check(CLI::IsMember({"blobs", "uniform", "lowrank"}));
    cgen->add_option("--size", gen.size, "raster size HxW")->required();
    cgen->add_option("--depth", gen.depth)->check(CLI::PositiveNumber);
    cgen->add_option("--count", gen.count, "blob count");
    cgen->add_option("--amplitude", gen.amplitude);
    cgen->add_option("--width", gen.width, "blob sigma, pixels");
    cgen->add_option("--dk", gen.dk)->check(CLI::PositiveNumber);
    cgen->add_option("--lo", gen.lo);
    cgen->add_option("--hi", gen.hi);
    cgen->add_option("-o,--out", gen.out, "output field");
    cgen->add_option("--out-q", gen.out_q, "lowrank query field");
    cgen->add_option("--out-k", gen.out_k, "lowrank key field");
    cgen->add_option("--source", gen.source, "lowrank source raster (SCRF1/PGM)");

    AttendArgs at;
    CLI::App* cat = app.add_subcommand("attend", "run an attention forward pass");
    add_common(cat, at.common);
    cat->add_option("-q,--queries", at.q_path)->required();
    cat->add_option("-k,--keys", at.k_path)->required();
    cat->add_option("-v,--values", at.v_path)->required();
    cat->add_option("-o,--out", at.out)->required();
    cat->add_option("--estimator", at.estimator, "sparse|full|snis|mh")
        ->check(CLI::IsMember({"sparse", "full", "snis", "mh"}))
        ->capture_default_str();
    cat->add_option("--variant", at.variant)->check(CLI::IsMember({"max", "mode"}));
    cat->add_option("--kappa", at.kappa)->check(CLI::PositiveNumber);
    cat->add_option("-L,--separation", at.L);
    cat->add_option("--b", at.b, "neighbourhood half-width");
    cat->add_flag("--causal", at.causal);
    cat->add_option("--iters", at.iters)->check(CLI::PositiveNumber);
    cat->add_option("--samples", at.samples, "SNIS samples (0 = kappa*(2b+1)^2)");
    cat->add_option("--alpha", at.alpha);
    cat->add_option("--phi", at.phi);
    cat->add_option("--chains", at.chains, "MH chains (0 = kappa)");
    cat->add_option("--steps", at.steps)->check(CLI::PositiveNumber);
    cat->add_option("--diag", at.diag, "per-query diagnostics CSV");
    cat->add_option("--heatmap", at.heatmap, "PGM of one query's attention row");
    cat->add_option("--heatmap-query", at.heatmap_query);

    PatchmatchArgs pm;
    CLI::App* cpm = app.add_subcommand("patchmatch", "compute neighbour fields");
    add_common(cpm, pm.common);
    cpm->add_option("-q,--queries", pm.q_path)->required();
    cpm->add_option("-k,--keys", pm.k_path)->required();
    cpm->add_option("-o,--out", pm.out)->required();
    cpm->add_option("--variant", pm.variant)->check(CLI::IsMember({"max", "mode"}));
    cpm->add_option("--kappa", pm.kappa)->check(CLI::PositiveNumber);
    cpm->add_option("-L,--separation", pm.L);
    cpm->add_flag("--causal", pm.causal);
    cpm->add_option("--iters", pm.iters)->check(CLI::PositiveNumber);

    BenchArgs be;
    CLI::App* cbe = app.add_subcommand("bench", "runtime scaling benchmark");
    add_common(cbe, be.common);
    cbe->add_option("--methods", be.methods)->capture_default_str();
    cbe->add_option("--sizes", be.sizes)->capture_default_str();
    cbe->add_option("--reps", be.reps)->capture_default_str();
    cbe->add_option("--dk", be.dk)->capture_default_str();
    cbe->add_option("--dv", be.dv)->capture_default_str();
    cbe->add_option("--kappa", be.kappa)->capture_default_str();
    cbe->add_option("--b", be.b)->capture_default_str();
    cbe->add_option("--variant", be.variant)->check(CLI::IsMember({"max", "mode"}));
    cbe->add_option("-L,--separation", be.L);
    cbe->add_option("--timeout", be.timeout, "per-method warmup ceiling, seconds");
    cbe->add_option("-o,--out", be.out, "CSV path (default stdout)");
    cbe->add_option("--plot", be.plot, "gnuplot data path");

    QualityArgs qu;
    CLI::App* cqu = app.add_subcommand("quality", "approximation quality report");
    add_common(cqu, qu.common);
    cqu->add_option("-q,--queries", qu.q_path)->required();
    cqu->add_option("-k,--keys", qu.k_path)->required();
    cqu->add_option("-v,--values", qu.v_path)->required();
    cqu->add_option("--kappas", qu.kappas, "comma list")->capture_default_str();
    cqu->add_option("--bs", qu.bs, "comma list")->capture_default_str();
    cqu->add_option("--variant", qu.variant)->check(CLI::IsMember({"max", "mode"}));
    cqu->add_option("-L,--separation", qu.L);
    cqu->add_option("--iters", qu.iters);
    cqu->add_option("-o,--out", qu.out, "CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);  // --help
        }
        app.exit(e);
        return 1;
    }

    try {
        if (cgen->parsed()) return run_gen(gen);
        if (cat->parsed()) return run_attend(at);
        if (cpm->parsed()) return run_patchmatch(pm);
        if (cbe->parsed()) return run_bench(be);
        if (cqu->parsed()) return run_quality(qu);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const scram::InfeasiblePolicyError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const scram::DegenerateRowError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const scram::DegenerateNormalizerError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const scram::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
