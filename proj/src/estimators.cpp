#include "scram/estimators.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "scram/kernels.hpp"
#include "scram/parallel.hpp"

namespace scram {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum StreamTag : std::uint64_t { kSnisStream = 0x5151, kMhStream = 0x6a6a };

// 1D discrete RBF weights exp(-t^2 / (2 phi^2)) for t in [0, span).
std::vector<double> kernel_1d(int span, double phi) {
    std::vector<double> w(static_cast<std::size_t>(span));
    const double inv = 1.0 / (2.0 * phi * phi);
    for (int t = 0; t < span; ++t) {
        w[static_cast<std::size_t>(t)] = std::exp(-static_cast<double>(t) * t * inv);
    }
    return w;
}

// Normalizers of the grid-restricted RBF centered at c along one axis.
double axis_normalizer(int c, int extent, const std::vector<double>& kern) {
    double z = 0.0;
    for (int t = 0; t < extent; ++t) {
        z += kern[static_cast<std::size_t>(t > c ? t - c : c - t)];
    }
    return z;
}

int sample_cdf(const std::vector<double>& cdf, double total, StreamRng& rng) {
    const double u = rng.next_double() * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const int idx = static_cast<int>(it - cdf.begin());
    return std::min(idx, static_cast<int>(cdf.size()) - 1);
}

// Per-query sampler for the mixture importance distribution. pmf()
// matches importance_pmf() value-for-value (same kernel sums).
struct MixtureSampler {
    int height, width;
    double alpha, phi;
    std::span<const PixelIndex> modes;
    const std::vector<double>& kern;  // shared 1D kernel table
    std::vector<double> z_row, z_col;           // per mode
    std::vector<std::vector<double>> row_cdf;   // per mode, over y
    std::vector<std::vector<double>> col_cdf;   // per mode, over x

    MixtureSampler(int h, int w, double a, double p,
                   std::span<const PixelIndex> m, const std::vector<double>& k)
        : height(h), width(w), alpha(a), phi(p), modes(m), kern(k) {
        z_row.reserve(modes.size());
        z_col.reserve(modes.size());
        row_cdf.reserve(modes.size());
        col_cdf.reserve(modes.size());
        for (const PixelIndex mode : modes) {
            z_row.push_back(axis_normalizer(mode.y, height, kern));
            z_col.push_back(axis_normalizer(mode.x, width, kern));
            std::vector<double> rc(static_cast<std::size_t>(height));
            double acc = 0.0;
            for (int y = 0; y < height; ++y) {
                acc += kern[static_cast<std::size_t>(std::abs(y - mode.y))];
                rc[static_cast<std::size_t>(y)] = acc;
            }
            row_cdf.push_back(std::move(rc));
            std::vector<double> cc(static_cast<std::size_t>(width));
            acc = 0.0;
            for (int x = 0; x < width; ++x) {
                acc += kern[static_cast<std::size_t>(std::abs(x - mode.x))];
                cc[static_cast<std::size_t>(x)] = acc;
            }
            col_cdf.push_back(std::move(cc));
        }
    }

    double pmf(int j) const {
        const int n = height * width;
        double r = (1.0 - alpha) / n;
        if (alpha > 0.0 && !modes.empty()) {
            const int y = j / width;
            const int x = j % width;
            double g_sum = 0.0;
            for (std::size_t m = 0; m < modes.size(); ++m) {
                const double gy =
                    kern[static_cast<std::size_t>(std::abs(y - modes[m].y))] / z_row[m];
                const double gx =
                    kern[static_cast<std::size_t>(std::abs(x - modes[m].x))] / z_col[m];
                g_sum += gy * gx;
            }
            r += alpha * g_sum / static_cast<double>(modes.size());
        }
        return r;
    }

    int sample(StreamRng& rng) const {
        const int n = height * width;
        if (!modes.empty() && alpha > 0.0 && rng.next_double() < alpha) {
            const std::size_t m = rng.next_below(static_cast<std::uint32_t>(modes.size()));
            const int y = sample_cdf(row_cdf[m], z_row[m], rng);
            const int x = sample_cdf(col_cdf[m], z_col[m], rng);
            return y * width + x;
        }
        return static_cast<int>(rng.next_below(static_cast<std::uint32_t>(n)));
    }
};

}  // namespace

ModeSet ModeSet::from_fields(std::span<const NeighbourField> fields) {
    if (fields.empty()) throw ArgumentError("ModeSet: no fields");
    ModeSet ms;
    ms.key_height = fields.front().key_height();
    ms.key_width = fields.front().key_width();
    ms.modes.resize(static_cast<std::size_t>(fields.front().pixels()));
    for (int i = 0; i < fields.front().pixels(); ++i) {
        for (const NeighbourField& f : fields) {
            const PixelIndex m = f.at_linear(i);
            if (!NeighbourField::is_sentinel(m)) {
                ms.modes[static_cast<std::size_t>(i)].push_back(m);
            }
        }
    }
    return ms;
}

void SnisConfig::validate() const {
    if (samples < 1) throw ArgumentError("SnisConfig: samples must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ArgumentError("SnisConfig: alpha must lie in [0, 1]");
    }
    if (!(phi > 0.0)) throw ArgumentError("SnisConfig: phi must be > 0");
}

void MhConfig::validate() const {
    if (chains < 1) throw ArgumentError("MhConfig: chains must be >= 1");
    if (steps < 1) throw ArgumentError("MhConfig: steps must be >= 1");
    if (!(phi > 0.0)) throw ArgumentError("MhConfig: phi must be > 0");
}

double unnormalized_target(std::span<const float> q, std::span<const float> k,
                           int d_k) {
    if (d_k < 1 || q.size() != static_cast<std::size_t>(d_k) ||
        k.size() != static_cast<std::size_t>(d_k)) {
        throw DimensionError("unnormalized_target: vector lengths must equal d_k");
    }
    const double a = kernels::active().dot(q.data(), k.data(), d_k) /
                     std::sqrt(static_cast<double>(d_k));
    return std::exp(a);
}

double importance_pmf(int j, std::span<const PixelIndex> modes, double alpha,
                      double phi, int height, int width) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ArgumentError("importance_pmf: alpha must lie in [0, 1]");
    }
    if (!(phi > 0.0)) throw ArgumentError("importance_pmf: phi must be > 0");
    if (height < 1 || width < 1 || j < 0 || j >= height * width) {
        throw ArgumentError("importance_pmf: index outside the raster");
    }
    if (alpha == 1.0 && modes.empty()) {
        throw ArgumentError("importance_pmf: alpha = 1 requires at least one mode");
    }
    const std::vector<double> kern = kernel_1d(std::max(height, width), phi);
    const MixtureSampler s(height, width, alpha, phi, modes, kern);
    return s.pmf(j);
}

std::pair<AttentionOutput, SnisDiagnostics> snis_estimate(
    const FieldImage& Q, const FieldImage& K, const FieldImage& V,
    const ModeSet& modes, const SnisConfig& config, int threads) {
    config.validate();
    if (Q.depth() != K.depth()) {
        throw DimensionError("snis_estimate: query depth != key depth");
    }
    if (K.height() != V.height() || K.width() != V.width()) {
        throw DimensionError("snis_estimate: key/value shape mismatch");
    }
    if (modes.key_height != K.height() || modes.key_width != K.width() ||
        static_cast<int>(modes.modes.size()) != Q.pixels()) {
        throw DimensionError("snis_estimate: mode set does not match fields");
    }

    const int n_q = Q.pixels();
    const int d_k = Q.depth();
    const int d_v = V.depth();
    const int t_s = config.samples;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    const auto& kt = kernels::active();
    const std::vector<double> kern =
        kernel_1d(std::max(K.height(), K.width()), config.phi);

    AttentionOutput out(Q.height(), Q.width(), d_v);
    SnisDiagnostics diag;
    diag.ess.assign(static_cast<std::size_t>(n_q), 0.0);
    diag.variance.assign(static_cast<std::size_t>(n_q) * d_v, 0.0);
    diag.log_weight_sum.assign(static_cast<std::size_t>(n_q), 0.0);

    std::atomic<bool> alpha_without_modes{false};
    parallel_for(0, n_q, threads, [&](int i) {
        const auto& mode_row = modes.modes[static_cast<std::size_t>(i)];
        if (config.alpha == 1.0 && mode_row.empty()) {
            alpha_without_modes.store(true);
            return;
        }
        const MixtureSampler sampler(K.height(), K.width(), config.alpha,
                                     config.phi, mode_row, kern);
        StreamRng rng(config.seed ^ kSnisStream, static_cast<std::uint64_t>(i));
        const auto q = Q.at_linear(i);

        std::vector<int> draws(static_cast<std::size_t>(t_s));
        std::vector<double> logw(static_cast<std::size_t>(t_s));
        double max_lw = kNegInf;
        for (int t = 0; t < t_s; ++t) {
            const int j = sampler.sample(rng);
            draws[static_cast<std::size_t>(t)] = j;
            const double a = scale * kt.dot(q.data(), K.at_linear(j).data(), d_k);
            const double lw = a - std::log(sampler.pmf(j));
            logw[static_cast<std::size_t>(t)] = lw;
            max_lw = std::max(max_lw, lw);
        }

        double wsum = 0.0, wsq = 0.0;
        auto o = out.at_linear_mut(i);
        for (int t = 0; t < t_s; ++t) {
            const double w = std::exp(logw[static_cast<std::size_t>(t)] - max_lw);
            logw[static_cast<std::size_t>(t)] = w;  // reuse as linear weight
            wsum += w;
            wsq += w * w;
            const auto v = V.at_linear(draws[static_cast<std::size_t>(t)]);
            for (int c = 0; c < d_v; ++c) o[c] += w * static_cast<double>(v[c]);
        }
        const double inv = 1.0 / wsum;
        for (int c = 0; c < d_v; ++c) o[c] *= inv;

        diag.ess[static_cast<std::size_t>(i)] = wsum * wsum / wsq;
        diag.log_weight_sum[static_cast<std::size_t>(i)] = max_lw + std::log(wsum);
        double* var = diag.variance.data() + static_cast<std::size_t>(i) * d_v;
        for (int t = 0; t < t_s; ++t) {
            const double wn = logw[static_cast<std::size_t>(t)] * inv;
            const auto v = V.at_linear(draws[static_cast<std::size_t>(t)]);
            for (int c = 0; c < d_v; ++c) {
                const double dlt = static_cast<double>(v[c]) - o[c];
                var[c] += wn * wn * dlt * dlt;
            }
        }
    });
    if (alpha_without_modes.load()) {
        throw ArgumentError("snis_estimate: alpha = 1 requires modes for every query");
    }
    return {std::move(out), std::move(diag)};
}

MhProposal::MhProposal(int height, int width, double phi)
    : height_(height), width_(width), phi_(phi) {
    if (height < 1 || width < 1) throw ArgumentError("MhProposal: empty raster");
    if (!(phi > 0.0)) throw ArgumentError("MhProposal: phi must be > 0");
    const auto build = [phi](int extent, std::vector<double>& weight,
                             std::vector<double>& cdf, double& total) {
        const int span = 2 * extent - 1;  // offsets -(extent-1) .. extent-1
        weight.resize(static_cast<std::size_t>(span));
        cdf.resize(static_cast<std::size_t>(span));
        const double inv = 1.0 / (2.0 * phi * phi);
        double acc = 0.0;
        for (int t = 0; t < span; ++t) {
            const double d = static_cast<double>(t - (extent - 1));
            weight[static_cast<std::size_t>(t)] = std::exp(-d * d * inv);
            acc += weight[static_cast<std::size_t>(t)];
            cdf[static_cast<std::size_t>(t)] = acc;
        }
        total = acc;
    };
    build(height_, row_weight_, row_cdf_, row_total_);
    build(width_, col_weight_, col_cdf_, col_total_);
}

double MhProposal::offset_pmf(int dy, int dx) const {
    if (dy <= -height_ || dy >= height_ || dx <= -width_ || dx >= width_) {
        return 0.0;
    }
    const double py = row_weight_[static_cast<std::size_t>(dy + height_ - 1)] / row_total_;
    const double px = col_weight_[static_cast<std::size_t>(dx + width_ - 1)] / col_total_;
    return py * px;
}

PixelIndex MhProposal::propose(PixelIndex current, StreamRng& rng) const {
    const int dy = sample_cdf(row_cdf_, row_total_, rng) - (height_ - 1);
    const int dx = sample_cdf(col_cdf_, col_total_, rng) - (width_ - 1);
    const PixelIndex t{current.y + dy, current.x + dx};
    if (t.y < 0 || t.y >= height_ || t.x < 0 || t.x >= width_) return current;
    return t;
}

std::pair<AttentionOutput, MhDiagnostics> mh_estimate(const FieldImage& Q,
                                                      const FieldImage& K,
                                                      const FieldImage& V,
                                                      const ModeSet& modes,
                                                      const MhConfig& config,
                                                      int threads) {
    config.validate();
    if (Q.depth() != K.depth()) {
        throw DimensionError("mh_estimate: query depth != key depth");
    }
    if (K.height() != V.height() || K.width() != V.width()) {
        throw DimensionError("mh_estimate: key/value shape mismatch");
    }
    if (modes.key_height != K.height() || modes.key_width != K.width() ||
        static_cast<int>(modes.modes.size()) != Q.pixels()) {
        throw DimensionError("mh_estimate: mode set does not match fields");
    }

    const int n_q = Q.pixels();
    const int n_k = K.pixels();
    const int d_k = Q.depth();
    const int d_v = V.depth();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    const auto& kt = kernels::active();
    const MhProposal proposal(K.height(), K.width(), config.phi);

    AttentionOutput out(Q.height(), Q.width(), d_v);
    MhDiagnostics diag;
    diag.chains = config.chains;
    diag.acceptance.assign(static_cast<std::size_t>(n_q) * config.chains, 0.0);
    if (config.record_visits) {
        diag.visit_counts.assign(static_cast<std::size_t>(n_q) * n_k, 0);
    }

    std::atomic<bool> missing_modes{false};
    parallel_for(0, n_q, threads, [&](int i) {
        const auto& mode_row = modes.modes[static_cast<std::size_t>(i)];
        if (mode_row.empty()) {
            missing_modes.store(true);
            return;
        }
        const auto q = Q.at_linear(i);
        const auto log_target = [&](PixelIndex p) {
            return scale * kt.dot(q.data(), K.at(p).data(), d_k);
        };

        auto o = out.at_linear_mut(i);
        std::uint32_t* visits =
            config.record_visits
                ? diag.visit_counts.data() + static_cast<std::size_t>(i) * n_k
                : nullptr;
        const double state_count =
            static_cast<double>(config.chains) * (config.steps + 1);

        for (int chain = 0; chain < config.chains; ++chain) {
            StreamRng rng(config.seed ^ kMhStream, static_cast<std::uint64_t>(i),
                          static_cast<std::uint64_t>(chain));
            PixelIndex state =
                mode_row[static_cast<std::size_t>(chain) % mode_row.size()];
            double state_log_p = log_target(state);
            int accepted = 0;

            auto tally = [&](PixelIndex s) {
                const auto v = V.at(s);
                for (int c = 0; c < d_v; ++c) o[c] += static_cast<double>(v[c]);
                if (visits != nullptr) ++visits[s.y * K.width() + s.x];
            };

            tally(state);
            for (int step = 0; step < config.steps; ++step) {
                const PixelIndex prop = proposal.propose(state, rng);
                if (prop == state) {
                    ++accepted;  // self-move, ratio 1
                } else {
                    const double prop_log_p = log_target(prop);
                    const double delta = prop_log_p - state_log_p;
                    bool accept = delta >= 0.0;
                    if (!accept) accept = rng.next_double() < std::exp(delta);
                    if (accept) {
                        state = prop;
                        state_log_p = prop_log_p;
                        ++accepted;
                    }
                }
                tally(state);
            }
            diag.acceptance[static_cast<std::size_t>(i) * config.chains + chain] =
                static_cast<double>(accepted) / config.steps;
        }
        for (int c = 0; c < d_v; ++c) o[c] /= state_count;
    });
    if (missing_modes.load()) {
        throw ArgumentError("mh_estimate: every query needs at least one mode");
    }
    return {std::move(out), std::move(diag)};
}

}  // namespace scram
