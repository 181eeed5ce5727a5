#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "scram/attention.hpp"
#include "scram/rng.hpp"
#include "scram/synth.hpp"

using namespace scram;

namespace {

// Independent double-loop oracle, written before the library path it
// checks. No kernels, no shared code with the implementation.
AttentionOutput oracle_attention(const FieldImage& Q, const FieldImage& K,
                                 const FieldImage& V) {
    AttentionOutput out(Q.height(), Q.width(), V.depth());
    const double scale = 1.0 / std::sqrt(static_cast<double>(Q.depth()));
    for (int i = 0; i < Q.pixels(); ++i) {
        std::vector<double> scores(static_cast<std::size_t>(K.pixels()));
        for (int j = 0; j < K.pixels(); ++j) {
            double dot = 0.0;
            for (int c = 0; c < Q.depth(); ++c) {
                dot += static_cast<double>(Q.at_linear(i)[c]) * K.at_linear(j)[c];
            }
            scores[static_cast<std::size_t>(j)] = dot * scale;
        }
        const double m = *std::max_element(scores.begin(), scores.end());
        double sum = 0.0;
        for (double& s : scores) {
            s = std::exp(s - m);
            sum += s;
        }
        for (int j = 0; j < K.pixels(); ++j) {
            const double p = scores[static_cast<std::size_t>(j)] / sum;
            for (int c = 0; c < V.depth(); ++c) {
                out.at_linear_mut(i)[c] += p * static_cast<double>(V.at_linear(j)[c]);
            }
        }
    }
    return out;
}

double max_abs_diff(const AttentionOutput& a, const AttentionOutput& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    }
    return m;
}

}  // namespace

TEST_CASE("field construction enforces its invariants") {
    CHECK_THROWS_AS(FieldImage(0, 3, 1), DimensionError);
    CHECK_THROWS_AS(FieldImage(2, 2, 1, {1.0f, 2.0f}), DimensionError);
    CHECK_THROWS_AS(
        FieldImage(1, 1, 2, {1.0f, std::numeric_limits<float>::quiet_NaN()}),
        ArgumentError);
    CHECK_THROWS_AS(
        FieldImage(1, 1, 2, {1.0f, std::numeric_limits<float>::infinity()}),
        ArgumentError);

    const FieldImage f(2, 3, 2);
    CHECK(f.pixels() == 6);
    CHECK(f.row_major({1, 2}) == 5);
    CHECK(f.from_row_major(5) == PixelIndex{1, 2});
    CHECK(f.in_bounds({1, 2}));
    CHECK_FALSE(f.in_bounds({2, 0}));
    CHECK_FALSE(f.in_bounds({0, -1}));
}

TEST_CASE("compatibility matches the scaled dot product") {
    const std::vector<float> zero = {0, 0, 0, 0};
    const std::vector<float> k1 = {1, 2, 3, 4};
    CHECK(compatibility(zero, k1, 4) == 0.0);

    const std::vector<float> q2 = {2, 0, 0, 0};
    CHECK(compatibility(q2, q2, 4) == doctest::Approx(2.0));

    const std::vector<float> a = {1, 1};
    const std::vector<float> b = {1, -1};
    CHECK(compatibility(a, b, 2) == 0.0);

    // symmetric in q and k
    CHECK(compatibility(k1, q2, 4) == compatibility(q2, k1, 4));

    CHECK_THROWS_AS(compatibility(a, k1, 4), DimensionError);
    CHECK_THROWS_AS(compatibility(a, b, 3), DimensionError);
}

TEST_CASE("softmax_row basics") {
    const std::vector<double> uniform = {2.5, 2.5, 2.5};
    const auto p = softmax_row(uniform);
    for (const double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    const std::vector<double> single = {-7.0};
    CHECK(softmax_row(single)[0] == 1.0);

    const std::vector<double> forced = {0.0, std::log(3.0)};
    const auto p2 = softmax_row(forced);
    CHECK(p2[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p2[1] == doctest::Approx(0.75).epsilon(1e-12));

    const double inf = std::numeric_limits<double>::infinity();
    const std::vector<double> masked = {-inf, 1.0, -inf};
    const auto p3 = softmax_row(masked);
    CHECK(p3[0] == 0.0);
    CHECK(p3[1] == 1.0);

    const std::vector<double> all_masked = {-inf, -inf};
    CHECK_THROWS_AS(softmax_row(all_masked), DegenerateRowError);
}

TEST_CASE("softmax_row is invariant under constant shifts") {
    StreamRng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> s(8);
        for (double& v : s) v = rng.next_double() * 10 - 5;
        const double shift = rng.next_double() * 200 - 100;
        auto shifted = s;
        for (double& v : shifted) v += shift;
        const auto p1 = softmax_row(s);
        const auto p2 = softmax_row(shifted);
        for (std::size_t i = 0; i < p1.size(); ++i) {
            CHECK(p2[i] == doctest::Approx(p1[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("full_attention collapses to the value on a single key") {
    const FieldImage Q = gen_uniform(2, 3, 2, 1);
    const FieldImage K(1, 1, 2, {0.5f, -0.25f});
    const FieldImage V(1, 1, 3, {1.0f, 2.0f, 3.0f});
    const auto out = full_attention(Q, K, V);
    for (int i = 0; i < Q.pixels(); ++i) {
        CHECK(out.at_linear(i)[0] == doctest::Approx(1.0));
        CHECK(out.at_linear(i)[1] == doctest::Approx(2.0));
        CHECK(out.at_linear(i)[2] == doctest::Approx(3.0));
    }
}

TEST_CASE("full_attention with identical keys averages the values") {
    const FieldImage Q = gen_uniform(3, 3, 2, 2);
    FieldImage K(4, 4, 2);
    for (int i = 0; i < K.pixels(); ++i) {
        K.at_mut(i / 4, i % 4)[0] = 0.7f;
        K.at_mut(i / 4, i % 4)[1] = -0.1f;
    }
    const FieldImage V = gen_uniform(4, 4, 2, 3);
    const auto out = full_attention(Q, K, V);
    double mean0 = 0.0, mean1 = 0.0;
    for (int j = 0; j < V.pixels(); ++j) {
        mean0 += V.at_linear(j)[0];
        mean1 += V.at_linear(j)[1];
    }
    mean0 /= V.pixels();
    mean1 /= V.pixels();
    for (int i = 0; i < Q.pixels(); ++i) {
        CHECK(out.at_linear(i)[0] == doctest::Approx(mean0).epsilon(1e-9));
        CHECK(out.at_linear(i)[1] == doctest::Approx(mean1).epsilon(1e-9));
    }
}

TEST_CASE("full_attention matches the independent double-loop oracle") {
    const FieldImage Q = gen_uniform(4, 4, 2, 7);
    const FieldImage K = gen_uniform(4, 4, 2, 8);
    const FieldImage V = gen_uniform(4, 4, 2, 9);
    const auto got = full_attention(Q, K, V);
    const auto expect = oracle_attention(Q, K, V);
    CHECK(max_abs_diff(got, expect) < 1e-6);
}

TEST_CASE("attention weight rows are stochastic") {
    const FieldImage Q = gen_uniform(4, 4, 3, 21);
    const FieldImage K = gen_uniform(4, 4, 3, 22);
    const FieldImage V = gen_uniform(4, 4, 2, 23);
    const auto [out, weights] = full_attention_with_weights(Q, K, V);
    for (int i = 0; i < weights.n_queries; ++i) {
        double sum = 0.0;
        for (int j = 0; j < weights.n_keys; ++j) {
            const double p = weights.at(i, j);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("per-row constant score shifts leave the output unchanged") {
    // keys carry an all-ones channel; changing the matching query
    // coordinate shifts that query's whole score row by a constant
    const int d = 3;
    FieldImage K = gen_uniform(4, 4, d, 31);
    for (int j = 0; j < K.pixels(); ++j) K.at_mut(j / 4, j % 4)[d - 1] = 1.0f;
    const FieldImage V = gen_uniform(4, 4, 2, 32);

    FieldImage Q1 = gen_uniform(4, 4, d, 33);
    FieldImage Q2 = Q1;
    StreamRng rng(34);
    for (int i = 0; i < Q2.pixels(); ++i) {
        Q2.at_mut(i / 4, i % 4)[d - 1] += static_cast<float>(rng.next_double() * 8 - 4);
    }
    const auto o1 = full_attention(Q1, K, V);
    const auto o2 = full_attention(Q2, K, V);
    CHECK(max_abs_diff(o1, o2) < 1e-6);
}

TEST_CASE("permuting key and value positions together changes nothing") {
    const FieldImage Q = gen_uniform(3, 5, 2, 41);
    const FieldImage K = gen_uniform(4, 4, 2, 42);
    const FieldImage V = gen_uniform(4, 4, 3, 43);

    std::vector<int> perm(static_cast<std::size_t>(K.pixels()));
    std::iota(perm.begin(), perm.end(), 0);
    StreamRng rng(44);
    for (int i = K.pixels() - 1; i > 0; --i) {
        std::swap(perm[static_cast<std::size_t>(i)],
                  perm[rng.next_below(static_cast<std::uint32_t>(i + 1))]);
    }
    FieldImage Kp(K.height(), K.width(), K.depth());
    FieldImage Vp(V.height(), V.width(), V.depth());
    for (int j = 0; j < K.pixels(); ++j) {
        const int src = perm[static_cast<std::size_t>(j)];
        for (int c = 0; c < K.depth(); ++c) {
            Kp.at_mut(j / K.width(), j % K.width())[c] = K.at_linear(src)[c];
        }
        for (int c = 0; c < V.depth(); ++c) {
            Vp.at_mut(j / V.width(), j % V.width())[c] = V.at_linear(src)[c];
        }
    }
    const auto o1 = full_attention(Q, K, V);
    const auto o2 = full_attention(Q, Kp, Vp);
    CHECK(max_abs_diff(o1, o2) < 1e-9);
}

TEST_CASE("full_attention is identical at any thread count") {
    const FieldImage Q = gen_uniform(5, 5, 3, 51);
    const FieldImage K = gen_uniform(5, 5, 3, 52);
    const FieldImage V = gen_uniform(5, 5, 2, 53);
    const auto o1 = full_attention(Q, K, V, false, 1);
    const auto o2 = full_attention(Q, K, V, false, 2);
    const auto o4 = full_attention(Q, K, V, false, 4);
    CHECK(o1.data == o2.data);
    CHECK(o1.data == o4.data);
}

TEST_CASE("full_attention rejects bad shapes") {
    const FieldImage Q = gen_uniform(2, 2, 2, 1);
    const FieldImage K3 = gen_uniform(2, 2, 3, 2);
    const FieldImage V = gen_uniform(2, 2, 1, 3);
    CHECK_THROWS_AS(full_attention(Q, K3, V), DimensionError);

    const FieldImage K = gen_uniform(3, 2, 2, 4);
    const FieldImage Vmis = gen_uniform(2, 2, 1, 5);
    CHECK_THROWS_AS(full_attention(Q, K, Vmis), DimensionError);

    // causal with differing query/key raster shapes
    const FieldImage Kb = gen_uniform(3, 2, 2, 6);
    const FieldImage Vb = gen_uniform(3, 2, 1, 7);
    CHECK_THROWS_AS(full_attention(Q, Kb, Vb, true), DimensionError);
}

TEST_CASE("nonlocal_mean special kernels") {
    const FieldImage Q = gen_uniform(3, 3, 2, 61);
    const FieldImage K = gen_uniform(3, 3, 2, 62);
    const FieldImage V = gen_uniform(3, 3, 2, 63);

    SUBCASE("constant weight gives the plain mean") {
        const auto out = nonlocal_mean(Q, K, V, [](auto, auto) { return 1.0; });
        for (int c = 0; c < V.depth(); ++c) {
            double mean = 0.0;
            for (int j = 0; j < V.pixels(); ++j) mean += V.at_linear(j)[c];
            mean /= V.pixels();
            for (int i = 0; i < Q.pixels(); ++i) {
                CHECK(out.at_linear(i)[c] == doctest::Approx(mean).epsilon(1e-12));
            }
        }
    }

    SUBCASE("exponential compatibility reproduces full attention") {
        const auto nl = nonlocal_mean(Q, K, V, [&](auto q, auto k) {
            return std::exp(compatibility(q, k, 2));
        });
        const auto fa = full_attention(Q, K, V);
        CHECK(max_abs_diff(nl, fa) < 1e-12);
    }

    SUBCASE("delta kernel picks a single value") {
        const auto target = K.at_linear(4);
        const auto out = nonlocal_mean(Q, K, V, [&](auto, auto k) {
            return k.data() == target.data() ? 1.0 : 0.0;
        });
        for (int i = 0; i < Q.pixels(); ++i) {
            for (int c = 0; c < V.depth(); ++c) {
                CHECK(out.at_linear(i)[c] ==
                      doctest::Approx(V.at_linear(4)[c]).epsilon(1e-12));
            }
        }
    }

    SUBCASE("zero normalizer throws") {
        CHECK_THROWS_AS(nonlocal_mean(Q, K, V, [](auto, auto) { return 0.0; }),
                        DegenerateNormalizerError);
    }
}

TEST_CASE("nonlocal_mean agrees with full attention on larger random fields") {
    for (const int side : {8, 16}) {
        const FieldImage Q = gen_uniform(side, side, 3, 71u + side);
        const FieldImage K = gen_uniform(side, side, 3, 72u + side);
        const FieldImage V = gen_uniform(side, side, 2, 73u + side);
        const auto nl = nonlocal_mean(Q, K, V, [&](auto q, auto k) {
            return std::exp(compatibility(q, k, 3));
        });
        const auto fa = full_attention(Q, K, V);
        CHECK(max_abs_diff(nl, fa) < 1e-12);
    }
}

TEST_CASE("top_k_exact against a full-sort oracle") {
    const FieldImage Q = gen_uniform(8, 8, 2, 3);
    const FieldImage K = gen_uniform(8, 8, 2, 4);
    const int kappa = 4;
    const auto got = top_k_exact(Q, K, kappa);

    const double scale = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < Q.pixels(); ++i) {
        std::vector<std::pair<double, int>> scored;
        for (int j = 0; j < K.pixels(); ++j) {
            double dot = 0.0;
            for (int c = 0; c < 2; ++c) {
                dot += static_cast<double>(Q.at_linear(i)[c]) * K.at_linear(j)[c];
            }
            scored.emplace_back(dot * scale, j);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            return a.first > b.first || (a.first == b.first && a.second < b.second);
        });
        for (int r = 0; r < kappa; ++r) {
            CHECK(K.row_major(got[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)]) ==
                  scored[static_cast<std::size_t>(r)].second);
        }
    }
}

TEST_CASE("top_k_exact edge cases") {
    const FieldImage Q = gen_uniform(2, 2, 2, 5);
    const FieldImage K = gen_uniform(2, 2, 2, 6);

    // kappa = n returns every index ordered by score
    const auto all = top_k_exact(Q, K, 4);
    for (const auto& row : all) {
        std::vector<int> seen;
        for (const auto p : row) seen.push_back(K.row_major(p));
        std::sort(seen.begin(), seen.end());
        CHECK(seen == std::vector<int>{0, 1, 2, 3});
    }

    CHECK_THROWS_AS(top_k_exact(Q, K, 5), ArgumentError);

    // a scaled copy of the query dominates everything orthogonal
    const FieldImage q1(1, 1, 2, {1.0f, 0.5f});
    FieldImage k4(2, 2, 2);
    k4.at_mut(0, 0)[0] = -0.5f;  // orthogonal to (1, .5)
    k4.at_mut(0, 0)[1] = 1.0f;
    k4.at_mut(0, 1)[0] = 10.0f;  // q scaled by 10
    k4.at_mut(0, 1)[1] = 5.0f;
    k4.at_mut(1, 0)[0] = 0.5f;
    k4.at_mut(1, 0)[1] = -1.0f;
    k4.at_mut(1, 1)[0] = -1.0f;
    k4.at_mut(1, 1)[1] = 2.0f;
    const auto best = top_k_exact(q1, k4, 1);
    CHECK(best[0][0] == PixelIndex{0, 1});
}

TEST_CASE("top_k_mode_exact") {
    SUBCASE("L = 0 equals top_k_exact") {
        const FieldImage Q = gen_uniform(4, 4, 2, 8);
        const FieldImage K = gen_uniform(4, 4, 2, 9);
        const auto plain = top_k_exact(Q, K, 3);
        const auto mode = top_k_mode_exact(Q, K, 3, 0);
        for (std::size_t i = 0; i < plain.size(); ++i) {
            CHECK(plain[i] == mode[i]);
        }
    }

    SUBCASE("two distant equal peaks are both selected") {
        const FieldImage q(1, 1, 1, {1.0f});
        FieldImage K(1, 8, 1);
        K.at_mut(0, 0)[0] = 5.0f;
        K.at_mut(0, 7)[0] = 5.0f;
        const auto picks = top_k_mode_exact(q, K, 2, 3);
        CHECK(picks[0][0] == PixelIndex{0, 0});  // tie broken by index
        CHECK(picks[0][1] == PixelIndex{0, 7});
    }

    SUBCASE("matches an exhaustive greedy oracle on a random field") {
        const FieldImage Q = gen_uniform(8, 8, 2, 3);
        const FieldImage K = gen_uniform(8, 8, 2, 4);
        const int kappa = 3, L = 2;
        const auto got = top_k_mode_exact(Q, K, kappa, L);
        const double scale = 1.0 / std::sqrt(2.0);
        for (int i = 0; i < Q.pixels(); ++i) {
            std::vector<double> score(static_cast<std::size_t>(K.pixels()));
            for (int j = 0; j < K.pixels(); ++j) {
                double dot = 0.0;
                for (int c = 0; c < 2; ++c) {
                    dot += static_cast<double>(Q.at_linear(i)[c]) * K.at_linear(j)[c];
                }
                score[static_cast<std::size_t>(j)] = dot * scale;
            }
            std::vector<PixelIndex> sel;
            for (int r = 0; r < kappa; ++r) {
                int arg = -1;
                for (int j = 0; j < K.pixels(); ++j) {
                    const PixelIndex pj = K.from_row_major(j);
                    bool ok = true;
                    for (const auto s : sel) {
                        if (chebyshev(pj, s) <= L) ok = false;
                    }
                    if (!ok) continue;
                    if (arg < 0 ||
                        score[static_cast<std::size_t>(j)] > score[static_cast<std::size_t>(arg)]) {
                        arg = j;
                    }
                }
                REQUIRE(arg >= 0);
                sel.push_back(K.from_row_major(arg));
            }
            CHECK(got[static_cast<std::size_t>(i)] == sel);
        }
    }

    SUBCASE("infeasible separation throws") {
        const FieldImage Q = gen_uniform(2, 2, 2, 5);
        const FieldImage K = gen_uniform(2, 2, 2, 6);
        CHECK_THROWS_AS(top_k_mode_exact(Q, K, 2, 4), InfeasiblePolicyError);
    }
}

TEST_CASE("causal full attention flags query 0 and zeroes its output") {
    const FieldImage Q = gen_uniform(3, 3, 2, 81);
    const FieldImage K = gen_uniform(3, 3, 2, 82);
    const FieldImage V = gen_uniform(3, 3, 2, 83);
    const auto out = full_attention(Q, K, V, true);
    CHECK(out.degenerate[0] == 1);
    CHECK(out.at_linear(0)[0] == 0.0);
    for (int i = 1; i < Q.pixels(); ++i) CHECK(out.degenerate[static_cast<std::size_t>(i)] == 0);
}
