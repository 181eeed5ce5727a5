#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "scram/attention.hpp"
#include "scram/scram.hpp"
#include "scram/synth.hpp"

using namespace scram;

namespace {

// Dense masked-softmax oracle: softmax over the full score row with
// -inf outside the given index set.
std::vector<double> dense_restricted_row(const FieldImage& Q, const FieldImage& K,
                                         int query, const std::vector<std::int32_t>& set) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> scores(static_cast<std::size_t>(K.pixels()), -inf);
    for (const std::int32_t j : set) {
        double dot = 0.0;
        for (int c = 0; c < Q.depth(); ++c) {
            dot += static_cast<double>(Q.at_linear(query)[c]) * K.at_linear(j)[c];
        }
        scores[static_cast<std::size_t>(j)] = dot / std::sqrt(double(Q.depth()));
    }
    double m = -inf;
    for (const double s : scores) m = std::max(m, s);
    std::vector<double> p(scores.size(), 0.0);
    double sum = 0.0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (scores[j] == -inf) continue;
        p[j] = std::exp(scores[j] - m);
        sum += p[j];
    }
    for (double& v : p) v /= sum;
    return p;
}

NeighbourField single_field(int h, int w, int kh, int kw,
                            const std::vector<PixelIndex>& entries) {
    NeighbourField f(h, w, kh, kw);
    for (int i = 0; i < h * w; ++i) f.set_linear(i, entries[static_cast<std::size_t>(i)]);
    return f;
}

double linf_diff(const AttentionOutput& a, const AttentionOutput& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    }
    return m;
}

ScramConfig basic_config(int kappa, int b, std::uint64_t seed) {
    ScramConfig c;
    c.kappa = kappa;
    c.b = b;
    c.patchmatch.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("causal_mask_positions") {
    CHECK(causal_mask_positions(0, 0));
    CHECK(causal_mask_positions(5, 5));   // self masked
    CHECK(causal_mask_positions(5, 6));
    CHECK_FALSE(causal_mask_positions(5, 4));
}

TEST_CASE("expand_neighbourhood geometry") {
    SUBCASE("b = 0 returns exactly the match") {
        const auto f = single_field(1, 1, 4, 4, {{2, 3}});
        const auto sets = expand_neighbourhood(std::vector<NeighbourField>{f}, 0);
        CHECK(sets.sets[0] == std::vector<std::int32_t>{2 * 4 + 3});
    }

    SUBCASE("interior match expands to 9 cells, corner clips to 4") {
        const auto fi = single_field(1, 1, 4, 4, {{1, 1}});
        CHECK(expand_neighbourhood(std::vector<NeighbourField>{fi}, 1).sets[0].size() == 9);
        const auto fc = single_field(1, 1, 4, 4, {{0, 0}});
        CHECK(expand_neighbourhood(std::vector<NeighbourField>{fc}, 1).sets[0].size() == 4);
    }

    SUBCASE("overlapping windows deduplicate") {
        const auto f1 = single_field(1, 1, 8, 8, {{3, 3}});
        const auto f2 = single_field(1, 1, 8, 8, {{3, 4}});
        const std::vector<NeighbourField> fields = {f1, f2};
        const auto sets = expand_neighbourhood(fields, 1);
        CHECK(sets.sets[0].size() < 2u * 9u);
        CHECK(std::is_sorted(sets.sets[0].begin(), sets.sets[0].end()));
        CHECK(std::adjacent_find(sets.sets[0].begin(), sets.sets[0].end()) ==
              sets.sets[0].end());
    }

    SUBCASE("growing b never removes indices") {
        const FieldImage Q = gen_uniform(5, 5, 2, 1);
        const FieldImage K = gen_uniform(5, 5, 2, 2);
        PatchMatchConfig pc;
        pc.seed = 3;
        const auto fields = top_kappa(Q, K, 2, ValidityPolicy::max_non_duplicate(), pc);
        for (int b = 0; b < 4; ++b) {
            const auto small = expand_neighbourhood(fields, b);
            const auto big = expand_neighbourhood(fields, b + 1);
            for (int i = 0; i < Q.pixels(); ++i) {
                CHECK(std::includes(big.sets[static_cast<std::size_t>(i)].begin(),
                                    big.sets[static_cast<std::size_t>(i)].end(),
                                    small.sets[static_cast<std::size_t>(i)].begin(),
                                    small.sets[static_cast<std::size_t>(i)].end()));
            }
        }
    }

    SUBCASE("causal expansion drops indices at or past the query") {
        const auto f = single_field(2, 2, 2, 2, {{-1, -1}, {0, 0}, {0, 1}, {1, 1}});
        const std::vector<NeighbourField> fields = {f};
        const auto sets = expand_neighbourhood(fields, 1, true);
        CHECK(sets.sets[0].empty());
        for (int i = 1; i < 4; ++i) {
            for (const std::int32_t j : sets.sets[static_cast<std::size_t>(i)]) {
                CHECK(j < i);
            }
        }
    }
}

TEST_CASE("sparse_attention_output") {
    const FieldImage Q = gen_uniform(3, 3, 2, 11);
    const FieldImage K = gen_uniform(3, 3, 2, 12);
    const FieldImage V = gen_uniform(3, 3, 2, 13);

    SUBCASE("full support equals full attention") {
        SparseIndexSets sets;
        sets.key_height = 3;
        sets.key_width = 3;
        sets.sets.resize(9);
        for (auto& s : sets.sets) {
            for (int j = 0; j < 9; ++j) s.push_back(j);
        }
        const auto sparse = sparse_attention_output(Q, K, V, sets);
        const auto full = full_attention(Q, K, V);
        CHECK(linf_diff(sparse, full) < 1e-6);
    }

    SUBCASE("singleton support copies the value") {
        SparseIndexSets sets;
        sets.key_height = 3;
        sets.key_width = 3;
        sets.sets.assign(9, {4});
        const auto out = sparse_attention_output(Q, K, V, sets);
        for (int i = 0; i < 9; ++i) {
            CHECK(out.at_linear(i)[0] == doctest::Approx(V.at_linear(4)[0]));
            CHECK(out.at_linear(i)[1] == doctest::Approx(V.at_linear(4)[1]));
        }
    }

    SUBCASE("row sums over the support are 1") {
        PatchMatchConfig pc;
        pc.seed = 5;
        const auto fields = top_kappa(Q, K, 2, ValidityPolicy::max_non_duplicate(), pc);
        const auto sets = expand_neighbourhood(fields, 1);
        const auto out = sparse_attention_output(Q, K, V, sets);
        // normalizer diagnostics are finite log-sum-exp values
        for (int i = 0; i < 9; ++i) {
            CHECK(std::isfinite(out.normalizer[static_cast<std::size_t>(i)]));
            CHECK(out.degenerate[static_cast<std::size_t>(i)] == 0);
        }
    }

    SUBCASE("empty set outside causal mode throws") {
        SparseIndexSets sets;
        sets.key_height = 3;
        sets.key_width = 3;
        sets.sets.assign(9, {0});
        sets.sets[4].clear();
        CHECK_THROWS_AS(sparse_attention_output(Q, K, V, sets), DegenerateRowError);
    }
}

TEST_CASE("sparse output matches the dense masked-softmax oracle") {
    const FieldImage Q = gen_uniform(8, 8, 2, 5);
    const FieldImage K = gen_uniform(8, 8, 2, 6);
    const FieldImage V = gen_uniform(8, 8, 3, 7);
    const auto top = top_k_exact(Q, K, 4);
    SparseIndexSets sets;
    sets.key_height = 8;
    sets.key_width = 8;
    sets.sets.resize(64);
    for (int i = 0; i < 64; ++i) {
        for (const auto p : top[static_cast<std::size_t>(i)]) {
            sets.sets[static_cast<std::size_t>(i)].push_back(K.row_major(p));
        }
        std::sort(sets.sets[static_cast<std::size_t>(i)].begin(),
                  sets.sets[static_cast<std::size_t>(i)].end());
    }
    const auto out = sparse_attention_output(Q, K, V, sets);
    for (int i = 0; i < 64; ++i) {
        const auto probs = dense_restricted_row(Q, K, i, sets.sets[static_cast<std::size_t>(i)]);
        for (int c = 0; c < 3; ++c) {
            double expect = 0.0;
            for (int j = 0; j < 64; ++j) {
                expect += probs[static_cast<std::size_t>(j)] *
                          static_cast<double>(V.at_linear(j)[c]);
            }
            CHECK(out.at_linear(i)[c] == doctest::Approx(expect).epsilon(1e-6));
        }
    }
}

TEST_CASE("scram_forward with a full window equals full attention") {
    for (const auto [h, w] : {std::pair{4, 4}, std::pair{5, 3}}) {
        const FieldImage Q = gen_uniform(h, w, 3, 31u + h);
        const FieldImage K = gen_uniform(h, w, 3, 32u + h);
        const FieldImage V = gen_uniform(h, w, 2, 33u + h);
        const auto cfg = basic_config(1, std::max(h, w), 2);
        const auto approx = scram_forward(Q, K, V, cfg);
        const auto exact = full_attention(Q, K, V);
        CHECK(linf_diff(approx, exact) < 1e-5);
    }
}

TEST_CASE("scram_forward on constant keys averages windowed values") {
    FieldImage K(4, 4, 2);
    for (int i = 0; i < 16; ++i) {
        K.at_mut(i / 4, i % 4)[0] = 1.0f;
        K.at_mut(i / 4, i % 4)[1] = 0.5f;
    }
    const FieldImage Q = gen_uniform(4, 4, 2, 41);
    const FieldImage V = gen_uniform(4, 4, 2, 42);
    // with b covering the whole raster the output is the global mean
    const auto out = scram_forward(Q, K, V, basic_config(1, 4, 3));
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (int j = 0; j < 16; ++j) mean += V.at_linear(j)[c];
        mean /= 16.0;
        for (int i = 0; i < 16; ++i) {
            CHECK(out.at_linear(i)[c] == doctest::Approx(mean).epsilon(1e-6));
        }
    }
}

TEST_CASE("scram_forward error on the coherent family stays small") {
    const Matrix source = smooth_source(16, 16, 51);
    const auto lr = gen_lowrank_qk(source, 16, 16, 16, 16, 4, 51);
    const FieldImage V = gen_uniform(16, 16, 3, 52);
    ScramConfig cfg = basic_config(3, 1, 51);
    cfg.policy = ValidityPolicy::mode_separated(2);
    const auto approx = scram_forward(lr.queries, lr.keys, V, cfg);
    const auto exact = full_attention(lr.queries, lr.keys, V);

    std::vector<double> err;
    for (int i = 0; i < 256; ++i) {
        double e = 0.0;
        for (int c = 0; c < 3; ++c) {
            e = std::max(e, std::abs(approx.at_linear(i)[c] - exact.at_linear(i)[c]));
        }
        err.push_back(e);
    }
    std::nth_element(err.begin(), err.begin() + err.size() / 2, err.end());
    const double median = err[err.size() / 2];
    CHECK(median < 0.35);  // calibrated on the smooth family
}

TEST_CASE("scram_forward is deterministic and thread-count independent") {
    const FieldImage Q = gen_uniform(6, 6, 2, 61);
    const FieldImage K = gen_uniform(6, 6, 2, 62);
    const FieldImage V = gen_uniform(6, 6, 2, 63);
    const auto cfg = basic_config(2, 1, 64);
    const auto o1 = scram_forward(Q, K, V, cfg, 1);
    const auto o2 = scram_forward(Q, K, V, cfg, 2);
    const auto o3 = scram_forward(Q, K, V, cfg, 4);
    CHECK(o1.data == o2.data);
    CHECK(o1.data == o3.data);
}

TEST_CASE("causal scram ignores future keys and values") {
    const int h = 6, w = 6;
    const FieldImage Q = gen_uniform(h, w, 2, 71);
    const FieldImage K = gen_uniform(h, w, 2, 72);
    const FieldImage V = gen_uniform(h, w, 2, 73);
    ScramConfig cfg = basic_config(2, 1, 74);
    cfg.causal = true;
    const auto base = scram_forward(Q, K, V, cfg);
    CHECK(base.degenerate[0] == 1);

    // rewrite keys/values from position `cut` onward
    for (const int cut : {1, 7, 18, 30}) {
        FieldImage K2 = K;
        FieldImage V2 = V;
        const FieldImage rk = gen_uniform(h, w, 2, 1000u + cut);
        const FieldImage rv = gen_uniform(h, w, 2, 2000u + cut);
        for (int j = cut; j < h * w; ++j) {
            for (int c = 0; c < 2; ++c) {
                K2.at_mut(j / w, j % w)[c] = rk.at_linear(j)[c];
                V2.at_mut(j / w, j % w)[c] = rv.at_linear(j)[c];
            }
        }
        const auto mod = scram_forward(Q, K2, V2, cfg);
        for (int i = 0; i < cut; ++i) {
            for (int c = 0; c < 2; ++c) {
                CHECK(mod.at_linear(i)[c] == base.at_linear(i)[c]);  // bitwise
            }
        }
    }
}

TEST_CASE("causal outputs only depend on the past (support check)") {
    const FieldImage Q = gen_uniform(4, 4, 2, 81);
    const FieldImage K = gen_uniform(4, 4, 2, 82);
    ScramConfig cfg = basic_config(2, 1, 83);
    cfg.causal = true;
    const auto fields = top_kappa(Q, K, cfg.kappa, cfg.policy, cfg.patchmatch, true);
    validate_neighbour_fields(fields, cfg.policy, true);
    const auto sets = expand_neighbourhood(fields, cfg.b, true);
    for (int i = 0; i < 16; ++i) {
        for (const std::int32_t j : sets.sets[static_cast<std::size_t>(i)]) {
            CHECK(j < i);
        }
    }
}
