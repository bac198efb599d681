#include <cmath>
#include <vector>

#include "doctest.h"

#include "atdl/errors.hpp"
#include "atdl/model.hpp"
#include "support/oracles.hpp"
#include "support/util.hpp"

using atdl::index_t;
using atdl::InitConfig;
using atdl::Matrix;
using atdl::ModelParams;
using testutil::max_abs_diff;

namespace {

InitConfig gaussian(double v, double xi, std::uint64_t seed) {
    InitConfig cfg;
    cfg.kind = InitConfig::Kind::gaussian;
    cfg.v = v;
    cfg.xi = xi;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_SUITE("model") {

TEST_CASE("zero initialization produces all-zero weights of the right shapes") {
    const ModelParams p = atdl::init(3, 7, 5, InitConfig{});
    CHECK(p.layers() == 3);
    CHECK(p.vocab_size == 7);
    CHECK(p.seq_len == 5);
    REQUIRE(p.attn.size() == 3);
    REQUIRE(p.value.size() == 3);
    REQUIRE(p.pos.size() == 3);
    for (index_t l = 0; l < 3; ++l) {
        CHECK(p.attn[l].rows() == 7);
        CHECK(p.attn[l].cols() == 7);
        CHECK(p.attn[l].frobenius_norm() == 0.0);
        CHECK(p.value[l].frobenius_norm() == 0.0);
        CHECK(p.pos[l].size() == 5);
        CHECK(p.pos[l].norm() == 0.0);
    }
    CHECK(p.out.rows() == 7);
    CHECK(p.out.frobenius_norm() == 0.0);
    CHECK(p.all_finite());
}

TEST_CASE("gaussian initialization is seed-deterministic and scales with v") {
    const ModelParams a = atdl::init(2, 11, 4, gaussian(1.0, 0.0, 42));
    const ModelParams b = atdl::init(2, 11, 4, gaussian(1.0, 0.0, 42));
    CHECK(testutil::bitwise_equal(a.out, b.out));
    CHECK(testutil::bitwise_equal(a.attn[1], b.attn[1]));

    const ModelParams c = atdl::init(2, 11, 4, gaussian(1.0, 0.0, 43));
    CHECK_FALSE(testutil::bitwise_equal(a.out, c.out));

    // doubling v doubles every entry drawn by the same seed
    const ModelParams d = atdl::init(2, 11, 4, gaussian(2.0, 0.0, 42));
    Matrix scaled = a.out;
    scaled.scale(2.0);
    CHECK(max_abs_diff(d.out, scaled) < 1e-12);
    CHECK(a.out.frobenius_norm() > 0.0);
}

TEST_CASE("init validates its arguments") {
    CHECK_THROWS_AS((void)atdl::init(0, 5, 4, InitConfig{}), atdl::value_error);
    CHECK_THROWS_AS((void)atdl::init(1, 1, 4, InitConfig{}), atdl::value_error);
    CHECK_THROWS_AS((void)atdl::init(1, 5, 0, InitConfig{}), atdl::value_error);
    CHECK_THROWS_AS((void)atdl::init(1, 5, 4, gaussian(-1.0, 0.0, 1)), atdl::value_error);
}

TEST_CASE("zero parameters pass input straight through to zero logits") {
    const ModelParams p = atdl::init(2, 5, 4, InitConfig{});
    const std::vector<std::uint32_t> ids = {3, 1, 4, 0, 2};
    const auto trace = atdl::forward(p, ids);
    REQUIRE(trace.h.size() == 3);
    // with V = 0 each layer adds nothing: h stays one-hot
    for (index_t s = 0; s < 3; ++s)
        for (index_t t = 0; t < 4; ++t)
            for (index_t j = 0; j < 5; ++j)
                CHECK(trace.h[s](t, j) == (j == ids[t] ? 1.0 : 0.0));
    CHECK(trace.logits.frobenius_norm() == 0.0);
    // zero scores give uniform attention over each causal prefix
    for (index_t t = 0; t < 4; ++t)
        for (index_t c = 0; c <= t; ++c)
            CHECK(trace.attn[0](t, c) == doctest::Approx(1.0 / (t + 1)).epsilon(1e-15));
}

TEST_CASE("zero value matrices keep the residual identity regardless of other weights") {
    ModelParams p = atdl::init(2, 6, 5, gaussian(1.5, 0.0, 7));
    for (auto& v : p.value) v.fill(0.0);
    const std::vector<std::uint32_t> ids = {5, 0, 3, 3, 1};
    const auto trace = atdl::forward(p, ids);
    for (index_t t = 0; t < 5; ++t)
        for (index_t j = 0; j < 6; ++j)
            CHECK(trace.h[2](t, j) == (j == ids[t] ? 1.0 : 0.0));
}

TEST_CASE("attention matrices are causal rows summing to one") {
    const ModelParams p = atdl::init(3, 6, 7, gaussian(0.8, 0.0, 13));
    const std::vector<std::uint32_t> ids = {0, 1, 2, 3, 4, 5, 0};
    const auto trace = atdl::forward(p, ids);
    for (const Matrix& a : trace.attn) {
        for (index_t r = 0; r < 7; ++r) {
            double sum = 0.0;
            for (index_t c = 0; c < 7; ++c) {
                if (c > r) CHECK(a(r, c) == 0.0);
                sum += a(r, c);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-13));
        }
        CHECK(a(0, 0) == 1.0);
    }
}

TEST_CASE("forward matches the straight-line reference implementation") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const index_t v = 6, t = 5, layers = 3;
        const ModelParams p = atdl::init(layers, v, t, gaussian(1.2, 0.1, seed));
        const auto batch = oracle::markov_batch(v, t, 4, seed + 100, 3);
        for (index_t i = 0; i < batch.size(); ++i) {
            const auto ids = batch.sample(i);
            const auto trace = atdl::forward(p, ids);
            const Matrix ref = oracle::reference_logits(p, ids);
            CHECK(max_abs_diff(trace.logits, ref) < 1e-12);
        }
    }
}

TEST_CASE("a batch row longer than seq_len is accepted and truncated") {
    const ModelParams p = atdl::init(1, 5, 3, gaussian(1.0, 0.0, 3));
    const std::vector<std::uint32_t> row = {1, 2, 3, 4}; // T + 1 ids
    const auto trace = atdl::forward(p, row);
    CHECK(trace.logits.rows() == 3);

    const std::vector<std::uint32_t> tooshort = {1, 2};
    CHECK_THROWS_AS((void)atdl::forward(p, tooshort), atdl::dimension_error);
    const std::vector<std::uint32_t> oov = {1, 9, 2};
    CHECK_THROWS_AS((void)atdl::forward(p, oov), atdl::value_error);
}

TEST_CASE("add_scaled_params updates every weight in place") {
    ModelParams p = atdl::init(2, 4, 3, gaussian(1.0, 0.0, 5));
    const ModelParams q = atdl::init(2, 4, 3, gaussian(0.5, 0.0, 6));
    ModelParams expect = p;
    p.add_scaled_params(q, -2.0);
    for (index_t l = 0; l < 2; ++l) {
        Matrix e = expect.attn[l];
        e.add_scaled(q.attn[l], -2.0);
        CHECK(max_abs_diff(p.attn[l], e) == 0.0);
        atdl::PosVector ep = expect.pos[l];
        ep.add_scaled(q.pos[l], -2.0);
        CHECK(max_abs_diff(p.pos[l], ep) == 0.0);
    }
    Matrix eo = expect.out;
    eo.add_scaled(q.out, -2.0);
    CHECK(max_abs_diff(p.out, eo) == 0.0);

    const ModelParams wrong = atdl::init(2, 5, 3, InitConfig{});
    CHECK_THROWS_AS(p.add_scaled_params(wrong, 1.0), atdl::dimension_error);
}

} // TEST_SUITE
