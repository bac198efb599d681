#include <cmath>
#include <vector>

#include "doctest.h"

#include "atdl/errors.hpp"
#include "atdl/grad.hpp"
#include "support/oracles.hpp"
#include "support/util.hpp"

using atdl::index_t;
using atdl::InitConfig;
using atdl::Matrix;
using atdl::ModelParams;
using atdl::SequenceBatch;
using testutil::max_abs_diff;

namespace {

InitConfig gaussian(double v, std::uint64_t seed) {
    InitConfig cfg;
    cfg.kind = InitConfig::Kind::gaussian;
    cfg.v = v;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_SUITE("grad") {

TEST_CASE("zero parameters give exactly the log-vocabulary loss") {
    for (index_t v : {2u, 17u, 301u}) {
        const ModelParams p = atdl::init(2, v, 6, InitConfig{});
        const SequenceBatch b = oracle::markov_batch(v, 6, 5, v);
        const double l = atdl::loss(p, b).mean_nll;
        CHECK(l == doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-14));
    }
}

TEST_CASE("loss agrees with the straight-line reference") {
    for (std::uint64_t seed : {4ULL, 5ULL}) {
        ModelParams p = atdl::init(2, 6, 5, gaussian(1.3, seed));
        const SequenceBatch b = oracle::markov_batch(6, 5, 7, seed + 10, 3);
        CHECK(atdl::loss(p, b).mean_nll ==
              doctest::Approx(oracle::reference_loss(p, b)).epsilon(1e-12));
    }
}

TEST_CASE("per-sample losses average to the batch loss") {
    const ModelParams p = atdl::init(1, 5, 4, gaussian(1.1, 9));
    const SequenceBatch b = oracle::markov_batch(5, 4, 6, 19, 2);
    const auto rep = atdl::loss(p, b, {}, 1, true);
    REQUIRE(rep.per_sample.size() == 6);
    double mean = 0.0;
    for (double x : rep.per_sample) mean += x;
    mean /= 6.0;
    CHECK(rep.mean_nll == doctest::Approx(mean).epsilon(1e-13));

    // a subset selection reproduces the per-sample values
    const std::vector<index_t> idx = {2, 4};
    const auto sub = atdl::loss(p, b, idx, 1, false);
    CHECK(sub.mean_nll ==
          doctest::Approx(0.5 * (rep.per_sample[2] + rep.per_sample[4])).epsilon(1e-13));
}

TEST_CASE("analytic gradients match central finite differences on small models") {
    struct Cfg {
        index_t layers, v, t, n;
        std::uint64_t seed;
    };
    for (const Cfg cfg : {Cfg{1, 4, 3, 3, 1}, Cfg{2, 4, 4, 3, 2}, Cfg{3, 3, 5, 2, 3}}) {
        CAPTURE(cfg.layers);
        ModelParams p = atdl::init(cfg.layers, cfg.v, cfg.t, gaussian(1.6, cfg.seed));
        const SequenceBatch b = oracle::markov_batch(cfg.v, cfg.t, cfg.n, cfg.seed + 7, 2);
        const auto res = atdl::backward(p, b);
        const auto fd = oracle::fd_check_all(p, b, res.grads);
        CAPTURE(fd.worst_fd);
        CAPTURE(fd.worst_an);
        CHECK(fd.max_err < 1e-6);
    }
}

TEST_CASE("gradient of the attention scores vanishes while values are zero") {
    // with V = 0 the attention output never reaches the loss, so dW and dP
    // must be exactly zero even though W, P and W_O are nonzero
    ModelParams p = atdl::init(2, 5, 4, gaussian(1.4, 21));
    for (auto& v : p.value) v.fill(0.0);
    const SequenceBatch b = oracle::markov_batch(5, 4, 5, 33, 2);
    const auto res = atdl::backward(p, b);
    for (index_t l = 0; l < 2; ++l) {
        CHECK(res.grads.attn[l].max_abs() == 0.0);
        CHECK(res.grads.pos[l].max_abs() == 0.0);
        CHECK(res.grads.value[l].max_abs() > 0.0); // values themselves do get a gradient
    }
    CHECK(res.grads.out.max_abs() > 0.0);
}

TEST_CASE("batch gradients are the mean of per-sample gradients") {
    const ModelParams p = atdl::init(2, 4, 3, gaussian(1.2, 41));
    const SequenceBatch b = oracle::markov_batch(4, 3, 4, 51, 2);
    const auto full = atdl::backward(p, b);

    Matrix mean_out(4, 4);
    Matrix mean_attn(4, 4);
    for (index_t i = 0; i < b.size(); ++i) {
        const std::vector<index_t> one = {i};
        const auto r = atdl::backward(p, b, one);
        mean_out.add_scaled(r.grads.out, 1.0 / static_cast<double>(b.size()));
        mean_attn.add_scaled(r.grads.attn[1], 1.0 / static_cast<double>(b.size()));
    }
    CHECK(max_abs_diff(full.grads.out, mean_out) < 1e-14);
    CHECK(max_abs_diff(full.grads.attn[1], mean_attn) < 1e-14);
}

TEST_CASE("backward reports the same loss as the forward-only path") {
    const ModelParams p = atdl::init(2, 5, 4, gaussian(0.9, 61));
    const SequenceBatch b = oracle::markov_batch(5, 4, 6, 71, 3);
    const auto res = atdl::backward(p, b);
    CHECK(res.loss.mean_nll == doctest::Approx(atdl::loss(p, b).mean_nll).epsilon(1e-14));
}

TEST_CASE("parallel backward is reproducible and matches serial") {
    const ModelParams p = atdl::init(2, 6, 5, gaussian(1.0, 81));
    const SequenceBatch b = oracle::markov_batch(6, 5, 16, 91, 3);
    const auto r1 = atdl::backward(p, b, {}, 1);
    const auto r4 = atdl::backward(p, b, {}, 4);
    const auto r4b = atdl::backward(p, b, {}, 4);

    // same worker count twice: bitwise identical (fixed-order partial merge)
    CHECK(testutil::bitwise_equal(r4.grads.out, r4b.grads.out));
    for (index_t l = 0; l < 2; ++l) {
        CHECK(testutil::bitwise_equal(r4.grads.attn[l], r4b.grads.attn[l]));
        CHECK(testutil::bitwise_equal(r4.grads.value[l], r4b.grads.value[l]));
        CHECK(max_abs_diff(r4.grads.pos[l], r4b.grads.pos[l]) == 0.0);
    }
    CHECK(r4.loss.mean_nll == r4b.loss.mean_nll);

    // different worker counts regroup the per-sample sums, so only
    // summation-order rounding may differ
    CHECK(max_abs_diff(r1.grads.out, r4.grads.out) < 1e-13);
    for (index_t l = 0; l < 2; ++l) {
        CHECK(max_abs_diff(r1.grads.attn[l], r4.grads.attn[l]) < 1e-13);
        CHECK(max_abs_diff(r1.grads.value[l], r4.grads.value[l]) < 1e-13);
        CHECK(max_abs_diff(r1.grads.pos[l], r4.grads.pos[l]) < 1e-13);
    }
    CHECK(r1.loss.mean_nll == doctest::Approx(r4.loss.mean_nll).epsilon(1e-14));
}

TEST_CASE("first gradient of the output weights is the negative bigram statistic") {
    // at zero parameters the logits are zero, so the output gradient reduces
    // to the centered bigram matrix with a leading minus sign
    const ModelParams p = atdl::init(1, 6, 5, InitConfig{});
    const SequenceBatch b = oracle::markov_batch(6, 5, 10, 101, 2);
    const auto res = atdl::backward(p, b);
    const Matrix bbar = oracle::brute_bigram(b);
    Matrix neg = bbar;
    neg.scale(-1.0);
    CHECK(max_abs_diff(res.grads.out, neg) < 1e-13);
}

TEST_CASE("invalid sample selections are rejected") {
    const ModelParams p = atdl::init(1, 4, 3, InitConfig{});
    const SequenceBatch b = oracle::markov_batch(4, 3, 4, 111, 2);
    const std::vector<index_t> bad = {9};
    CHECK_THROWS_AS((void)atdl::loss(p, b, bad), atdl::value_error);
    CHECK_THROWS_AS((void)atdl::backward(p, b, bad), atdl::value_error);
}

} // TEST_SUITE
