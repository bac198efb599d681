#include "atdl/model.hpp"

#include <cmath>
#include <random>

#include "atdl/linalg.hpp"

namespace atdl {

namespace {

// Box-Muller over explicit mt19937_64 draws. Self-contained so that a seed
// pins the exact bit pattern of the parameters on every platform.
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1p-53; // (0, 1]
        const double u2 = static_cast<double>(rng_() >> 11) * 0x1p-53;         // [0, 1)
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

void fill_gaussian(Matrix& m, NormalSampler& normal, double sigma) {
    for (double& x : m.flat()) x = sigma * normal();
}

} // namespace

bool ModelParams::all_finite() const {
    for (const auto& w : attn)
        if (!w.all_finite()) return false;
    for (const auto& v : value)
        if (!v.all_finite()) return false;
    for (const auto& p : pos)
        if (!p.all_finite()) return false;
    return out.all_finite();
}

void ModelParams::add_scaled_params(const ModelParams& other, double s) {
    if (layers() != other.layers() || vocab_size != other.vocab_size || seq_len != other.seq_len)
        throw dimension_error("add_scaled_params: model shapes disagree");
    for (index_t l = 0; l < layers(); ++l) {
        attn[l].add_scaled(other.attn[l], s);
        value[l].add_scaled(other.value[l], s);
        pos[l].add_scaled(other.pos[l], s);
    }
    out.add_scaled(other.out, s);
}

ModelParams init(index_t layers, index_t vocab_size, index_t seq_len, const InitConfig& cfg) {
    if (layers == 0) throw value_error("init: at least one layer required");
    if (vocab_size < 2) throw value_error("init: vocabulary must have at least two tokens");
    if (seq_len == 0) throw value_error("init: sequence length must be positive");
    if (cfg.v < 0.0 || !std::isfinite(cfg.v)) throw value_error("init: scale v must be finite and nonnegative");

    ModelParams p;
    p.vocab_size = vocab_size;
    p.seq_len = seq_len;
    p.attn.assign(layers, Matrix(vocab_size, vocab_size));
    p.value.assign(layers, Matrix(vocab_size, vocab_size));
    p.pos.assign(layers, PosVector(seq_len));
    p.out = Matrix(vocab_size, vocab_size);

    if (cfg.kind == InitConfig::Kind::gaussian && cfg.v > 0.0) {
        const double sigma = cfg.v / std::pow(static_cast<double>(vocab_size), 1.0 + cfg.xi);
        NormalSampler normal(cfg.seed);
        // fixed draw order: per layer W, V, P; then the output matrix
        for (index_t l = 0; l < layers; ++l) {
            fill_gaussian(p.attn[l], normal, sigma);
            fill_gaussian(p.value[l], normal, sigma);
            for (double& x : p.pos[l].flat()) x = sigma * normal();
        }
        fill_gaussian(p.out, normal, sigma);
    }
    return p;
}

ForwardTrace forward(const ModelParams& params, std::span<const std::uint32_t> x_ids) {
    const index_t t_len = params.seq_len, v = params.vocab_size, layers = params.layers();
    if (x_ids.size() < t_len) throw dimension_error("forward: sample shorter than seq_len");
    for (index_t t = 0; t < t_len; ++t)
        if (x_ids[t] >= v) throw value_error("forward: token id outside vocabulary");

    ForwardTrace tr;
    tr.h.reserve(layers + 1);
    tr.attn.reserve(layers);

    Matrix x(t_len, v);
    for (index_t t = 0; t < t_len; ++t) x(t, x_ids[t]) = 1.0;
    tr.h.push_back(std::move(x));

    for (index_t l = 0; l < layers; ++l) {
        const Matrix& h = tr.h.back();
        const Matrix& w = params.attn[l];
        const PosVector& pv = params.pos[l];

        Matrix scores(t_len, t_len);
        if (l == 0) {
            // h is one-hot here, so h W h^T is a pure gather
            for (index_t r = 0; r < t_len; ++r) {
                const double* wr = w.row_data(x_ids[r]);
                double* sr = scores.row_data(r);
                for (index_t c = 0; c <= r; ++c) sr[c] = wr[x_ids[c]];
            }
        } else {
            Matrix hw = matmul(h, w);
            scores = matmul_nt(hw, h);
        }
        for (index_t r = 0; r < t_len; ++r) {
            double* sr = scores.row_data(r);
            for (index_t c = 0; c <= r; ++c) sr[c] += pv[r - c];
        }

        Matrix a = softmax_rows(scores, /*causal=*/true);

        Matrix ctx(t_len, v);
        if (l == 0) {
            for (index_t r = 0; r < t_len; ++r) {
                const double* ar = a.row_data(r);
                double* cr = ctx.row_data(r);
                for (index_t m = 0; m <= r; ++m) cr[x_ids[m]] += ar[m];
            }
        } else {
            ctx = matmul(a, h);
        }

        Matrix next = h;
        next.add_scaled(matmul(ctx, params.value[l]), 1.0);

        tr.attn.push_back(std::move(a));
        tr.h.push_back(std::move(next));
    }

    tr.logits = matmul(tr.h.back(), params.out);
    return tr;
}

} // namespace atdl
