#include "atdl/grad.hpp"

#include <cmath>
#include <numeric>

#include "atdl/linalg.hpp"
#include "atdl/parallel.hpp"

namespace atdl {

namespace {

struct Kahan {
    double sum = 0.0, carry = 0.0;
    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

// Residual R = Y - softmax(logits) plus the sample's total nll, both from
// one stable pass (per-row max subtraction, log-sum-exp for the nll).
double residual_and_nll(const Matrix& logits, std::span<const std::uint32_t> row, Matrix& r) {
    const index_t t_len = logits.rows(), v = logits.cols();
    double nll = 0.0;
    for (index_t t = 0; t < t_len; ++t) {
        const double* z = logits.row_data(t);
        double mx = z[0];
        for (index_t k = 1; k < v; ++k) mx = std::max(mx, z[k]);
        double denom = 0.0;
        double* rt = r.row_data(t);
        for (index_t k = 0; k < v; ++k) {
            rt[k] = std::exp(z[k] - mx);
            denom += rt[k];
        }
        const double inv = 1.0 / denom;
        for (index_t k = 0; k < v; ++k) rt[k] *= -inv;
        const std::uint32_t y = row[t + 1];
        rt[y] += 1.0;
        nll += mx + std::log(denom) - z[y];
    }
    return nll;
}

struct Partial {
    std::vector<Matrix> attn, value, s_sum;
    Matrix out;
    std::vector<Matrix> g_sum; // only when tracing
    Kahan nll;

    Partial(index_t layers, index_t v, index_t t_len, bool want_trace) {
        attn.assign(layers, Matrix(v, v));
        value.assign(layers, Matrix(v, v));
        s_sum.assign(layers, Matrix(t_len, t_len));
        out = Matrix(v, v);
        if (want_trace) g_sum.assign(layers, Matrix(t_len, v));
    }
};

std::vector<index_t> all_indices(index_t n) {
    std::vector<index_t> idx(n);
    std::iota(idx.begin(), idx.end(), index_t{0});
    return idx;
}

} // namespace

bool GradBundle::all_finite() const {
    for (const auto& w : attn)
        if (!w.all_finite()) return false;
    for (const auto& v : value)
        if (!v.all_finite()) return false;
    for (const auto& p : pos)
        if (!p.all_finite()) return false;
    return out.all_finite();
}

LossReport loss(const ModelParams& params, const SequenceBatch& batch,
                std::span<const index_t> sample_idx, index_t workers, bool want_per_sample) {
    if (batch.vocab_size != params.vocab_size || batch.seq_len != params.seq_len)
        throw dimension_error("loss: batch and model shapes disagree");
    std::vector<index_t> all;
    if (sample_idx.empty()) {
        all = all_indices(batch.size());
        sample_idx = all;
    }
    if (sample_idx.empty()) throw value_error("loss: no samples selected");
    for (index_t i : sample_idx)
        if (i >= batch.size()) throw value_error("loss: sample index out of range");

    const index_t t_len = params.seq_len, v = params.vocab_size;
    const index_t n = sample_idx.size();
    if (workers == 0) workers = 1;
    const index_t nw = std::min<index_t>(workers, n);

    std::vector<Kahan> partial(nw);
    LossReport rep;
    if (want_per_sample) rep.per_sample.assign(n, 0.0);

    parallel_chunks(n, nw, [&](index_t w, index_t begin, index_t end) {
        for (index_t i = begin; i < end; ++i) {
            auto row = batch.sample(sample_idx[i]);
            ForwardTrace tr = forward(params, row);
            double nll = 0.0;
            for (index_t t = 0; t < t_len; ++t) {
                const double* z = tr.logits.row_data(t);
                double mx = z[0];
                for (index_t k = 1; k < v; ++k) mx = std::max(mx, z[k]);
                double denom = 0.0;
                for (index_t k = 0; k < v; ++k) denom += std::exp(z[k] - mx);
                nll += mx + std::log(denom) - z[row[t + 1]];
            }
            partial[w].add(nll);
            if (want_per_sample) rep.per_sample[i] = nll / static_cast<double>(t_len);
        }
    });

    Kahan total;
    for (const auto& p : partial) total.add(p.sum);
    rep.mean_nll = total.sum / static_cast<double>(n * t_len);
    if (!std::isfinite(rep.mean_nll)) throw value_error("loss: nonfinite loss");
    return rep;
}

BackwardResult backward(const ModelParams& params, const SequenceBatch& batch,
                        std::span<const index_t> sample_idx, index_t workers, bool want_trace) {
    if (batch.vocab_size != params.vocab_size || batch.seq_len != params.seq_len)
        throw dimension_error("backward: batch and model shapes disagree");
    std::vector<index_t> all;
    if (sample_idx.empty()) {
        all = all_indices(batch.size());
        sample_idx = all;
    }
    if (sample_idx.empty()) throw value_error("backward: no samples selected");
    for (index_t i : sample_idx)
        if (i >= batch.size()) throw value_error("backward: sample index out of range");

    const index_t t_len = params.seq_len, v = params.vocab_size, layers = params.layers();
    const index_t n = sample_idx.size();
    if (workers == 0) workers = 1;
    const index_t nw = std::min<index_t>(workers, n);

    std::vector<Partial> parts;
    parts.reserve(nw);
    for (index_t w = 0; w < nw; ++w) parts.emplace_back(layers, v, t_len, want_trace);

    parallel_chunks(n, nw, [&](index_t w, index_t begin, index_t end) {
        Partial& acc = parts[w];
        Matrix r(t_len, v);
        for (index_t i = begin; i < end; ++i) {
            auto row = batch.sample(sample_idx[i]);
            ForwardTrace tr = forward(params, row);
            acc.nll.add(residual_and_nll(tr.logits, row, r));

            matmul_tn_acc(acc.out, tr.h[layers], r);
            Matrix g = matmul_nt(r, params.out); // state gradient at the top layer

            for (index_t li = layers; li-- > 0;) {
                const Matrix& h = tr.h[li];
                const Matrix& a = tr.attn[li];
                if (want_trace) acc.g_sum[li].add_scaled(g, 1.0);

                Matrix atg = matmul_tn(a, g);
                if (li == 0) {
                    // h is one-hot: h^T atg is a row scatter by token id
                    for (index_t t = 0; t < t_len; ++t) {
                        const double* src = atg.row_data(t);
                        double* dst = acc.value[0].row_data(row[t]);
                        for (index_t k = 0; k < v; ++k) dst[k] += src[k];
                    }
                } else {
                    matmul_tn_acc(acc.value[li], h, atg);
                }

                Matrix gvt = matmul_nt(g, params.value[li]);
                Matrix da(t_len, t_len);
                if (li == 0) {
                    for (index_t t = 0; t < t_len; ++t) {
                        const double* src = gvt.row_data(t);
                        double* dst = da.row_data(t);
                        for (index_t m = 0; m <= t; ++m) dst[m] = src[row[m]];
                    }
                } else {
                    da = matmul_nt(gvt, h);
                }

                Matrix s = ein_masked_rowscale(a, da);
                acc.s_sum[li].add_scaled(s, 1.0);

                if (li == 0) {
                    // token-pair scatter; duplicate ids aggregate as required
                    for (index_t t = 0; t < t_len; ++t) {
                        const double* st = s.row_data(t);
                        for (index_t c = 0; c <= t; ++c)
                            acc.attn[0](row[t], row[c]) += st[c];
                    }
                } else {
                    Matrix sh = matmul(s, h);
                    matmul_tn_acc(acc.attn[li], h, sh);
                    // state gradient for the layer below
                    matmul_nt_acc(g, atg, params.value[li]);
                    matmul_nt_acc(g, sh, params.attn[li]);
                    Matrix sth = matmul_tn(s, h);
                    matmul_acc(g, sth, params.attn[li]);
                }
            }
        }
    });

    // merge partials in worker order, then apply the -1/(N T) batch factor
    for (index_t w = 1; w < nw; ++w) {
        for (index_t l = 0; l < layers; ++l) {
            parts[0].attn[l].add_scaled(parts[w].attn[l], 1.0);
            parts[0].value[l].add_scaled(parts[w].value[l], 1.0);
            parts[0].s_sum[l].add_scaled(parts[w].s_sum[l], 1.0);
            if (want_trace) parts[0].g_sum[l].add_scaled(parts[w].g_sum[l], 1.0);
        }
        parts[0].out.add_scaled(parts[w].out, 1.0);
        parts[0].nll.add(parts[w].nll.sum);
    }

    const double factor = -1.0 / static_cast<double>(n * t_len);
    BackwardResult res;
    res.grads.attn = std::move(parts[0].attn);
    res.grads.value = std::move(parts[0].value);
    res.grads.out = std::move(parts[0].out);
    res.grads.pos.reserve(layers);
    for (index_t l = 0; l < layers; ++l) {
        res.grads.attn[l].scale(factor);
        res.grads.value[l].scale(factor);
        PosVector p = dm_collapse(parts[0].s_sum[l]);
        p.scale(factor);
        res.grads.pos.push_back(std::move(p));
    }
    res.grads.out.scale(factor);
    if (want_trace) {
        res.grads.has_trace = true;
        res.grads.score_grad_sum = std::move(parts[0].s_sum);
        res.grads.state_grad_sum = std::move(parts[0].g_sum);
    }
    res.loss.mean_nll = parts[0].nll.sum / static_cast<double>(n * t_len);
    if (!std::isfinite(res.loss.mean_nll)) throw value_error("backward: nonfinite loss");
    return res;
}

} // namespace atdl
