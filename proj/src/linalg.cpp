#include "atdl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace atdl {

Matrix softmax_rows(const Matrix& scores, bool causal) {
    if (scores.empty()) throw dimension_error("softmax_rows: empty matrix");
    const index_t rows = scores.rows(), cols = scores.cols();
    Matrix out(rows, cols);
    for (index_t r = 0; r < rows; ++r) {
        const index_t support = causal ? std::min(r + 1, cols) : cols;
        const double* in = scores.row_data(r);
        double* o = out.row_data(r);
        double mx = in[0];
        for (index_t c = 1; c < support; ++c) mx = std::max(mx, in[c]);
        double denom = 0.0;
        for (index_t c = 0; c < support; ++c) {
            o[c] = std::exp(in[c] - mx);
            denom += o[c];
        }
        const double inv = 1.0 / denom;
        for (index_t c = 0; c < support; ++c) o[c] *= inv;
        // columns past the support stay exactly zero
    }
    return out;
}

Matrix dm_expand(const PosVector& p) {
    if (p.empty()) throw dimension_error("dm_expand: empty position vector");
    const index_t t = p.size();
    Matrix out(t, t);
    for (index_t r = 0; r < t; ++r)
        for (index_t c = 0; c <= r; ++c) out(r, c) = p[r - c];
    return out;
}

PosVector dm_collapse(const Matrix& s) {
    if (s.empty()) throw dimension_error("dm_collapse: empty matrix");
    if (s.rows() != s.cols()) throw dimension_error("dm_collapse: matrix must be square");
    const index_t t = s.rows();
    PosVector out(t);
    for (index_t r = 0; r < t; ++r)
        for (index_t c = 0; c <= r; ++c) out[r - c] += s(r, c);
    return out;
}

void softmax_jacobian_apply(std::span<const double> a, std::span<const double> g,
                            std::span<double> out) {
    if (a.size() != g.size() || a.size() != out.size())
        throw dimension_error("softmax_jacobian_apply: length mismatch");
    double ag = 0.0;
    for (index_t i = 0; i < a.size(); ++i) ag += a[i] * g[i];
    for (index_t i = 0; i < a.size(); ++i) out[i] = a[i] * (g[i] - ag);
}

bool jacobian_opnorm_bound_check(std::span<const double> att_row) {
    std::vector<index_t> support;
    for (index_t i = 0; i < att_row.size(); ++i)
        if (att_row[i] != 0.0) support.push_back(i);
    if (support.empty()) throw value_error("jacobian_opnorm_bound_check: row has no support");
    const index_t t = support.size();
    Matrix j(t, t);
    for (index_t i = 0; i < t; ++i) {
        const double ai = att_row[support[i]];
        for (index_t k = 0; k < t; ++k) j(i, k) = -ai * att_row[support[k]];
        j(i, i) += ai;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(t));
    return operator_norm_power(j, 400) <= bound + 1e-12;
}

Matrix ein_masked_rowscale(const Matrix& attn, const Matrix& m) {
    if (attn.rows() != attn.cols()) throw dimension_error("ein_masked_rowscale: attn must be square");
    if (!attn.same_shape(m)) throw dimension_error("ein_masked_rowscale: shape mismatch");
    const index_t t = attn.rows();
    Matrix out(t, t);
    for (index_t r = 0; r < t; ++r)
        softmax_jacobian_apply(attn.row(r), m.row(r), out.row(r));
    return out;
}

namespace {

double dot_flat(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (index_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm_flat(std::span<const double> a) { return std::sqrt(dot_flat(a, a)); }

double cosine_impl(std::span<const double> a, std::span<const double> b) {
    const double na = norm_flat(a), nb = norm_flat(b);
    if (na == 0.0 || nb == 0.0)
        throw value_error("cosine_flat: similarity with a zero operand is undefined");
    return dot_flat(a, b) / (na * nb);
}

} // namespace

double cosine_flat(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw dimension_error("cosine_flat: shape mismatch");
    if (a.empty()) throw dimension_error("cosine_flat: empty matrix");
    return cosine_impl(a.flat(), b.flat());
}

double cosine_flat(const PosVector& a, const PosVector& b) {
    if (a.size() != b.size()) throw dimension_error("cosine_flat: length mismatch");
    if (a.empty()) throw dimension_error("cosine_flat: empty vector");
    return cosine_impl(a.flat(), b.flat());
}

Matrix remove_projection(const Matrix& w, const Matrix& l) {
    if (!w.same_shape(l)) throw dimension_error("remove_projection: shape mismatch");
    const double ll = dot_flat(l.flat(), l.flat());
    if (ll == 0.0) throw value_error("remove_projection: direction is the zero matrix");
    const double coeff = dot_flat(w.flat(), l.flat()) / ll;
    Matrix out = w;
    out.add_scaled(l, -coeff);
    return out;
}

double operator_norm_power(const Matrix& m, int iters) {
    if (m.empty()) throw dimension_error("operator_norm_power: empty matrix");
    const index_t rows = m.rows(), cols = m.cols();
    std::vector<double> v(cols), u(rows);
    // fixed, slightly tilted start so ties between singular directions break
    // the same way every run
    for (index_t i = 0; i < cols; ++i) v[i] = 1.0 + 1e-3 * static_cast<double>(i % 17);
    double nv = norm_flat(v);
    for (double& x : v) x /= nv;
    double sigma = 0.0;
    for (int it = 0; it < iters; ++it) {
        for (index_t r = 0; r < rows; ++r) u[r] = dot_flat(m.row(r), v);
        const double nu = norm_flat(u);
        if (nu == 0.0) return 0.0;
        for (double& x : u) x /= nu;
        for (index_t c = 0; c < cols; ++c) v[c] = 0.0;
        for (index_t r = 0; r < rows; ++r) {
            const double ur = u[r];
            const double* mr = m.row_data(r);
            for (index_t c = 0; c < cols; ++c) v[c] += ur * mr[c];
        }
        sigma = norm_flat(v);
        if (sigma == 0.0) return 0.0;
        for (double& x : v) x /= sigma;
    }
    return sigma;
}

} // namespace atdl
