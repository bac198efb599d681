#pragma once

#include <span>

#include "atdl/matrix.hpp"

namespace atdl {

// Row-wise softmax. With causal = true, the support of row r is columns
// 0..r; excluded columns take no part in the normalization and are exactly
// zero in the result (row 0 therefore comes out as [1, 0, ..., 0]).
// Numerically stabilized by per-row max subtraction.
Matrix softmax_rows(const Matrix& scores, bool causal);

// Expand relative-position weights into a lower-triangular Toeplitz matrix:
// out(r, c) = p[r - c] for 0 <= r - c < T, zero above the diagonal.
Matrix dm_expand(const PosVector& p);

// Adjoint of dm_expand: out[m] = sum of s(r, c) over r - c == m. Requires a
// square input. dm_collapse(dm_expand(p)) multiplies p[m] by the number of
// entries on offset m, i.e. T - m.
PosVector dm_collapse(const Matrix& s);

// Apply the softmax Jacobian at output a to a vector g without forming the
// T x T matrix: J g = a .* g - a * <a, g>. Entries where a is zero (masked
// positions) contribute nothing and map to zero.
void softmax_jacobian_apply(std::span<const double> a, std::span<const double> g,
                            std::span<double> out);

// True when the operator norm of the explicit Jacobian diag(a) - a a^T is
// at most 1/sqrt(t) + 1e-12, where t counts the nonzero entries of the row.
// The premise holds for attention rows produced in the early-training regime
// (scores of small magnitude); sharply peaked rows can exceed it.
bool jacobian_opnorm_bound_check(std::span<const double> att_row);

// Row-batched Jacobian application: out row t = J(attn row t) * (m row t).
// attn and m must be square and of equal shape. Masked columns of m never
// influence the result.
Matrix ein_masked_rowscale(const Matrix& attn, const Matrix& m);

// Cosine similarity of the flattened matrices. Throws value_error when
// either operand is identically zero, since the similarity is undefined.
double cosine_flat(const Matrix& a, const Matrix& b);
double cosine_flat(const PosVector& a, const PosVector& b);

// Remove the component of w along direction l: w - (<w,l>/<l,l>) l.
// The result is orthogonal to l; the scale of l is irrelevant.
Matrix remove_projection(const Matrix& w, const Matrix& l);

// Largest singular value via power iteration on m^T m. Deterministic start
// vector; the estimate approaches the true norm from below.
double operator_norm_power(const Matrix& m, int iters = 200);

} // namespace atdl
