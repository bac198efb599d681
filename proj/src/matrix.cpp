#include "atdl/matrix.hpp"

#include <atomic>
#include <cmath>

#ifdef ATDL_HAVE_CBLAS
#include <cblas.h>
#endif

namespace atdl {

namespace {

std::atomic<bool> g_strict{false};

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b))
        throw dimension_error(std::string(what) + ": shape mismatch");
}

// Reference kernel with a fixed iteration order. Loops are arranged so the
// innermost index walks contiguous memory.
void ref_matmul(Matrix& c, const Matrix& a, const Matrix& b, bool ta, bool tb) {
    const index_t m = c.rows(), n = c.cols();
    const index_t k = ta ? a.rows() : a.cols();
    if (!ta && !tb) {
        for (index_t i = 0; i < m; ++i) {
            double* ci = c.row_data(i);
            const double* ai = a.row_data(i);
            for (index_t p = 0; p < k; ++p) {
                const double aip = ai[p];
                if (aip == 0.0) continue;
                const double* bp = b.row_data(p);
                for (index_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
            }
        }
    } else if (!ta && tb) {
        for (index_t i = 0; i < m; ++i) {
            double* ci = c.row_data(i);
            const double* ai = a.row_data(i);
            for (index_t j = 0; j < n; ++j) {
                const double* bj = b.row_data(j);
                double s = 0.0;
                for (index_t p = 0; p < k; ++p) s += ai[p] * bj[p];
                ci[j] += s;
            }
        }
    } else { // ta && !tb
        for (index_t p = 0; p < k; ++p) {
            const double* ap = a.row_data(p);
            const double* bp = b.row_data(p);
            for (index_t i = 0; i < m; ++i) {
                const double api = ap[i];
                if (api == 0.0) continue;
                double* ci = c.row_data(i);
                for (index_t j = 0; j < n; ++j) ci[j] += api * bp[j];
            }
        }
    }
}

void matmul_into(Matrix& c, const Matrix& a, const Matrix& b, bool ta, bool tb,
                 bool accumulate) {
    if (a.empty() || b.empty()) throw dimension_error("matmul: empty operand");
    const index_t m = ta ? a.cols() : a.rows();
    const index_t k = ta ? a.rows() : a.cols();
    const index_t kb = tb ? b.cols() : b.rows();
    const index_t n = tb ? b.rows() : b.cols();
    if (k != kb) throw dimension_error("matmul: inner dimensions disagree");
    if (c.rows() != m || c.cols() != n)
        throw dimension_error("matmul: output shape mismatch");
#ifdef ATDL_HAVE_CBLAS
    if (!g_strict.load(std::memory_order_relaxed)) {
        cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                    tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
                    static_cast<int>(n), static_cast<int>(k), 1.0, a.data(),
                    static_cast<int>(a.cols()), b.data(), static_cast<int>(b.cols()),
                    accumulate ? 1.0 : 0.0, c.data(), static_cast<int>(n));
        return;
    }
#endif
    if (!accumulate) c.fill(0.0);
    ref_matmul(c, a, b, ta, tb);
}

Matrix matmul_fresh(const Matrix& a, const Matrix& b, bool ta, bool tb) {
    const index_t m = ta ? a.cols() : a.rows();
    const index_t n = tb ? b.rows() : b.cols();
    Matrix c(m, n);
    matmul_into(c, a, b, ta, tb, /*accumulate=*/true); // c is zero-filled
    return c;
}

} // namespace

void Matrix::add_scaled(const Matrix& other, double s) {
    check_same_shape(*this, other, "add_scaled");
    const double* o = other.data();
    double* d = data_.data();
    for (index_t i = 0; i < data_.size(); ++i) d[i] += s * o[i];
}

void Matrix::scale(double s) {
    for (double& x : data_) x *= s;
}

double Matrix::frobenius_norm() const {
    double acc = 0.0;
    for (double x : data_) acc += x * x;
    return std::sqrt(acc);
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::fabs(x));
    return m;
}

double Matrix::sum() const {
    double acc = 0.0;
    for (double x : data_) acc += x;
    return acc;
}

bool Matrix::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (index_t r = 0; r < rows_; ++r)
        for (index_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

void PosVector::add_scaled(const PosVector& other, double s) {
    if (v_.size() != other.size()) throw dimension_error("PosVector::add_scaled: length mismatch");
    for (index_t i = 0; i < v_.size(); ++i) v_[i] += s * other[i];
}

void PosVector::scale(double s) {
    for (double& x : v_) x *= s;
}

double PosVector::norm() const {
    double acc = 0.0;
    for (double x : v_) acc += x * x;
    return std::sqrt(acc);
}

double PosVector::max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::fabs(x));
    return m;
}

bool PosVector::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) { return matmul_fresh(a, b, false, false); }
Matrix matmul_nt(const Matrix& a, const Matrix& b) { return matmul_fresh(a, b, false, true); }
Matrix matmul_tn(const Matrix& a, const Matrix& b) { return matmul_fresh(a, b, true, false); }

void matmul_acc(Matrix& c, const Matrix& a, const Matrix& b) { matmul_into(c, a, b, false, false, true); }
void matmul_nt_acc(Matrix& c, const Matrix& a, const Matrix& b) { matmul_into(c, a, b, false, true, true); }
void matmul_tn_acc(Matrix& c, const Matrix& a, const Matrix& b) { matmul_into(c, a, b, true, false, true); }

void set_strict_deterministic(bool on) noexcept { g_strict.store(on, std::memory_order_relaxed); }
bool strict_deterministic() noexcept { return g_strict.load(std::memory_order_relaxed); }

} // namespace atdl
