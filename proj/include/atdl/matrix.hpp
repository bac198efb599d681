#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "atdl/errors.hpp"

namespace atdl {

using index_t = std::size_t;

// Dense row-major matrix of doubles. Everything in this project is f64;
// there is deliberately no templated element type.
class Matrix {
public:
    Matrix() = default;
    Matrix(index_t rows, index_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    static Matrix identity(index_t n) {
        Matrix m(n, n);
        for (index_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    index_t rows() const noexcept { return rows_; }
    index_t cols() const noexcept { return cols_; }
    index_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double operator()(index_t r, index_t c) const noexcept { return data_[r * cols_ + c]; }
    double& operator()(index_t r, index_t c) noexcept { return data_[r * cols_ + c]; }

    const double* row_data(index_t r) const noexcept { return data_.data() + r * cols_; }
    double* row_data(index_t r) noexcept { return data_.data() + r * cols_; }
    std::span<const double> row(index_t r) const noexcept { return {row_data(r), cols_}; }
    std::span<double> row(index_t r) noexcept { return {row_data(r), cols_}; }

    const double* data() const noexcept { return data_.data(); }
    double* data() noexcept { return data_.data(); }
    std::span<const double> flat() const noexcept { return {data_.data(), data_.size()}; }
    std::span<double> flat() noexcept { return {data_.data(), data_.size()}; }

    void fill(double v) { data_.assign(data_.size(), v); }

    // this += s * other
    void add_scaled(const Matrix& other, double s);
    void scale(double s);

    double frobenius_norm() const;
    double max_abs() const;
    double sum() const;
    bool all_finite() const;

    Matrix transposed() const;

    bool same_shape(const Matrix& o) const noexcept {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

private:
    index_t rows_ = 0;
    index_t cols_ = 0;
    std::vector<double> data_;
};

// Relative-position weights. One scalar per offset: element m applies to
// score entries (r, c) with r - c == m, so element 0 is the self offset and
// the length always equals the sequence length T.
class PosVector {
public:
    PosVector() = default;
    explicit PosVector(index_t t) : v_(t, 0.0) {}

    index_t size() const noexcept { return v_.size(); }
    bool empty() const noexcept { return v_.empty(); }

    double operator[](index_t i) const noexcept { return v_[i]; }
    double& operator[](index_t i) noexcept { return v_[i]; }

    const double* data() const noexcept { return v_.data(); }
    double* data() noexcept { return v_.data(); }
    std::span<const double> flat() const noexcept { return {v_.data(), v_.size()}; }
    std::span<double> flat() noexcept { return {v_.data(), v_.size()}; }

    void fill(double x) { v_.assign(v_.size(), x); }
    void add_scaled(const PosVector& other, double s);
    void scale(double s);

    double norm() const;
    double max_abs() const;
    bool all_finite() const;

private:
    std::vector<double> v_;
};

// Matrix products. The default backend may use a tuned BLAS; strict
// deterministic mode routes through a fixed-order reference kernel so that
// results are bitwise reproducible independent of backend and threading.
Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b

// Accumulating forms: c += a * b and friends, with c shaped in advance.
void matmul_acc(Matrix& c, const Matrix& a, const Matrix& b);
void matmul_nt_acc(Matrix& c, const Matrix& a, const Matrix& b);
void matmul_tn_acc(Matrix& c, const Matrix& a, const Matrix& b);

void set_strict_deterministic(bool on) noexcept;
bool strict_deterministic() noexcept;

} // namespace atdl
