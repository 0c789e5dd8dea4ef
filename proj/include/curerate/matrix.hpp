#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "curerate/error.hpp"

namespace curerate {

/// Dense row-major matrix of doubles. Sized for chains of a few dozen states.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ == 0 ? 0 : init.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) {
                throw Error(ErrorCode::InvariantViolation, "ragged matrix initializer");
            }
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    double operator()(std::size_t r, std::size_t c) const {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double row_sum(std::size_t r) const {
        double s = 0.0;
        for (double v : row(r)) s += v;
        return s;
    }

    /// Copy of the block [r0, r0+nr) x [c0, c0+nc).
    Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
        assert(r0 + nr <= rows_ && c0 + nc <= cols_);
        Matrix out(nr, nc);
        for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nc; ++j) out(i, j) = (*this)(r0 + i, c0 + j);
        return out;
    }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_) {
            throw Error(ErrorCode::InvariantViolation, "matrix product shape mismatch");
        }
        Matrix out(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < b.cols_; ++j) out(i, j) += aik * b(k, j);
            }
        return out;
    }

    friend Matrix operator-(const Matrix& a, const Matrix& b) {
        assert(a.rows_ == b.rows_ && a.cols_ == b.cols_);
        Matrix out = a;
        for (std::size_t i = 0; i < out.data_.size(); ++i) out.data_[i] -= b.data_[i];
        return out;
    }

    friend Matrix operator+(const Matrix& a, const Matrix& b) {
        assert(a.rows_ == b.rows_ && a.cols_ == b.cols_);
        Matrix out = a;
        for (std::size_t i = 0; i < out.data_.size(); ++i) out.data_[i] += b.data_[i];
        return out;
    }

    /// Largest absolute entry.
    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    /// Maximum absolute column sum.
    double norm1() const {
        double best = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < rows_; ++i) s += std::abs((*this)(i, j));
            best = std::max(best, s);
        }
        return best;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Row vector times matrix.
inline std::vector<double> left_multiply(std::span<const double> v, const Matrix& m) {
    if (v.size() != m.rows()) {
        throw Error(ErrorCode::InvariantViolation, "vector-matrix shape mismatch");
    }
    std::vector<double> out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (v[i] == 0.0) continue;
        for (std::size_t j = 0; j < m.cols(); ++j) out[j] += v[i] * m(i, j);
    }
    return out;
}

/// LU factorization with partial pivoting, P·A = L·U, packed in place.
class LuDecomposition {
public:
    explicit LuDecomposition(Matrix a) : lu_(std::move(a)), perm_(lu_.rows()) {
        if (lu_.rows() != lu_.cols()) {
            throw Error(ErrorCode::InvariantViolation, "LU requires a square matrix");
        }
        anorm1_ = lu_.norm1();
        const std::size_t n = lu_.rows();
        for (std::size_t i = 0; i < n; ++i) perm_[i] = i;

        for (std::size_t k = 0; k < n; ++k) {
            std::size_t pivot = k;
            double best = std::abs(lu_(k, k));
            for (std::size_t i = k + 1; i < n; ++i) {
                if (std::abs(lu_(i, k)) > best) {
                    best = std::abs(lu_(i, k));
                    pivot = i;
                }
            }
            if (best == 0.0) {
                singular_ = true;
                continue;
            }
            if (pivot != k) {
                std::swap_ranges(lu_.row(k).begin(), lu_.row(k).end(), lu_.row(pivot).begin());
                std::swap(perm_[k], perm_[pivot]);
            }
            const double diag = lu_(k, k);
            for (std::size_t i = k + 1; i < n; ++i) {
                const double factor = lu_(i, k) / diag;
                lu_(i, k) = factor;
                if (factor == 0.0) continue;
                for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= factor * lu_(k, j);
            }
        }
    }

    std::size_t size() const noexcept { return lu_.rows(); }
    bool singular() const noexcept { return singular_; }

    /// Solves A·x = b for one right-hand side.
    std::vector<double> solve(std::span<const double> b) const {
        const std::size_t n = size();
        if (singular_) throw Error(ErrorCode::SingularBlock, "matrix has a zero pivot");
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < i; ++j) x[i] -= lu_(i, j) * x[j];
        for (std::size_t i = n; i-- > 0;) {
            for (std::size_t j = i + 1; j < n; ++j) x[i] -= lu_(i, j) * x[j];
            x[i] /= lu_(i, i);
        }
        return x;
    }

    Matrix inverse() const {
        const std::size_t n = size();
        Matrix inv(n, n);
        std::vector<double> e(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            std::fill(e.begin(), e.end(), 0.0);
            e[j] = 1.0;
            const auto col = solve(e);
            for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
        }
        return inv;
    }

    /// Reciprocal 1-norm condition number, exact via the explicit inverse.
    double rcond() const {
        if (singular_) return 0.0;
        const double inv_norm = inverse().norm1();
        if (anorm1_ == 0.0 || !std::isfinite(inv_norm)) return 0.0;
        return 1.0 / (anorm1_ * inv_norm);
    }

private:
    Matrix lu_;
    std::vector<std::size_t> perm_;
    double anorm1_ = 0.0;
    bool singular_ = false;
};

}  // namespace curerate
