#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace fedcome {

/// Dense real vector. Thin value wrapper over std::vector<double>.
class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
    Vector(std::initializer_list<double> init) : data_(init) {}
    explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    std::span<double> span() noexcept { return data_; }
    std::span<const double> span() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    const std::vector<double>& values() const noexcept { return data_; }

    friend bool operator==(const Vector&, const Vector&) = default;

private:
    std::vector<double> data_;
};

/// Dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    /// Row-wise initializer; all rows must have equal length.
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    /// Builds a d x M matrix whose j-th column is columns[j].
    static Matrix from_columns(std::span<const Vector> columns);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    Vector column(std::size_t c) const;
    void set_column(std::size_t c, std::span<const double> values);

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<const double> flat() const noexcept { return data_; }

    Matrix transpose() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> x, std::span<const double> y);
inline double dot(const Vector& x, const Vector& y) { return dot(x.span(), y.span()); }

double norm2(std::span<const double> x);
inline double norm2(const Vector& x) { return norm2(x.span()); }

double norm_inf(std::span<const double> x);

/// Returns alpha * x + y.
Vector axpy(double alpha, const Vector& x, const Vector& y);

Vector matvec(const Matrix& a, std::span<const double> x);
inline Vector matvec(const Matrix& a, const Vector& x) { return matvec(a, x.span()); }

/// A^T x without forming the transpose.
Vector matvec_transposed(const Matrix& a, std::span<const double> x);

/// Gram matrix G^T G of the columns of G. Exactly symmetric: each
/// off-diagonal entry is accumulated once, in row order, and mirrored, so
/// K(i, j) is bitwise equal to dot(G.column(i), G.column(j)).
Matrix gram(const Matrix& g);

bool all_finite(std::span<const double> x) noexcept;

/// Throws NumericError naming `where` if any entry is NaN or infinite.
void require_finite(std::span<const double> x, std::string_view where);
inline void require_finite(const Vector& x, std::string_view where) { require_finite(x.span(), where); }
inline void require_finite(const Matrix& m, std::string_view where) { require_finite(m.flat(), where); }

} // namespace fedcome
