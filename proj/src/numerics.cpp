#include "fedcome/numerics.hpp"

#include "fedcome/error.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace fedcome {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw DimensionError("Matrix: ragged initializer rows");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::from_columns(std::span<const Vector> columns) {
    if (columns.empty()) {
        return {};
    }
    const std::size_t d = columns.front().size();
    Matrix m(d, columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (columns[j].size() != d) {
            throw DimensionError(fmt::format("Matrix::from_columns: column {} has length {}, expected {}", j,
                                             columns[j].size(), d));
        }
        m.set_column(j, columns[j].span());
    }
    return m;
}

Vector Matrix::column(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        out[r] = (*this)(r, c);
    }
    return out;
}

void Matrix::set_column(std::size_t c, std::span<const double> values) {
    if (values.size() != rows_) {
        throw DimensionError("Matrix::set_column: length mismatch");
    }
    for (std::size_t r = 0; r < rows_; ++r) {
        (*this)(r, c) = values[r];
    }
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            t(c, r) = (*this)(r, c);
        }
    }
    return t;
}

double dot(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DimensionError(fmt::format("dot: length mismatch ({} vs {})", x.size(), y.size()));
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        acc += x[k] * y[k];
    }
    return acc;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double norm_inf(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

Vector axpy(double alpha, const Vector& x, const Vector& y) {
    if (x.size() != y.size()) {
        throw DimensionError(fmt::format("axpy: length mismatch ({} vs {})", x.size(), y.size()));
    }
    Vector out(y);
    for (std::size_t k = 0; k < x.size(); ++k) {
        out[k] += alpha * x[k];
    }
    return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw DimensionError(fmt::format("matvec: {}x{} matrix times length-{} vector", a.rows(), a.cols(), x.size()));
    }
    Vector out(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double acc = 0.0;
        const auto row = a.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            acc += row[c] * x[c];
        }
        out[r] = acc;
    }
    return out;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw DimensionError(
            fmt::format("matvec_transposed: {}x{} matrix^T times length-{} vector", a.rows(), a.cols(), x.size()));
    }
    Vector out(a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto row = a.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            out[c] += row[c] * x[r];
        }
    }
    return out;
}

Matrix gram(const Matrix& g) {
    if (g.rows() == 0 || g.cols() == 0) {
        throw DimensionError("gram: empty matrix");
    }
    const std::size_t m = g.cols();
    Matrix k(m, m);
    // Row sweep keeps memory access contiguous; per entry the summation order
    // over rows is the same as a sequential dot of the two columns.
    for (std::size_t r = 0; r < g.rows(); ++r) {
        const auto row = g.row(r);
        for (std::size_t i = 0; i < m; ++i) {
            const double gi = row[i];
            for (std::size_t j = i; j < m; ++j) {
                k(i, j) += gi * row[j];
            }
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            k(j, i) = k(i, j);
        }
    }
    return k;
}

bool all_finite(std::span<const double> x) noexcept {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(std::span<const double> x, std::string_view where) {
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!std::isfinite(x[k])) {
            throw NumericError(fmt::format("{}: non-finite value {} at index {}", where, x[k], k));
        }
    }
}

} // namespace fedcome
