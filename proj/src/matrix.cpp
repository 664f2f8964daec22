// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#include "normlab/matrix.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "normlab/error.hpp"

namespace normlab {

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError(fmt::format("matrix data length {} does not match shape {}x{}", data_.size(), rows, cols));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::filled(std::size_t rows, std::size_t cols, double value) {
    return Matrix(rows, cols, std::vector<double>(rows * cols, value));
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

std::vector<double> Matrix::col(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    }
    return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) {
        throw ShapeError(fmt::format("cannot add {}x{} and {}x{}", rows_, cols_, other.rows_, other.cols_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (!same_shape(other)) {
        throw ShapeError(fmt::format("cannot subtract {}x{} and {}x{}", rows_, cols_, other.rows_, other.cols_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError(fmt::format("matmul: {}x{} * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    const std::size_t n = b.cols();
    Matrix c(a.rows(), n);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i).data();
        auto ai = a.row(i);
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double s = ai[p];
            if (s == 0.0) continue;
            const double* bp = b.row(p).data();
            for (std::size_t j = 0; j < n; ++j) ci[j] += s * bp[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError(fmt::format("matmul_nt: {}x{} * ({}x{})^T", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    return matmul(a, b.transposed());
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError(fmt::format("matmul_tn: ({}x{})^T * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    const std::size_t n = b.cols();
    Matrix c(a.cols(), n);
    for (std::size_t p = 0; p < a.rows(); ++p) {
        auto ap = a.row(p);
        const double* bp = b.row(p).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double s = ap[i];
            if (s == 0.0) continue;
            double* ci = c.row(i).data();
            for (std::size_t j = 0; j < n; ++j) ci[j] += s * bp[j];
        }
    }
    return c;
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return std::sqrt(s);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError(fmt::format("max_abs_diff: {}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

double dot(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError(fmt::format("dot: {}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

Matrix concat_rows(std::span<const Matrix> blocks) {
    if (blocks.empty()) return {};
    const std::size_t cols = blocks.front().cols();
    std::size_t rows = 0;
    for (const auto& b : blocks) {
        if (b.cols() != cols) {
            throw ShapeError(fmt::format("concat_rows: column mismatch {} vs {}", b.cols(), cols));
        }
        rows += b.rows();
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const auto& b : blocks) data.insert(data.end(), b.data().begin(), b.data().end());
    return Matrix(rows, cols, std::move(data));
}

std::pair<std::size_t, std::size_t> row_block(std::size_t rows, std::size_t parts, std::size_t part) {
    if (parts == 0) throw ShapeError("row_block: zero parts");
    const std::size_t chunk = (rows + parts - 1) / parts;
    const std::size_t begin = std::min(rows, part * chunk);
    const std::size_t end = std::min(rows, begin + chunk);
    return {begin, end};
}

std::vector<Matrix> split_rows(const Matrix& m, std::size_t parts) {
    std::vector<Matrix> out;
    out.reserve(parts);
    for (std::size_t p = 0; p < parts; ++p) {
        auto [begin, end] = row_block(m.rows(), parts, p);
        std::vector<double> data(m.data().begin() + static_cast<std::ptrdiff_t>(begin * m.cols()),
                                 m.data().begin() + static_cast<std::ptrdiff_t>(end * m.cols()));
        out.emplace_back(end - begin, m.cols(), std::move(data));
    }
    return out;
}

Batch3D::Batch3D(std::size_t experts, std::size_t rows, std::size_t cols)
    : experts_(experts), rows_(rows), cols_(cols), data_(experts * rows * cols, 0.0) {}

Batch3D::Batch3D(std::size_t experts, std::size_t rows, std::size_t cols, std::vector<double> data)
    : experts_(experts), rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != experts * rows * cols) {
        throw ShapeError(fmt::format("batch data length {} does not match shape {}x{}x{}", data_.size(), experts,
                                     rows, cols));
    }
}

Batch3D Batch3D::from_slices(std::span<const Matrix> slices) {
    if (slices.empty()) return {};
    Batch3D b(slices.size(), slices.front().rows(), slices.front().cols());
    for (std::size_t e = 0; e < slices.size(); ++e) b.set_slice(e, slices[e]);
    return b;
}

Batch3D Batch3D::from_tensor(std::span<const std::size_t> shape, std::vector<double> data) {
    if (shape.size() != 3) throw ShapeError(fmt::format("expected a rank-3 tensor, got rank {}", shape.size()));
    return Batch3D(shape[0], shape[1], shape[2], std::move(data));
}

Matrix Batch3D::slice(std::size_t e) const {
    const std::size_t n = rows_ * cols_;
    auto first = data_.begin() + static_cast<std::ptrdiff_t>(e * n);
    return Matrix(rows_, cols_, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
}

void Batch3D::set_slice(std::size_t e, const Matrix& m) {
    if (m.rows() != rows_ || m.cols() != cols_) {
        throw ShapeError(fmt::format("set_slice: {}x{} into batch of {}x{}", m.rows(), m.cols(), rows_, cols_));
    }
    std::copy(m.data().begin(), m.data().end(), data_.begin() + static_cast<std::ptrdiff_t>(e * rows_ * cols_));
}

}  // namespace normlab
