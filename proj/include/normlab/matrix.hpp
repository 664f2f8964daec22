// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace normlab {

/// Dense row-major matrix of shape (rows, cols) = (d_out, d_in).
///
/// Every weight, gradient and update in the library is a Matrix in operator
/// orientation: the layer maps R^cols to R^rows. Zero-row matrices are legal
/// (an empty shard of a row-sharded tensor).
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix filled(std::size_t rows, std::size_t cols, double value);
    static Matrix diagonal(std::span<const double> diag);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::vector<double> col(std::size_t c) const;

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& storage() const { return data_; }

    Matrix transposed() const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    bool all_finite() const;

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
double dot(const Matrix& a, const Matrix& b);

/// Stacks row blocks in order. All blocks must share a column count.
Matrix concat_rows(std::span<const Matrix> blocks);
/// Splits into `parts` contiguous row blocks of ceil(rows/parts) rows each,
/// the trailing blocks possibly shorter or empty.
std::vector<Matrix> split_rows(const Matrix& m, std::size_t parts);
/// Row range [begin, end) of block `part` under split_rows.
std::pair<std::size_t, std::size_t> row_block(std::size_t rows, std::size_t parts, std::size_t part);

/// Stack of `experts` matrices of identical shape, stored contiguously with
/// layout (experts, rows, cols).
class Batch3D {
public:
    Batch3D() = default;
    Batch3D(std::size_t experts, std::size_t rows, std::size_t cols);
    Batch3D(std::size_t experts, std::size_t rows, std::size_t cols, std::vector<double> data);

    static Batch3D from_slices(std::span<const Matrix> slices);
    /// Untyped tensor view; throws ShapeError unless `shape` has rank 3.
    static Batch3D from_tensor(std::span<const std::size_t> shape, std::vector<double> data);

    std::size_t experts() const { return experts_; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    Matrix slice(std::size_t e) const;
    void set_slice(std::size_t e, const Matrix& m);

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    friend bool operator==(const Batch3D& a, const Batch3D& b) {
        return a.experts_ == b.experts_ && a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t experts_ = 0;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

}  // namespace normlab
