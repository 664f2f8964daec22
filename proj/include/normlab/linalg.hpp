// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "normlab/error.hpp"
#include "normlab/matrix.hpp"
#include "normlab/rng.hpp"

namespace normlab {

/// ||x||_2 / sqrt(d). Throws on an empty vector.
double rms_vector_norm(std::span<const double> x);

struct PowerIterationOptions {
    double tol = 1e-6;
    std::size_t max_iter = 100;
};

/// Power iteration did not settle within the iteration budget.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_estimate)
        : Error(what), last_estimate_(last_estimate) {}
    double last_estimate() const { return last_estimate_; }

private:
    double last_estimate_;
};

/// Largest singular value by power iteration on W^T W.
///
/// Starts from the normalized all-ones vector; if W annihilates it, the
/// standard basis vectors are tried in order. Stops when the relative change
/// of the estimate drops to `tol`. A zero matrix has norm 0.
double spectral_norm(const Matrix& w, PowerIterationOptions opts = {});

/// sigma_max(W) by repeated squaring of the smaller Gram matrix followed by a
/// Rayleigh quotient. Converges for any spectral gap, including clustered or
/// repeated top singular values. Cost is O(d^3 log) in d = min(rows, cols).
double spectral_norm_squaring(const Matrix& w);

/// Thin SVD W = U diag(sigma) V^T with sigma sorted descending.
/// U is (rows, k), V is (cols, k), k = min(rows, cols).
struct Svd {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};

/// One-sided Jacobi SVD. Meant for test-scale matrices and init-time
/// orthogonalization; columns belonging to zero singular values are completed
/// to an orthonormal set.
Svd svd_oracle(const Matrix& w);

Matrix reconstruct(const Svd& svd);

/// Standard-normal entries.
Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng);

/// gain * U V^T of a Gaussian draw: every singular value equals `gain`.
Matrix semi_orthogonal_init(std::size_t d_out, std::size_t d_in, double gain, Rng& rng);

/// Gaussian with every row rescaled to RMS norm `target_row_rms`.
Matrix row_normalized_gaussian_init(std::size_t d_out, std::size_t d_in, double target_row_rms, Rng& rng);

/// Result of a (weighted) linear least-squares solve.
struct LeastSquares {
    std::vector<double> coef;
    /// (A^T W A)^{-1}, before any residual-variance scaling.
    Matrix cov_unscaled;
    /// Weighted residual sum of squares.
    double rss = 0.0;
    std::size_t n = 0;
};

/// Minimizes sum_i w_i^2 (y_i - A_i . coef)^2 by Householder QR. `row_weights`
/// multiplies each row, matching the usual lstsq-on-scaled-rows convention;
/// empty means unit weights. Throws ShapeError when the design matrix is
/// rank deficient.
LeastSquares least_squares(const Matrix& a, std::span<const double> y, std::span<const double> row_weights = {});

}  // namespace normlab
