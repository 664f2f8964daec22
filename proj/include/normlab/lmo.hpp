// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "normlab/matrix.hpp"
#include "normlab/norms.hpp"

namespace normlab {

/// Quintic Newton-Schulz iteration X <- aX + b(XX^T)X + c(XX^T)^2 X.
/// Defaults are the original Muon coefficients.
struct NewtonSchulzConfig {
    int n_iter = 5;
    double a = 3.4445;
    double b = -4.7750;
    double c = 2.0315;
    double eps = 1e-20;
};

/// Scalar form of one Newton-Schulz step, a*x + b*x^3 + c*x^5.
double newton_schulz_scalar(double x, const NewtonSchulzConfig& cfg);

/// Approximate polar factor U V^T of G. G is first divided by ||G||_F + eps;
/// wide orientation is used internally so XX^T has min(rows, cols) size.
Matrix newton_schulz(const Matrix& g, const NewtonSchulzConfig& cfg = {});

/// Columns rescaled to RMS 1; columns with RMS <= eps become zero.
Matrix dual_one_to_rms(const Matrix& g, double eps = 1e-20);

/// sqrt(d_out / d_in) * newton_schulz(G).
Matrix dual_rms_to_rms(const Matrix& g, const NewtonSchulzConfig& cfg = {});

/// sqrt(d_out / d_in) * U V^T with the exact SVD polar factor. Reference
/// semantics for dual_rms_to_rms; only suitable for small matrices.
Matrix dual_rms_to_rms_exact(const Matrix& g);

/// Rows rescaled to RMS 1/d_in; rows with RMS <= eps become zero.
Matrix dual_rms_to_inf(const Matrix& g, double eps = 1e-20);

/// Dispatch on the norm kind. RmsToRms uses Newton-Schulz.
Matrix lmo(const Matrix& g, NormKind kind, const NewtonSchulzConfig& cfg = {});

/// Applies lmo() independently to every expert slice. With
/// `transpose_experts` each slice is transposed before and after, so
/// (E, d_in, d_out) storage is handled as (E, d_out, d_in) operators.
Batch3D batched_lmo(const Batch3D& g, NormKind kind, const NewtonSchulzConfig& cfg = {}, bool transpose_experts = false);

}  // namespace normlab
