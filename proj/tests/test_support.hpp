// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit suites. Nothing here calls into the code under
// test except for building inputs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "normlab/matrix.hpp"
#include "normlab/rng.hpp"

namespace normlab::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = scale * rng.normal();
    return m;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// max |(A^T A - I)_{ij}| over the columns of A.
inline double orthonormality_error(const Matrix& a) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.cols(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, i) * a(r, j);
            worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

}  // namespace normlab::testing
