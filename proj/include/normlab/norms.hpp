// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "normlab/matrix.hpp"
#include "normlab/rng.hpp"

namespace normlab {

/// Induced operator norm assigned to a parameter.
///   OneToRms  - input embeddings:  max_j ||col_j(W)||_RMS
///   RmsToRms  - hidden layers:     sqrt(d_in / d_out) ||W||_*
///   RmsToInf  - output projection: d_in * max_i ||row_i(W)||_RMS
enum class NormKind { OneToRms, RmsToRms, RmsToInf };

std::string_view to_string(NormKind kind);
std::optional<NormKind> parse_norm_kind(std::string_view text);

double op_norm_one_to_rms(const Matrix& w);
double op_norm_rms_to_rms(const Matrix& w);
double op_norm_rms_to_inf(const Matrix& w);
double operator_norm(const Matrix& w, NormKind kind);

/// Vector norms used on either side of an induced norm.
enum class VectorNorm { L1, Rms, Inf };

double vector_norm(std::span<const double> x, VectorNorm kind);

/// Lower-bound estimate of max ||Wx||_beta / ||x||_alpha from random
/// Gaussian probes plus structured ones: +-basis vectors, the top right
/// singular vector, and the scaled rows of W. Test-only; requires dims <= 16
/// and samples >= 10^4.
double induced_norm_bruteforce(const Matrix& w, VectorNorm alpha, VectorNorm beta, std::size_t samples, Rng& rng);

}  // namespace normlab
