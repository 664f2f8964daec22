// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#include "normlab/norms.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/core.h>

#include "normlab/error.hpp"
#include "normlab/linalg.hpp"

namespace normlab {

std::string_view to_string(NormKind kind) {
    switch (kind) {
        case NormKind::OneToRms: return "1->rms";
        case NormKind::RmsToRms: return "rms->rms";
        case NormKind::RmsToInf: return "rms->inf";
    }
    return "?";
}

std::optional<NormKind> parse_norm_kind(std::string_view text) {
    if (text == "1->rms") return NormKind::OneToRms;
    if (text == "rms->rms") return NormKind::RmsToRms;
    if (text == "rms->inf") return NormKind::RmsToInf;
    return std::nullopt;
}

double op_norm_one_to_rms(const Matrix& w) {
    if (w.empty()) throw ShapeError("op_norm_one_to_rms: empty matrix");
    std::vector<double> sq(w.cols(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        auto row = w.row(r);
        for (std::size_t c = 0; c < w.cols(); ++c) sq[c] += row[c] * row[c];
    }
    const double best = *std::max_element(sq.begin(), sq.end());
    return std::sqrt(best / static_cast<double>(w.rows()));
}

double op_norm_rms_to_rms(const Matrix& w) {
    const double sigma = spectral_norm_squaring(w);
    return std::sqrt(static_cast<double>(w.cols()) / static_cast<double>(w.rows())) * sigma;
}

double op_norm_rms_to_inf(const Matrix& w) {
    if (w.empty()) throw ShapeError("op_norm_rms_to_inf: empty matrix");
    double best = 0.0;
    for (std::size_t r = 0; r < w.rows(); ++r) best = std::max(best, rms_vector_norm(w.row(r)));
    return static_cast<double>(w.cols()) * best;
}

double operator_norm(const Matrix& w, NormKind kind) {
    switch (kind) {
        case NormKind::OneToRms: return op_norm_one_to_rms(w);
        case NormKind::RmsToRms: return op_norm_rms_to_rms(w);
        case NormKind::RmsToInf: return op_norm_rms_to_inf(w);
    }
    throw Error("operator_norm: unknown kind");
}

double vector_norm(std::span<const double> x, VectorNorm kind) {
    switch (kind) {
        case VectorNorm::L1: {
            double s = 0.0;
            for (double v : x) s += std::abs(v);
            return s;
        }
        case VectorNorm::Rms: return rms_vector_norm(x);
        case VectorNorm::Inf: {
            double m = 0.0;
            for (double v : x) m = std::max(m, std::abs(v));
            return m;
        }
    }
    throw Error("vector_norm: unknown kind");
}

double induced_norm_bruteforce(const Matrix& w, VectorNorm alpha, VectorNorm beta, std::size_t samples, Rng& rng) {
    if (w.rows() > 16 || w.cols() > 16) {
        throw ShapeError(fmt::format("induced_norm_bruteforce: {}x{} exceeds 16x16", w.rows(), w.cols()));
    }
    if (samples < 10000) throw Error("induced_norm_bruteforce: needs at least 10^4 samples");

    const std::size_t n = w.cols();
    std::vector<double> wx(w.rows());
    double best = 0.0;
    auto probe = [&](std::span<const double> x) {
        const double denom = vector_norm(x, alpha);
        if (denom == 0.0) return;
        for (std::size_t r = 0; r < w.rows(); ++r) {
            double s = 0.0;
            auto row = w.row(r);
            for (std::size_t c = 0; c < n; ++c) s += row[c] * x[c];
            wx[r] = s;
        }
        best = std::max(best, vector_norm(wx, beta) / denom);
    };

    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::fill(x.begin(), x.end(), 0.0);
        x[j] = 1.0;
        probe(x);
    }
    for (std::size_t r = 0; r < w.rows(); ++r) {
        auto row = w.row(r);
        probe(row);
        // Sign pattern of the row: extreme point of the inf-ball in its direction.
        for (std::size_t c = 0; c < n; ++c) x[c] = row[c] >= 0 ? 1.0 : -1.0;
        probe(x);
    }
    const Svd svd = svd_oracle(w);
    for (std::size_t c = 0; c < n; ++c) x[c] = svd.v(c, 0);
    probe(x);

    for (std::size_t s = 0; s < samples; ++s) {
        for (double& v : x) v = rng.normal();
        probe(x);
    }
    return best;
}

}  // namespace normlab
