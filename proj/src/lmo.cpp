// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#include "normlab/lmo.hpp"

#include <cmath>

#include <fmt/core.h>

#include "normlab/error.hpp"
#include "normlab/linalg.hpp"

namespace normlab {

double newton_schulz_scalar(double x, const NewtonSchulzConfig& cfg) {
    const double x2 = x * x;
    return cfg.a * x + cfg.b * x2 * x + cfg.c * x2 * x2 * x;
}

Matrix newton_schulz(const Matrix& g, const NewtonSchulzConfig& cfg) {
    if (cfg.n_iter < 1) throw Error("newton_schulz: n_iter must be >= 1");
    if (!g.all_finite()) throw NonFiniteError("newton_schulz: non-finite input");

    const bool tall = g.rows() > g.cols();
    Matrix x = tall ? g.transposed() : g;
    x *= 1.0 / (frobenius_norm(g) + cfg.eps);
    for (int it = 0; it < cfg.n_iter; ++it) {
        const Matrix gram = matmul_nt(x, x);
        Matrix poly = matmul(gram, gram);
        poly *= cfg.c;
        for (std::size_t i = 0; i < poly.size(); ++i) poly.data()[i] += cfg.b * gram.data()[i];
        Matrix next = matmul(poly, x);
        for (std::size_t i = 0; i < next.size(); ++i) next.data()[i] += cfg.a * x.data()[i];
        x = std::move(next);
    }
    return tall ? x.transposed() : x;
}

Matrix dual_one_to_rms(const Matrix& g, double eps) {
    Matrix out = g;
    if (g.rows() == 0) return out;
    std::vector<double> sq(g.cols(), 0.0);
    for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < g.cols(); ++c) sq[c] += row[c] * row[c];
    }
    std::vector<double> scale(g.cols());
    for (std::size_t c = 0; c < g.cols(); ++c) {
        const double rms = std::sqrt(sq[c] / static_cast<double>(g.rows()));
        scale[c] = rms > eps ? 1.0 / rms : 0.0;
    }
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < out.cols(); ++c) row[c] *= scale[c];
    }
    return out;
}

Matrix dual_rms_to_rms(const Matrix& g, const NewtonSchulzConfig& cfg) {
    Matrix out = newton_schulz(g, cfg);
    out *= std::sqrt(static_cast<double>(g.rows()) / static_cast<double>(g.cols()));
    return out;
}

Matrix dual_rms_to_rms_exact(const Matrix& g) {
    const Svd svd = svd_oracle(g);
    Matrix out = matmul_nt(svd.u, svd.v);
    out *= std::sqrt(static_cast<double>(g.rows()) / static_cast<double>(g.cols()));
    return out;
}

Matrix dual_rms_to_inf(const Matrix& g, double eps) {
    Matrix out = g;
    const double d_in = static_cast<double>(g.cols());
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        const double rms = rms_vector_norm(row);
        const double scale = rms > eps ? 1.0 / (d_in * rms) : 0.0;
        for (double& v : row) v *= scale;
    }
    return out;
}

Matrix lmo(const Matrix& g, NormKind kind, const NewtonSchulzConfig& cfg) {
    switch (kind) {
        case NormKind::OneToRms: return dual_one_to_rms(g, cfg.eps);
        case NormKind::RmsToRms: return dual_rms_to_rms(g, cfg);
        case NormKind::RmsToInf: return dual_rms_to_inf(g, cfg.eps);
    }
    throw Error("lmo: unknown norm kind");
}

Batch3D batched_lmo(const Batch3D& g, NormKind kind, const NewtonSchulzConfig& cfg, bool transpose_experts) {
    const std::size_t rows = transpose_experts ? g.cols() : g.rows();
    const std::size_t cols = transpose_experts ? g.rows() : g.cols();
    Batch3D out(g.experts(), g.rows(), g.cols());
    for (std::size_t e = 0; e < g.experts(); ++e) {
        Matrix slice = g.slice(e);
        if (transpose_experts) slice = slice.transposed();
        if (slice.rows() != rows || slice.cols() != cols) throw ShapeError("batched_lmo: inconsistent slice shape");
        Matrix u = lmo(slice, kind, cfg);
        out.set_slice(e, transpose_experts ? u.transposed() : u);
    }
    return out;
}

}  // namespace normlab
