// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "normlab/linalg.hpp"
#include "normlab/norms.hpp"
#include "test_support.hpp"

using namespace normlab;
using normlab::testing::random_matrix;
using normlab::testing::rel_diff;

namespace {

// Gradient ascent of ||Wx||_2^2 on the unit sphere, independent of spectral_norm().
double rms_to_rms_ascent(const Matrix& w) {
    const std::size_t n = w.cols();
    std::vector<double> x(n), wx(w.rows()), grad(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(1.0 + static_cast<double>(i));
    const double step = 1.0 / (frobenius_norm(w) * frobenius_norm(w));
    double ratio = 0.0;
    for (int it = 0; it < 20000; ++it) {
        double len = 0.0;
        for (double v : x) len += v * v;
        len = std::sqrt(len);
        for (double& v : x) v /= len;
        for (std::size_t r = 0; r < w.rows(); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < n; ++c) s += w(r, c) * x[c];
            wx[r] = s;
        }
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t r = 0; r < w.rows(); ++r) {
            for (std::size_t c = 0; c < n; ++c) grad[c] += w(r, c) * wx[r];
        }
        double out = 0.0;
        for (double v : wx) out += v * v;
        ratio = std::sqrt(out) * std::sqrt(static_cast<double>(n) / static_cast<double>(w.rows()));
        for (std::size_t c = 0; c < n; ++c) x[c] += step * grad[c];
    }
    return ratio;
}

// max_i max_{||x||_RMS = 1} |row_i . x|, attained at x = sqrt(d_in) r / ||r||_2.
double rms_to_inf_dual_oracle(const Matrix& w) {
    const double d_in = static_cast<double>(w.cols());
    double best = 0.0;
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double len = 0.0;
        for (double v : w.row(r)) len += v * v;
        len = std::sqrt(len);
        double s = 0.0;
        for (double v : w.row(r)) s += v * std::sqrt(d_in) * v / len;
        best = std::max(best, std::abs(s));
    }
    return best;
}

}  // namespace

TEST_CASE("1->rms closed forms and extreme-point oracle") {
    CHECK(op_norm_one_to_rms(Matrix::identity(4)) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(op_norm_one_to_rms(Matrix::filled(3, 5, 1.0)) == doctest::Approx(1.0).epsilon(1e-15));

    Rng rng(10);
    const Matrix w = random_matrix(8, 8, rng);
    // The l1 unit ball's extreme points are +-e_j.
    double best = 0.0;
    for (std::size_t j = 0; j < 8; ++j) best = std::max(best, rms_vector_norm(w.col(j)));
    CHECK(std::abs(op_norm_one_to_rms(w) - best) < 1e-9);
}

TEST_CASE("rms->rms closed forms and Rayleigh ascent oracle") {
    CHECK(op_norm_rms_to_rms(Matrix::identity(6)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(op_norm_rms_to_rms(Matrix::filled(3, 5, 1.0)) == doctest::Approx(5.0).epsilon(1e-12));

    Rng rng(11);
    const Matrix w = random_matrix(8, 8, rng);
    CHECK(rel_diff(op_norm_rms_to_rms(w), rms_to_rms_ascent(w)) < 1e-4);
}

TEST_CASE("rms->inf closed forms and dual-norm oracle") {
    CHECK(op_norm_rms_to_inf(Matrix::identity(4)) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(op_norm_rms_to_inf(Matrix::filled(3, 5, 1.0)) == doctest::Approx(5.0).epsilon(1e-15));

    Rng rng(12);
    const Matrix w = random_matrix(8, 8, rng);
    CHECK(std::abs(op_norm_rms_to_inf(w) - rms_to_inf_dual_oracle(w)) < 1e-9);
}

TEST_CASE("identity matrices have closed-form norms for every width") {
    for (std::size_t d : {1u, 2u, 4u, 16u}) {
        const Matrix id = Matrix::identity(d);
        const double root = std::sqrt(static_cast<double>(d));
        CHECK(op_norm_one_to_rms(id) == doctest::Approx(1.0 / root).epsilon(1e-14));
        CHECK(op_norm_rms_to_rms(id) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(op_norm_rms_to_inf(id) == doctest::Approx(root).epsilon(1e-14));
    }
}

TEST_CASE("induced_norm_bruteforce bounds the closed forms") {
    Rng rng(13);
    CHECK(induced_norm_bruteforce(Matrix::identity(4), VectorNorm::Rms, VectorNorm::Inf, 10000, rng) >= 2.0 - 1e-6);

    const std::vector<double> d{3.0, 1.0};
    CHECK(induced_norm_bruteforce(Matrix::diagonal(d), VectorNorm::Rms, VectorNorm::Rms, 10000, rng) ==
          doctest::Approx(3.0).epsilon(1e-12));

    const Matrix w = random_matrix(4, 4, rng);
    CHECK(std::abs(induced_norm_bruteforce(w, VectorNorm::L1, VectorNorm::Rms, 10000, rng) - op_norm_one_to_rms(w)) <
          1e-9);
    // A lower bound never exceeds the closed form.
    CHECK(induced_norm_bruteforce(w, VectorNorm::Rms, VectorNorm::Inf, 10000, rng) <= op_norm_rms_to_inf(w) + 1e-12);
    CHECK(induced_norm_bruteforce(w, VectorNorm::Rms, VectorNorm::Rms, 10000, rng) <=
          op_norm_rms_to_rms(w) * (1 + 1e-12));

    CHECK_THROWS(induced_norm_bruteforce(random_matrix(17, 2, rng), VectorNorm::L1, VectorNorm::Rms, 10000, rng));
    CHECK_THROWS(induced_norm_bruteforce(w, VectorNorm::L1, VectorNorm::Rms, 10, rng));
}

TEST_CASE("norms are absolutely homogeneous") {
    Rng rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix w = random_matrix(1 + rng.below(12), 1 + rng.below(12), rng);
        const double c = 4.0 * rng.normal();
        for (NormKind kind : {NormKind::OneToRms, NormKind::RmsToRms, NormKind::RmsToInf}) {
            const double base = operator_norm(w, kind);
            const double scaled = operator_norm(c * w, kind);
            CHECK(std::abs(scaled - std::abs(c) * base) <= 1e-12 * std::abs(c) * base + 1e-300);
        }
    }
}

TEST_CASE("norms satisfy the triangle inequality") {
    Rng rng(15);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = 1 + rng.below(10), cols = 1 + rng.below(10);
        const Matrix a = random_matrix(rows, cols, rng);
        const Matrix b = random_matrix(rows, cols, rng, 3.0);
        for (NormKind kind : {NormKind::OneToRms, NormKind::RmsToRms, NormKind::RmsToInf}) {
            CHECK(operator_norm(a + b, kind) <= (operator_norm(a, kind) + operator_norm(b, kind)) * (1 + 1e-12));
        }
    }
}

TEST_CASE("norm kinds round-trip through their labels") {
    for (NormKind kind : {NormKind::OneToRms, NormKind::RmsToRms, NormKind::RmsToInf}) {
        CHECK(parse_norm_kind(to_string(kind)) == kind);
    }
    CHECK_FALSE(parse_norm_kind("spectral").has_value());
}
