// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "normlab/linalg.hpp"
#include "normlab/lmo.hpp"
#include "ns_envelope.hpp"
#include "test_support.hpp"

using namespace normlab;
using namespace normlab::testing;

namespace {

double scalar_oracle(double x, const NewtonSchulzConfig& cfg) {
    // f(x) = a x + b x^3 + c x^5, applied n_iter times.
    for (int k = 0; k < cfg.n_iter; ++k) x = cfg.a * x + cfg.b * std::pow(x, 3) + cfg.c * std::pow(x, 5);
    return x;
}

}  // namespace

TEST_CASE("dual_one_to_rms") {
    Matrix expected = Matrix::identity(4);
    expected *= 2.0;
    CHECK(max_abs_diff(dual_one_to_rms(Matrix::identity(4)), expected) < 1e-15);

    Matrix g(3, 3, {1, 0, 2, 3, 0, 4, 5, 0, 6});
    const Matrix u = dual_one_to_rms(g);
    for (std::size_t r = 0; r < 3; ++r) CHECK(u(r, 1) == 0.0);
    CHECK(op_norm_one_to_rms(u) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(1);
    const Matrix r = dual_one_to_rms(random_matrix(8, 8, rng));
    for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(rms_vector_norm(r.col(c)) - 1.0) < 1e-12);
}

TEST_CASE("newton_schulz on an orthogonal input follows the scalar quintic") {
    const NewtonSchulzConfig cfg;
    const double s5 = scalar_oracle(0.5, cfg);  // ||I_4||_F = 2
    const Svd s = svd_oracle(newton_schulz(Matrix::identity(4), cfg));
    for (double sv : s.sigma) CHECK(std::abs(sv - s5) < 1e-10);

    Matrix expected = Matrix::identity(4);
    expected *= s5;
    CHECK(max_abs_diff(dual_rms_to_rms(Matrix::identity(4), cfg), expected) < 1e-10);
}

TEST_CASE("newton_schulz preserves zero singular directions") {
    const std::vector<double> d{7.0, 0.0};
    const NewtonSchulzConfig cfg;
    const Matrix out = newton_schulz(Matrix::diagonal(d), cfg);
    CHECK(out(0, 0) == doctest::Approx(scalar_oracle(1.0, cfg)).epsilon(1e-12));
    CHECK(out(0, 1) == 0.0);
    CHECK(out(1, 0) == 0.0);
    CHECK(out(1, 1) == 0.0);
}

TEST_CASE("newton_schulz maps each singular value through the scalar iteration") {
    Rng rng(2);
    const NewtonSchulzConfig cfg;
    for (auto [rows, cols] : {std::pair{16, 16}, std::pair{12, 5}, std::pair{5, 12}}) {
        const Matrix g = random_matrix(rows, cols, rng);
        const Svd in = svd_oracle(g);
        const Svd out = svd_oracle(newton_schulz(g, cfg));
        const double fro = frobenius_norm(g) + cfg.eps;
        std::vector<double> mapped;
        for (double sv : in.sigma) mapped.push_back(scalar_oracle(sv / fro, cfg));
        std::sort(mapped.rbegin(), mapped.rend());
        for (std::size_t k = 0; k < mapped.size(); ++k) CHECK(std::abs(out.sigma[k] - mapped[k]) < 1e-10);
    }
}

TEST_CASE("newton_schulz singular values stay in the swept envelope") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const Svd s = svd_oracle(newton_schulz(random_matrix(16, 16, rng)));
        CHECK(s.sigma.front() <= kNsSigmaHi);
        CHECK(s.sigma.back() >= kNsSigmaLo);
    }
}

TEST_CASE("newton_schulz rejects non-finite input") {
    Matrix g = Matrix::identity(3);
    g(1, 2) = std::nan("");
    CHECK_THROWS_AS(newton_schulz(g), NonFiniteError);
}

TEST_CASE("dual_rms_to_rms exact and Newton-Schulz variants") {
    Rng rng(4);
    const Matrix tall = random_matrix(4, 2, rng);
    CHECK(op_norm_rms_to_rms(dual_rms_to_rms_exact(tall)) == doctest::Approx(1.0).epsilon(1e-12));
    // Spectral condition: ||dW||_* = sqrt(d_out / d_in).
    CHECK(svd_oracle(dual_rms_to_rms_exact(tall)).sigma[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    for (int trial = 0; trial < 100; ++trial) {
        const Matrix g = random_matrix(8, 8, rng);
        CHECK(frobenius_norm(dual_rms_to_rms(g) - dual_rms_to_rms_exact(g)) < kNsFrobeniusBound8x8);
    }
}

TEST_CASE("dual_rms_to_inf") {
    Matrix half = Matrix::identity(4);
    half *= 0.5;
    const Matrix u = dual_rms_to_inf(Matrix::identity(4));
    CHECK(max_abs_diff(u, half) < 1e-15);
    CHECK(op_norm_rms_to_inf(u) == doctest::Approx(1.0).epsilon(1e-15));

    const Matrix single = dual_rms_to_inf(Matrix(1, 4, {3, 0, 0, 0}));
    CHECK(single(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(single(0, 1) == 0.0);

    Matrix with_zero(2, 3, {0, 0, 0, 1, 2, 3});
    const Matrix z = dual_rms_to_inf(with_zero);
    for (double v : z.row(0)) CHECK(v == 0.0);

    Rng rng(5);
    const Matrix r = dual_rms_to_inf(random_matrix(8, 8, rng));
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(rms_vector_norm(r.row(i)) - 1.0 / 8.0) < 1e-12);
}

TEST_CASE("duals have unit norm and ignore positive scale") {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix g = random_matrix(1 + rng.below(12), 1 + rng.below(12), rng);
        const double c = std::exp(3.0 * rng.normal());
        CHECK(std::abs(op_norm_one_to_rms(dual_one_to_rms(g)) - 1.0) < 1e-9);
        CHECK(std::abs(op_norm_rms_to_inf(dual_rms_to_inf(g)) - 1.0) < 1e-9);
        CHECK(std::abs(op_norm_rms_to_rms(dual_rms_to_rms_exact(g)) - 1.0) < 1e-9);
        const double ns = op_norm_rms_to_rms(dual_rms_to_rms(g));
        CHECK(ns >= kNsTopSigmaLo);
        CHECK(ns <= kNsSigmaHi);

        CHECK(max_abs_diff(dual_one_to_rms(c * g), dual_one_to_rms(g)) < 1e-9);
        CHECK(max_abs_diff(dual_rms_to_inf(c * g), dual_rms_to_inf(g)) < 1e-9);
        CHECK(max_abs_diff(dual_rms_to_rms_exact(c * g), dual_rms_to_rms_exact(g)) < 1e-9);
        CHECK(max_abs_diff(dual_rms_to_rms(c * g), dual_rms_to_rms(g)) < 1e-9);
    }
}

TEST_CASE("batched_lmo") {
    const Matrix id = Matrix::identity(4);
    std::vector<Matrix> three{id, id, id};
    const Batch3D out = batched_lmo(Batch3D::from_slices(three), NormKind::RmsToInf);
    Matrix half = id;
    half *= 0.5;
    for (std::size_t e = 0; e < 3; ++e) CHECK(out.slice(e) == half);

    Rng rng(7);
    std::vector<Matrix> slices, transposed;
    for (int e = 0; e < 4; ++e) {
        slices.push_back(random_matrix(5, 3, rng));
        transposed.push_back(slices.back().transposed());
    }
    for (NormKind kind : {NormKind::OneToRms, NormKind::RmsToRms, NormKind::RmsToInf}) {
        const Batch3D direct = batched_lmo(Batch3D::from_slices(slices), kind);
        for (std::size_t e = 0; e < slices.size(); ++e) CHECK(direct.slice(e) == lmo(slices[e], kind));

        // (E, d_in, d_out) storage with the transpose flag == the plain path on (E, d_out, d_in).
        const Batch3D flipped = batched_lmo(Batch3D::from_slices(transposed), kind, {}, true);
        for (std::size_t e = 0; e < slices.size(); ++e) CHECK(flipped.slice(e).transposed() == direct.slice(e));
    }

    const std::vector<std::size_t> rank2{4, 4};
    CHECK_THROWS_AS(Batch3D::from_tensor(rank2, std::vector<double>(16)), ShapeError);
}
