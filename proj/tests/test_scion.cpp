// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "normlab/error.hpp"
#include "normlab/scion.hpp"
#include "ns_envelope.hpp"
#include "test_support.hpp"

using namespace normlab;
using namespace normlab::testing;

namespace {

std::vector<ParamGroup> single_group(NormKind norm, LayerGroup layer = LayerGroup::Hidden) {
    return {ParamGroup{"all", layer, norm, 1.0, {0}}};
}

}  // namespace

TEST_CASE("momentum_update: mu = 0 copies the gradient") {
    Rng rng(1);
    std::vector<Matrix> params{random_matrix(3, 4, rng)};
    ScionState state({.momentum = 0.0}, params);
    state.momentum[0] = random_matrix(3, 4, rng);
    const Matrix g = random_matrix(3, 4, rng);
    CHECK(momentum_update(state, 0, g) == g);
}

TEST_CASE("momentum_update: interpolation form") {
    Rng rng(2);
    std::vector<Matrix> params{Matrix(2, 2)};
    ScionState state({.momentum = 0.1}, params);
    const Matrix b = random_matrix(2, 2, rng);
    const Matrix g = random_matrix(2, 2, rng);
    state.momentum[0] = b;
    const Matrix expected = 0.9 * g + 0.1 * b;
    CHECK(max_abs_diff(momentum_update(state, 0, g), expected) < 1e-15);

    ScionState half({.momentum = 0.5}, params);
    momentum_update(half, 0, g);
    CHECK(max_abs_diff(momentum_update(half, 0, g), 0.75 * g) < 1e-15);

    CHECK_THROWS_AS(momentum_update(half, 0, Matrix(3, 2)), ShapeError);
}

TEST_CASE("ScionState validates hyperparameters") {
    std::vector<Matrix> params{Matrix(1, 1)};
    CHECK_THROWS_AS(ScionState({.momentum = 1.0}, params), Error);
    CHECK_THROWS_AS(ScionState({.momentum = -0.1}, params), Error);
    CHECK_THROWS_AS(ScionState({.weight_decay = -1.0}, params), Error);
    ScionState ok({.momentum = 0.5}, params);
    CHECK(ok.momentum[0].rows() == 1);
}

TEST_CASE("scion_step: identity in the output group") {
    std::vector<Matrix> params{Matrix::identity(4)};
    const std::vector<Matrix> grads{Matrix::identity(4)};
    ScionState state({.base_lr = 0.5}, params);
    const auto groups = single_group(NormKind::RmsToInf, LayerGroup::Output);
    scion_step(params, grads, state, groups, 0.5);
    CHECK(max_abs_diff(params[0], 0.75 * Matrix::identity(4)) < 1e-15);
}

TEST_CASE("scion_step: lr_scale multiplies the step per group") {
    std::vector<Matrix> params{Matrix::identity(4), Matrix::identity(4), Matrix::identity(4)};
    const std::vector<Matrix> grads(3, Matrix::identity(4));
    ScionState state({.base_lr = 0.125}, params);
    const std::vector<ParamGroup> groups{
        {"in", LayerGroup::Input, NormKind::RmsToInf, 1.0, {0}},
        {"hid", LayerGroup::Hidden, NormKind::RmsToInf, 1.0 / 8.0, {1}},
        {"out", LayerGroup::Output, NormKind::RmsToInf, 1.0, {2}},
    };
    scion_step(params, grads, state, groups, 0.125);
    // Dual of I_4 is 0.5 I_4, so the diagonal moves by lr / 2.
    CHECK(params[0](0, 0) == 1.0 - 0.125 * 0.5);
    CHECK(params[1](0, 0) == 1.0 - std::ldexp(1.0, -6) * 0.5);
    CHECK(params[2](0, 0) == 1.0 - 0.125 * 0.5);
}

TEST_CASE("scion_step: coverage and finiteness errors") {
    std::vector<Matrix> params{Matrix::identity(2), Matrix::identity(2)};
    const std::vector<Matrix> grads(2, Matrix::identity(2));
    const std::vector<std::string> names{"wq", "wk"};
    ScionState state({.base_lr = 1.0}, params);

    const std::vector<ParamGroup> partial{{"a", LayerGroup::Hidden, NormKind::RmsToRms, 1.0, {0}}};
    try {
        scion_step(params, grads, state, partial, 1.0, names);
        FAIL("expected uncovered-parameter error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("wk") != std::string::npos);
    }
    const std::vector<ParamGroup> doubled{{"a", LayerGroup::Hidden, NormKind::RmsToRms, 1.0, {0, 1}},
                                          {"b", LayerGroup::Hidden, NormKind::RmsToRms, 1.0, {1}}};
    CHECK_THROWS_AS(scion_step(params, grads, state, doubled, 1.0, names), Error);

    const std::vector<ParamGroup> both{{"a", LayerGroup::Hidden, NormKind::RmsToInf, 1.0, {0, 1}}};
    try {
        scion_step(params, grads, state, both, std::numeric_limits<double>::infinity(), names);
        FAIL("expected non-finite error");
    } catch (const NonFiniteError& e) {
        CHECK(std::string(e.what()).find("wq") != std::string::npos);
    }
}

TEST_CASE("unconstrained steps have norm lr under the assigned norm") {
    Rng rng(3);
    for (NormKind kind : {NormKind::OneToRms, NormKind::RmsToInf, NormKind::RmsToRms}) {
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<Matrix> params{random_matrix(1 + rng.below(10), 1 + rng.below(10), rng)};
            const std::vector<Matrix> grads{random_matrix(params[0].rows(), params[0].cols(), rng)};
            const Matrix before = params[0];
            ScionState state({.base_lr = 0.3}, params);
            scion_step(params, grads, state, single_group(kind), 0.3);
            const double step = operator_norm(params[0] - before, kind);
            if (kind == NormKind::RmsToRms) {
                CHECK(step >= 0.3 * kNsTopSigmaLo);
                CHECK(step <= 0.3 * kNsSigmaHi);
            } else {
                CHECK(std::abs(step - 0.3) < 1e-12);
            }
        }
    }
}

TEST_CASE("weight decay drives the norm to the 1/lambda fixed point") {
    Rng rng(4);
    for (NormKind kind : {NormKind::OneToRms, NormKind::RmsToInf, NormKind::RmsToRms}) {
        std::vector<Matrix> params{random_matrix(6, 5, rng, 0.1)};
        const Matrix direction = random_matrix(6, 5, rng);
        const std::vector<Matrix> grads{direction};
        ScionState state({.base_lr = 0.05, .momentum = 0.1, .weight_decay = 0.1}, params);
        for (int step = 0; step < 2000; ++step) scion_step(params, grads, state, single_group(kind), 0.05);
        const double u_norm = operator_norm(lmo(direction, kind), kind);
        INFO(to_string(kind));
        CHECK(std::abs(operator_norm(params[0], kind) - u_norm / 0.1) < 0.05 * u_norm / 0.1);
        if (kind != NormKind::RmsToRms) CHECK(std::abs(operator_norm(params[0], kind) - 10.0) < 0.5);
    }
}

TEST_CASE("scion_step is deterministic") {
    auto run = [] {
        Rng rng(5);
        std::vector<Matrix> params{random_matrix(4, 4, rng), random_matrix(3, 4, rng)};
        ScionState state({.base_lr = 0.1, .momentum = 0.1, .weight_decay = 0.01}, params);
        const std::vector<ParamGroup> groups{{"a", LayerGroup::Hidden, NormKind::RmsToRms, 1.0, {0}},
                                             {"b", LayerGroup::Output, NormKind::RmsToInf, 0.5, {1}}};
        for (int step = 0; step < 20; ++step) {
            const std::vector<Matrix> grads{random_matrix(4, 4, rng), random_matrix(3, 4, rng)};
            scion_step(params, grads, state, groups, 0.1);
        }
        return params;
    };
    const auto a = run(), b = run();
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
}

TEST_CASE("lr_at") {
    const ScheduleSpec constant{};
    CHECK(lr_at(constant, 0, 0.3) == 0.3);
    CHECK(lr_at(constant, 123456789, 0.3) == 0.3);

    const ScheduleSpec decay{ScheduleKind::LinearDecayTail, 8000, 0.25};
    CHECK(lr_at(decay, 0, 0.2) == 0.2);
    CHECK(lr_at(decay, 5999, 0.2) == 0.2);
    CHECK(lr_at(decay, 6000, 0.2) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(lr_at(decay, 7000, 0.2) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(lr_at(decay, 8000, 0.2) == 0.0);
    CHECK_THROWS_AS(lr_at(decay, 8001, 0.2), Error);

    const ScheduleSpec bounded_constant{ScheduleKind::Constant, 100, 0.25};
    CHECK_THROWS_AS(lr_at(bounded_constant, 101, 0.2), Error);

    // Continuity across the start of the tail.
    const ScheduleSpec big{ScheduleKind::LinearDecayTail, 1'000'000, 0.25};
    CHECK(std::abs(lr_at(big, 750'001, 1.0) - lr_at(big, 749'999, 1.0)) < 1e-5);
}

TEST_CASE("labels round-trip") {
    for (auto g : {LayerGroup::Input, LayerGroup::Hidden, LayerGroup::Output}) CHECK(parse_layer_group(to_string(g)) == g);
    for (auto k : {ScheduleKind::Constant, ScheduleKind::LinearDecayTail}) CHECK(parse_schedule_kind(to_string(k)) == k);
    CHECK_FALSE(parse_schedule_kind("cosine").has_value());
}
