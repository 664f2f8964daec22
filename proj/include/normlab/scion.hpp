// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "normlab/lmo.hpp"
#include "normlab/matrix.hpp"
#include "normlab/norms.hpp"

namespace normlab {

enum class LayerGroup { Input, Hidden, Output };

std::string_view to_string(LayerGroup group);
std::optional<LayerGroup> parse_layer_group(std::string_view text);

/// Parameters sharing a norm and a learning-rate multiplier. `members` are
/// indices into the flat parameter list handed to the optimizer.
struct ParamGroup {
    std::string name;
    LayerGroup layer_group = LayerGroup::Hidden;
    NormKind norm = NormKind::RmsToRms;
    double lr_scale = 1.0;
    std::vector<std::size_t> members;
};

/// Maps every parameter index to its group. Throws if a parameter is in no
/// group or in more than one.
std::vector<const ParamGroup*> resolve_groups(std::span<const ParamGroup> groups, std::size_t param_count,
                                              std::span<const std::string> names = {});

enum class ScheduleKind { Constant, LinearDecayTail };

std::string_view to_string(ScheduleKind kind);
std::optional<ScheduleKind> parse_schedule_kind(std::string_view text);

/// Learning-rate schedule over a token horizon. No warmup. The decay kind
/// holds the base rate for the first (1 - decay_fraction) of the horizon and
/// then decays linearly to zero at total_horizon. A constant schedule with
/// total_horizon == 0 is unbounded.
struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::Constant;
    std::uint64_t total_horizon = 0;
    double decay_fraction = 0.25;
};

/// Throws if tokens_seen is past the horizon.
double lr_at(const ScheduleSpec& schedule, std::uint64_t tokens_seen, double base_lr);

struct ScionConfig {
    double base_lr = 0.0;
    /// Interpolation form: buffer <- (1 - momentum) * grad + momentum * buffer.
    double momentum = 0.0;
    /// Decoupled decay, W <- W - lr * (u + weight_decay * W). Zero is the
    /// unconstrained optimizer.
    double weight_decay = 0.0;
    NewtonSchulzConfig ns;
    ScheduleSpec schedule;
};

/// Momentum buffers plus hyperparameters. One logical owner per run.
struct ScionState {
    ScionConfig config;
    std::vector<Matrix> momentum;

    ScionState() = default;
    ScionState(ScionConfig cfg, std::span<const Matrix> params);
};

/// buffer <- (1 - mu) grad + mu buffer; with mu = 0 the buffer is a copy of grad.
const Matrix& momentum_update(ScionState& state, std::size_t param_id, const Matrix& grad);

/// Same blend on raw storage, used for sharded and batched buffers.
void momentum_blend(std::span<double> buffer, std::span<const double> grad, double mu);

/// W <- W - lr * (u + weight_decay * W). Throws NonFiniteError naming the
/// parameter if the result is not finite.
void apply_update(Matrix& param, const Matrix& update, double lr, double weight_decay, std::string_view name);
void apply_update(std::span<double> param, std::span<const double> update, double lr, double weight_decay,
                  std::string_view name);

/// One optimizer step. `lr` is base_lr * schedule(t); each group further
/// multiplies it by its lr_scale.
void scion_step(std::span<Matrix> params, std::span<const Matrix> grads, ScionState& state,
                std::span<const ParamGroup> groups, double lr, std::span<const std::string> names = {});

}  // namespace normlab
