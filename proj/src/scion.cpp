// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#include "normlab/scion.hpp"

#include <cmath>

#include <fmt/core.h>

#include "normlab/error.hpp"

namespace normlab {

std::string_view to_string(LayerGroup group) {
    switch (group) {
        case LayerGroup::Input: return "input";
        case LayerGroup::Hidden: return "hidden";
        case LayerGroup::Output: return "output";
    }
    return "?";
}

std::optional<LayerGroup> parse_layer_group(std::string_view text) {
    if (text == "input") return LayerGroup::Input;
    if (text == "hidden") return LayerGroup::Hidden;
    if (text == "output") return LayerGroup::Output;
    return std::nullopt;
}

std::string_view to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::Constant: return "constant";
        case ScheduleKind::LinearDecayTail: return "linear-decay-tail";
    }
    return "?";
}

std::optional<ScheduleKind> parse_schedule_kind(std::string_view text) {
    if (text == "constant") return ScheduleKind::Constant;
    if (text == "linear-decay-tail") return ScheduleKind::LinearDecayTail;
    return std::nullopt;
}

namespace {

std::string param_label(std::size_t i, std::span<const std::string> names) {
    return i < names.size() ? names[i] : fmt::format("#{}", i);
}

}  // namespace

std::vector<const ParamGroup*> resolve_groups(std::span<const ParamGroup> groups, std::size_t param_count,
                                              std::span<const std::string> names) {
    std::vector<const ParamGroup*> owner(param_count, nullptr);
    for (const auto& group : groups) {
        for (std::size_t idx : group.members) {
            if (idx >= param_count) {
                throw Error(fmt::format("param group '{}' refers to parameter {} of {}", group.name, idx, param_count));
            }
            if (owner[idx] != nullptr) {
                throw Error(fmt::format("parameter {} is in groups '{}' and '{}'", param_label(idx, names),
                                        owner[idx]->name, group.name));
            }
            owner[idx] = &group;
        }
    }
    for (std::size_t i = 0; i < param_count; ++i) {
        if (owner[i] == nullptr) throw Error(fmt::format("parameter {} is not covered by any group", param_label(i, names)));
    }
    return owner;
}

double lr_at(const ScheduleSpec& schedule, std::uint64_t tokens_seen, double base_lr) {
    const bool bounded = schedule.total_horizon > 0 || schedule.kind != ScheduleKind::Constant;
    if (bounded && tokens_seen > schedule.total_horizon) {
        throw Error(fmt::format("lr_at: {} tokens is past the horizon of {}", tokens_seen, schedule.total_horizon));
    }
    if (schedule.kind == ScheduleKind::Constant) return base_lr;

    if (!(schedule.decay_fraction > 0.0 && schedule.decay_fraction <= 1.0)) {
        throw Error(fmt::format("lr_at: decay_fraction {} outside (0, 1]", schedule.decay_fraction));
    }
    const double horizon = static_cast<double>(schedule.total_horizon);
    const double t = static_cast<double>(tokens_seen);
    const double decay_len = schedule.decay_fraction * horizon;
    if (t < horizon - decay_len) return base_lr;
    return base_lr * (horizon - t) / decay_len;
}

ScionState::ScionState(ScionConfig cfg, std::span<const Matrix> params) : config(std::move(cfg)) {
    if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
        throw Error(fmt::format("momentum {} outside [0, 1)", config.momentum));
    }
    if (config.weight_decay < 0.0) throw Error(fmt::format("negative weight decay {}", config.weight_decay));
    momentum.reserve(params.size());
    for (const auto& p : params) momentum.emplace_back(p.rows(), p.cols());
}

void momentum_blend(std::span<double> buffer, std::span<const double> grad, double mu) {
    if (buffer.size() != grad.size()) {
        throw ShapeError(fmt::format("momentum buffer has {} entries, gradient {}", buffer.size(), grad.size()));
    }
    if (mu == 0.0) {
        std::copy(grad.begin(), grad.end(), buffer.begin());
        return;
    }
    for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = (1.0 - mu) * grad[i] + mu * buffer[i];
}

const Matrix& momentum_update(ScionState& state, std::size_t param_id, const Matrix& grad) {
    if (param_id >= state.momentum.size()) throw Error(fmt::format("no momentum buffer for parameter {}", param_id));
    Matrix& buffer = state.momentum[param_id];
    if (!buffer.same_shape(grad)) {
        throw ShapeError(fmt::format("gradient {}x{} does not match parameter {} of shape {}x{}", grad.rows(),
                                     grad.cols(), param_id, buffer.rows(), buffer.cols()));
    }
    momentum_blend(buffer.data(), grad.data(), state.config.momentum);
    return buffer;
}

void apply_update(std::span<double> param, std::span<const double> update, double lr, double weight_decay,
                  std::string_view name) {
    if (param.size() != update.size()) {
        throw ShapeError(fmt::format("update for {} has {} entries, parameter {}", name, update.size(), param.size()));
    }
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double next = param[i] - lr * (update[i] + weight_decay * param[i]);
        if (!std::isfinite(next)) throw NonFiniteError(fmt::format("non-finite update for parameter {}", name));
        param[i] = next;
    }
}

void apply_update(Matrix& param, const Matrix& update, double lr, double weight_decay, std::string_view name) {
    if (!param.same_shape(update)) {
        throw ShapeError(fmt::format("update {}x{} does not match parameter {} ({}x{})", update.rows(), update.cols(),
                                     name, param.rows(), param.cols()));
    }
    apply_update(param.data(), update.data(), lr, weight_decay, name);
}

void scion_step(std::span<Matrix> params, std::span<const Matrix> grads, ScionState& state,
                std::span<const ParamGroup> groups, double lr, std::span<const std::string> names) {
    if (grads.size() != params.size()) {
        throw ShapeError(fmt::format("{} gradients for {} parameters", grads.size(), params.size()));
    }
    if (state.momentum.size() != params.size()) {
        throw ShapeError(fmt::format("optimizer state has {} buffers for {} parameters", state.momentum.size(),
                                     params.size()));
    }
    const auto owner = resolve_groups(groups, params.size(), names);

    for (std::size_t i = 0; i < params.size(); ++i) momentum_update(state, i, grads[i]);

    std::vector<Matrix> updates;
    updates.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) updates.push_back(lmo(state.momentum[i], owner[i]->norm, state.config.ns));

    for (std::size_t i = 0; i < params.size(); ++i) {
        apply_update(params[i], updates[i], lr * owner[i]->lr_scale, state.config.weight_decay, param_label(i, names));
    }
}

}  // namespace normlab
