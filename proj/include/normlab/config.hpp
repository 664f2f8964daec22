// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration, read from a JSON document. Every key is optional and
// falls back to the defaults below; unknown keys are errors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "normlab/analysis.hpp"
#include "normlab/model.hpp"
#include "normlab/scion.hpp"

namespace normlab {

struct OptimizerSection {
    double lr = 0.0625;
    double momentum = 0.1;
    double weight_decay = 0.0;
    ScheduleKind schedule = ScheduleKind::Constant;
    /// Tokens; 0 means the last logging horizon.
    std::uint64_t total_horizon = 0;
    double decay_fraction = 0.25;
    int ns_iters = 5;
    /// Per-group multipliers on lr.
    LayerLrScales layout;
};

struct DataSection {
    std::filesystem::path corpus;
    /// Tokens per training window.
    std::size_t context = 64;
    /// Sequences per step.
    std::size_t batch_size = 8;
    /// Window order.
    std::uint64_t seed = 0;
    /// Windows held out for evaluation.
    std::size_t eval_windows = 16;
};

struct SweepSection {
    std::vector<double> lrs;
    std::vector<std::size_t> batch_sizes;
    std::vector<LayerLrScales> layouts;
    std::vector<std::uint64_t> seeds;
    /// "fixed": every run uses the seed from `seeds`. "interleave": seeds are
    /// assigned round-robin along the lr grid, one run per grid point.
    std::string seed_policy = "fixed";
    std::size_t jobs = 1;
    bool tie_input_output = true;
};

struct LoggingSection {
    /// Evaluation horizons in tokens, strictly increasing. A step-0
    /// evaluation is always added.
    std::vector<std::uint64_t> horizons{1u << 14, 1u << 15, 1u << 16};
    bool checkpoint_at_eval = true;
};

struct AnalysisSection {
    SmoothingGate smoothing{true, 128, 1u << 15};
    std::size_t fit_points = 7;
    /// Parameter whose norm drives the loss-vs-norm analysis.
    std::string norm_param = "head";
    double band_lo = 6.8;
    double band_hi = 7.2;
};

struct RunConfig {
    std::string name = "run";
    /// Model init seed for `train`; sweeps take theirs from sweep.seeds.
    std::uint64_t seed = 0;
    ModelConfig model;
    OptimizerSection optimizer;
    DataSection data;
    SweepSection sweep;
    LoggingSection logging;
    AnalysisSection analysis;

    /// Throws ConfigError naming the offending key.
    void validate() const;
    std::uint64_t final_horizon() const { return logging.horizons.empty() ? 0 : logging.horizons.back(); }
    ScionConfig scion() const;
};

/// Throws ConfigError on malformed JSON, wrong types or unknown keys.
RunConfig parse_config(std::string_view json_text, std::string_view origin = "<config>");
/// Relative corpus paths resolve against the config file's directory.
RunConfig load_config(const std::filesystem::path& path);
/// Canonical JSON, keys in schema order. parse_config(dump_config(c)) == c.
std::string dump_config(const RunConfig& cfg);

/// Checks a learning-rate list is geometric with ratio 2^0.5 or 2.
void validate_lr_grid(const std::vector<double>& lrs);

}  // namespace normlab
