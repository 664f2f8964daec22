// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Single training run: Scion on the desk model, evaluated at token horizons.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "normlab/config.hpp"
#include "normlab/corpus.hpp"
#include "normlab/runlog.hpp"

namespace normlab {

/// Raised when a run hits a non-finite loss or update. The message names the
/// last checkpoint that was written, if any.
class TrainingAborted : public Error {
public:
    using Error::Error;
};

/// What varies between runs of one sweep.
struct RunSpec {
    std::string run_id;
    double lr = 0.0;
    std::size_t batch = 0;
    std::uint64_t seed = 0;
    LayerLrScales layout;
};

/// The single run described by the optimizer, data and seed sections.
RunSpec run_spec_from(const RunConfig& cfg, std::string run_id);

struct TrainOptions {
    /// Log goes to <out_dir>/<run_id>.jsonl, checkpoint to <out_dir>/<run_id>.ckpt.
    /// Empty: nothing is written.
    std::filesystem::path out_dir;
    /// Continue from this checkpoint instead of a fresh init.
    std::filesystem::path resume_from;
    std::function<void(const LogLine&)> on_eval;
};

struct LrTracePoint {
    std::uint64_t step = 0;
    /// Tokens seen before the step.
    std::uint64_t tokens = 0;
    double lr = 0.0;
};

struct TrainResult {
    RunHeader header;
    std::vector<LogLine> evals;
    std::vector<LrTracePoint> lr_trace;
    std::vector<Matrix> params;
    std::filesystem::path log_path;
    std::filesystem::path checkpoint_path;
};

/// Trains until the last logging horizon. A fresh run logs a step-0 eval.
/// Throws ConfigError if a horizon is not a whole number of steps, and
/// CorpusExhausted before the first step if the corpus is too short.
TrainResult run_training(const RunConfig& cfg, const RunSpec& spec, const Corpus& corpus,
                         const TrainOptions& options = {});

/// Parameter name -> its assigned operator norm.
std::map<std::string, double> parameter_norms(std::span<const Matrix> params, const ModelConfig& cfg,
                                              const LayerLrScales& layout);

}  // namespace normlab
