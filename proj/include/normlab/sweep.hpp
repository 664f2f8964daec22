// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Grid sweeps over (lr, batch, layout, seed).
//
// Output directory:
//   runs/<run_id>.jsonl   run log
//   runs/<run_id>.ckpt    last checkpoint
//   summary.csv           one row per (run, horizon)
//   failures.csv          runs that raised
//   config.json           the resolved config

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "normlab/config.hpp"
#include "normlab/corpus.hpp"
#include "normlab/train.hpp"

namespace normlab {

struct GridPoint {
    std::size_t lr_index = 0;
    std::size_t batch_index = 0;
    std::size_t layout_index = 0;
    std::size_t seed_index = 0;
};

/// Chooses the init seed for a grid point. `seeds` is sweep.seeds (or the
/// top-level seed when that list is empty).
using SeedPolicy = std::function<std::uint64_t(const GridPoint&, const std::vector<std::uint64_t>& seeds)>;

SeedPolicy fixed_seed_policy();
/// One run per (lr, batch, layout); seeds cycle along the lr grid.
SeedPolicy interleaved_seed_policy();

/// Expands the grid in (layout, batch, lr, seed) order. Empty axes fall back
/// to the single value from the optimizer, data and seed settings.
std::vector<RunSpec> expand_sweep(const RunConfig& cfg, const SeedPolicy& policy = {});

struct SweepFailure {
    std::string run_id;
    std::string error;
};

struct SweepResult {
    std::filesystem::path summary_csv;
    std::filesystem::path failures_csv;
    std::vector<std::string> completed;
    std::vector<SweepFailure> failures;
    std::size_t summary_rows = 0;
};

struct SweepOptions {
    /// Overrides sweep.seed_policy.
    SeedPolicy seed_policy;
    /// Overrides sweep.jobs when non-zero.
    std::size_t jobs = 0;
    std::function<void(const std::string& run_id, bool ok)> on_run_done;
};

/// Runs every grid point; a failing run is recorded and the rest continue.
SweepResult run_sweep(const RunConfig& cfg, const Corpus& corpus, const std::filesystem::path& out_dir,
                      const SweepOptions& options = {});

/// Summary CSV text for already-parsed logs, in the given order.
std::string summary_csv(const std::vector<RunLog>& logs);

}  // namespace normlab
