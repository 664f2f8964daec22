// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Reports over a directory of run logs: loss-vs-norm scans, lr/batch/horizon
// regressions, batch power laws, norm reach sets and layout rankings.
// Column sets are listed in docs/formats.md.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "normlab/analysis.hpp"
#include "normlab/config.hpp"
#include "normlab/runlog.hpp"

namespace normlab {

enum class ReportMode { NormScan, LrBs, PowerLaw, Reach, Layout };
std::string_view to_string(ReportMode mode);
std::optional<ReportMode> parse_report_mode(std::string_view text);

/// One (batch, layout, horizon) slice of the lr grid.
struct NormScanCell {
    std::size_t batch = 0;
    LayerLrScales layout;
    std::uint64_t tokens = 0;
    double init_loss = 0.0;
    std::vector<std::string> run_ids;
    /// Sorted by lr.
    std::vector<EnsemblePoint> points;
    std::optional<Ensemble> ensemble;
    std::string note;

    /// The constrained fit on smoothed losses, when it produced a vertex.
    const FitResult* primary() const;
};

/// Groups evals by (batch, layout, tokens). Smoothing follows the gate in
/// `analysis`; points outside it keep the raw loss with no stderr.
std::vector<NormScanCell> norm_scan(const std::vector<RunLog>& logs, const AnalysisSection& analysis);

std::string norm_scan_points_csv(const std::vector<NormScanCell>& cells);
std::string norm_scan_fits_csv(const std::vector<NormScanCell>& cells);
std::string norm_scan_optima_csv(const std::vector<NormScanCell>& cells);

/// Primary optima, one per cell that has one.
std::vector<Optimum> cell_optima(const std::vector<NormScanCell>& cells);

/// For each horizon, the batch whose cell reaches the lowest optimal loss.
std::vector<PowerLawPoint> best_batch_per_horizon(const std::vector<NormScanCell>& cells);

struct LayoutRank {
    std::string run_id;
    double lr = 0.0;
    std::size_t batch = 0;
    std::uint64_t seed = 0;
    LayerLrScales layout;
    std::uint64_t tokens = 0;
    double loss = 0.0;
    bool top_decile = false;
};

/// Runs ranked by their final eval loss; the best ceil(n / 10) are flagged.
std::vector<LayoutRank> layout_ranking(const std::vector<RunLog>& logs);

struct ReportOptions {
    AnalysisSection analysis;
    bool write_csv = true;
    bool write_svg = false;
};

struct ReportOutput {
    std::vector<std::filesystem::path> files;
    /// Short human-readable lines for the terminal.
    std::vector<std::string> summary;
};

/// Reads every *.jsonl in `logs_dir` and writes the mode's tables (and plots,
/// if asked) into `out_dir`. Throws Error on an empty directory and
/// SchemaError naming file:line on a malformed log.
ReportOutput emit_report(const std::filesystem::path& logs_dir, ReportMode mode, const std::filesystem::path& out_dir,
                         const ReportOptions& options = {});

}  // namespace normlab
