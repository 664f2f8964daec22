// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// normlab command line: train, sweep, disco-check, fit, scaling, plot.
// Output lands under $NORMLAB_OUT (default ./normlab-out) unless --out is given.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "normlab/config.hpp"
#include "normlab/corpus.hpp"
#include "normlab/disco.hpp"
#include "normlab/report.hpp"
#include "normlab/sweep.hpp"
#include "normlab/train.hpp"

using namespace normlab;
namespace fs = std::filesystem;

namespace {

fs::path output_root() {
    const char* env = std::getenv("NORMLAB_OUT");
    return env && *env ? fs::path(env) : fs::path("normlab-out");
}

Corpus open_corpus(const RunConfig& cfg) {
    if (cfg.data.corpus.empty()) throw ConfigError("data.corpus is not set");
    return Corpus::from_file(cfg.data.corpus, cfg.data.context, cfg.data.seed, cfg.data.eval_windows);
}

void print_summary(const ReportOutput& out) {
    for (const auto& line : out.summary) fmt::print("{}\n", line);
    for (const auto& f : out.files) fmt::print("wrote {}\n", f.string());
}

struct ReportArgs {
    std::string logs;
    std::string out;
    std::string mode;
    std::string config;
};

ReportOptions report_options(const ReportArgs& a, bool csv, bool svg) {
    ReportOptions o;
    o.write_csv = csv;
    o.write_svg = svg;
    if (!a.config.empty()) o.analysis = load_config(a.config).analysis;
    return o;
}

fs::path report_dir(const ReportArgs& a) {
    if (!a.out.empty()) return a.out;
    return fs::path(a.logs).parent_path() / "reports";
}

int run_report(const ReportArgs& a, std::initializer_list<ReportMode> allowed, bool csv, bool svg) {
    const auto mode = parse_report_mode(a.mode);
    if (!mode || std::find(allowed.begin(), allowed.end(), *mode) == allowed.end())
        throw ConfigError(fmt::format("mode '{}' is not available here", a.mode));
    print_summary(emit_report(a.logs, *mode, report_dir(a), report_options(a, csv, svg)));
    return 0;
}

void add_report_flags(CLI::App* cmd, ReportArgs& a, const std::string& default_mode, const std::string& modes) {
    cmd->add_option("--logs", a.logs, "directory of run logs (*.jsonl)")->required();
    cmd->add_option("--out", a.out, "report directory (default: <logs>/../reports)");
    cmd->add_option("--mode", a.mode, modes)->default_val(default_mode);
    cmd->add_option("--config", a.config, "config file whose analysis section to use");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"normlab: norm-constrained training experiments at desk scale"};
    app.require_subcommand(1);

    // train
    std::string train_config, run_id, resume, train_out, schedule;
    std::optional<double> lr;
    std::optional<std::size_t> batch;
    std::optional<std::uint64_t> seed, total_horizon;
    auto* train = app.add_subcommand("train", "train one run");
    train->add_option("--config", train_config, "run config (JSON)")->required();
    train->add_option("--run-id", run_id, "run id (default: config name)");
    train->add_option("--lr", lr, "base learning rate");
    train->add_option("--batch", batch, "sequences per step");
    train->add_option("--seed", seed, "model init seed");
    train->add_option("--schedule", schedule, "constant | linear-decay-tail");
    train->add_option("--total-horizon", total_horizon, "schedule horizon in tokens");
    train->add_option("--resume", resume, "checkpoint to continue from");
    train->add_option("--out", train_out, "directory for the log and checkpoint (default: $NORMLAB_OUT/runs)");

    // sweep
    std::string sweep_config, sweep_out;
    std::size_t jobs = 0;
    auto* sweep = app.add_subcommand("sweep", "run the (lr, batch, layout, seed) grid");
    sweep->add_option("--config", sweep_config, "run config (JSON)")->required();
    sweep->add_option("--out", sweep_out, "sweep directory (default: $NORMLAB_OUT/<name>)");
    sweep->add_option("--jobs", jobs, "concurrent runs (default: sweep.jobs)");

    // disco-check
    std::size_t world = 2, params = 5;
    std::uint64_t disco_seed = 0;
    std::string disco_mode = "ddp", disco_out;
    auto* disco = app.add_subcommand("disco-check", "distributed step equivalence against the single-rank reference");
    disco->add_option("--world-size", world, "simulated ranks")->default_val(2);
    disco->add_option("--params", params, "parameter count")->default_val(5);
    disco->add_option("--seed", disco_seed, "seed")->default_val(0);
    disco->add_option("--mode", disco_mode, "ddp | fsdp | embedding | experts")->default_val("ddp");
    disco->add_option("--out", disco_out, "CSV file (default: stdout)");

    ReportArgs fit_args, scaling_args, plot_args;
    auto* fit = app.add_subcommand("fit", "loss-vs-norm fits per (batch, horizon), or the layout ranking");
    add_report_flags(fit, fit_args, "norm-scan", "norm-scan | layout");
    auto* scaling = app.add_subcommand("scaling", "lr/batch/horizon regressions");
    add_report_flags(scaling, scaling_args, "lr-bs", "lr-bs | power-law | reach");
    auto* plot = app.add_subcommand("plot", "SVG plots");
    add_report_flags(plot, plot_args, "norm-scan", "norm-scan | lr-bs | power-law | reach");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            RunConfig cfg = load_config(train_config);
            if (!schedule.empty()) {
                auto k = parse_schedule_kind(schedule);
                if (!k) throw ConfigError(fmt::format("unknown schedule '{}'", schedule));
                cfg.optimizer.schedule = *k;
            }
            if (total_horizon) cfg.optimizer.total_horizon = *total_horizon;
            if (seed) cfg.seed = *seed;
            RunSpec spec = run_spec_from(cfg, run_id.empty() ? cfg.name : run_id);
            if (lr) spec.lr = *lr;
            if (batch) spec.batch = *batch;
            const Corpus corpus = open_corpus(cfg);
            TrainOptions opts;
            opts.out_dir = train_out.empty() ? output_root() / "runs" : fs::path(train_out);
            opts.resume_from = resume;
            opts.on_eval = [](const LogLine& l) {
                fmt::print("step {:>6}  tokens {:>9}  loss {:.4f}  head {:.4g}\n", l.step, l.tokens, l.raw_loss,
                           l.norms.count("head") ? l.norms.at("head") : 0.0);
            };
            const TrainResult r = run_training(cfg, spec, corpus, opts);
            fmt::print("wrote {}\nwrote {}\n", r.log_path.string(), r.checkpoint_path.string());
            return 0;
        }
        if (*sweep) {
            const RunConfig cfg = load_config(sweep_config);
            const Corpus corpus = open_corpus(cfg);
            const fs::path dir = sweep_out.empty() ? output_root() / cfg.name : fs::path(sweep_out);
            SweepOptions opts;
            opts.jobs = jobs;
            opts.on_run_done = [](const std::string& id, bool ok) { fmt::print("{} {}\n", ok ? "done  " : "FAILED", id); };
            const SweepResult r = run_sweep(cfg, corpus, dir, opts);
            fmt::print("{} runs completed, {} failed; {} summary rows in {}\n", r.completed.size(), r.failures.size(),
                       r.summary_rows, r.summary_csv.string());
            return r.failures.empty() ? 0 : 1;
        }
        if (*disco) {
            const auto mode = parse_disco_mode(disco_mode);
            if (!mode) throw ConfigError(fmt::format("unknown disco mode '{}'", disco_mode));
            const DiscoCheckReport r = disco_check(*mode, world, params, disco_seed);
            std::string csv =
                "mode,world_size,params,seed,rank,all_gather,all_to_all,all_reduce,agree,expected_all_gather,"
                "expected_all_to_all,max_abs_diff,tolerance,passed\n";
            for (const auto& row : r.ranks) {
                csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{:.17g},{:g},{}\n", to_string(r.mode), r.world_size,
                                   r.params, r.seed, row.rank, row.counts.all_gather, row.counts.all_to_all,
                                   row.counts.all_reduce, row.counts.agree, r.expected_all_gather, r.expected_all_to_all,
                                   row.max_abs_diff, r.tolerance, int(r.passed));
            }
            if (disco_out.empty()) {
                fmt::print("{}", csv);
            } else {
                std::ofstream(disco_out) << csv;
            }
            fmt::print(stderr, "disco-check {} M={} P={}: {}{}\n", to_string(r.mode), r.world_size, r.params,
                       r.passed ? "PASS" : "FAIL", r.detail.empty() ? "" : " (" + r.detail + ")");
            return r.passed ? 0 : 1;
        }
        if (*fit) return run_report(fit_args, {ReportMode::NormScan, ReportMode::Layout}, true, false);
        if (*scaling)
            return run_report(scaling_args, {ReportMode::LrBs, ReportMode::PowerLaw, ReportMode::Reach}, true, false);
        if (*plot)
            return run_report(plot_args, {ReportMode::NormScan, ReportMode::LrBs, ReportMode::PowerLaw, ReportMode::Reach},
                              false, true);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
