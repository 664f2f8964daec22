// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0

#include "normlab/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

#include <fmt/format.h>

namespace normlab {

SeedPolicy fixed_seed_policy() {
    return [](const GridPoint& p, const std::vector<std::uint64_t>& seeds) { return seeds.at(p.seed_index); };
}

SeedPolicy interleaved_seed_policy() {
    return [](const GridPoint& p, const std::vector<std::uint64_t>& seeds) {
        return seeds.at(p.lr_index % seeds.size());
    };
}

std::vector<RunSpec> expand_sweep(const RunConfig& cfg, const SeedPolicy& policy) {
    const auto& s = cfg.sweep;
    const std::vector<double> lrs = s.lrs.empty() ? std::vector<double>{cfg.optimizer.lr} : s.lrs;
    const std::vector<std::size_t> batches =
        s.batch_sizes.empty() ? std::vector<std::size_t>{cfg.data.batch_size} : s.batch_sizes;
    const std::vector<LayerLrScales> layouts =
        s.layouts.empty() ? std::vector<LayerLrScales>{cfg.optimizer.layout} : s.layouts;
    const std::vector<std::uint64_t> seeds = s.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : s.seeds;

    const bool interleave = !policy && s.seed_policy == "interleave";
    const SeedPolicy choose = policy ? policy : interleave ? interleaved_seed_policy() : fixed_seed_policy();
    const std::size_t seed_axis = interleave ? 1 : seeds.size();

    std::vector<RunSpec> out;
    for (std::size_t li = 0; li < layouts.size(); ++li) {
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            for (std::size_t ei = 0; ei < lrs.size(); ++ei) {
                for (std::size_t si = 0; si < seed_axis; ++si) {
                    const GridPoint p{ei, bi, li, si};
                    const std::uint64_t seed = choose(p, seeds);
                    RunSpec r;
                    r.run_id = fmt::format("r{:03}_lr{:.6g}_b{}_L{}_s{}", out.size(), lrs[ei], batches[bi], li, seed);
                    r.lr = lrs[ei];
                    r.batch = batches[bi];
                    r.seed = seed;
                    r.layout = layouts[li];
                    out.push_back(std::move(r));
                }
            }
        }
    }
    return out;
}

std::string summary_csv(const std::vector<RunLog>& logs) {
    std::vector<std::string> norm_cols;
    for (const auto& log : logs) {
        for (const auto& e : log.evals)
            for (const auto& [name, v] : e.norms)
                if (std::find(norm_cols.begin(), norm_cols.end(), name) == norm_cols.end()) norm_cols.push_back(name);
    }
    std::string out = "run_id,lr,batch,seed,layout_input,layout_hidden,layout_output,step,tokens,loss,lr_input,lr_hidden,lr_output";
    for (const auto& n : norm_cols) out += ",norm:" + n;
    out += '\n';
    const auto num = [](double v) { return fmt::format("{:.17g}", v); };
    const auto field = [&](const std::map<std::string, double>& m, const std::string& k) {
        auto it = m.find(k);
        return it == m.end() ? std::string() : num(it->second);
    };
    for (const auto& log : logs) {
        const auto& h = log.header;
        for (const auto& e : log.evals) {
            if (e.tokens == 0) continue;
            out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}", h.run_id, num(h.lr), h.batch, h.seed,
                               num(h.layout.input), num(h.layout.hidden), num(h.layout.output), e.step, e.tokens,
                               num(e.raw_loss), field(e.lr_effective, "input"), field(e.lr_effective, "hidden"),
                               field(e.lr_effective, "output"));
            for (const auto& n : norm_cols) out += "," + field(e.norms, n);
            out += '\n';
        }
    }
    return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", path.string()));
    out << text;
}

std::string csv_escape(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

}  // namespace

SweepResult run_sweep(const RunConfig& cfg, const Corpus& corpus, const std::filesystem::path& out_dir,
                      const SweepOptions& options) {
    cfg.validate();
    const auto runs = expand_sweep(cfg, options.seed_policy);
    if (runs.empty()) throw ConfigError("sweep grid is empty");
    const auto runs_dir = out_dir / "runs";
    std::filesystem::create_directories(runs_dir);
    write_text(out_dir / "config.json", dump_config(cfg) + "\n");

    std::vector<std::optional<RunLog>> logs(runs.size());
    std::vector<std::string> errors(runs.size());
    std::atomic<std::size_t> next{0};
    std::mutex report_mu;
    const auto worker = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) {
            bool ok = false;
            try {
                TrainResult r = run_training(cfg, runs[i], corpus, {runs_dir, {}, {}});
                logs[i] = RunLog{r.log_path, r.header, std::move(r.evals)};
                ok = true;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
            if (options.on_run_done) {
                std::lock_guard lock(report_mu);
                options.on_run_done(runs[i].run_id, ok);
            }
        }
    };
    const std::size_t jobs = std::min(options.jobs != 0 ? options.jobs : cfg.sweep.jobs, runs.size());
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    SweepResult result;
    std::vector<RunLog> done;
    std::string failures = "run_id,error\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (logs[i]) {
            result.completed.push_back(runs[i].run_id);
            for (const auto& e : logs[i]->evals) result.summary_rows += e.tokens > 0 ? 1 : 0;
            done.push_back(std::move(*logs[i]));
        } else {
            result.failures.push_back({runs[i].run_id, errors[i]});
            failures += runs[i].run_id + "," + csv_escape(errors[i]) + "\n";
        }
    }
    result.summary_csv = out_dir / "summary.csv";
    result.failures_csv = out_dir / "failures.csv";
    write_text(result.summary_csv, summary_csv(done));
    write_text(result.failures_csv, failures);
    return result;
}

}  // namespace normlab
