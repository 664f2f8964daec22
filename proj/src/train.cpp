// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0

#include "normlab/train.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include <fmt/format.h>

#include "normlab/norms.hpp"
#include "normlab/rng.hpp"

namespace normlab {

RunSpec run_spec_from(const RunConfig& cfg, std::string run_id) {
    return {std::move(run_id), cfg.optimizer.lr, cfg.data.batch_size, cfg.seed, cfg.optimizer.layout};
}

std::map<std::string, double> parameter_norms(std::span<const Matrix> params, const ModelConfig& cfg,
                                              const LayerLrScales& layout) {
    const auto groups = param_groups(cfg, layout);
    const auto names = param_names(cfg);
    const auto owner = resolve_groups(groups, params.size(), names);
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < params.size(); ++i) out[names[i]] = operator_norm(params[i], owner[i]->norm);
    return out;
}

namespace {

std::map<std::string, double> group_rates(double lr, const LayerLrScales& s) {
    return {{"input", lr * s.input}, {"hidden", lr * s.hidden}, {"output", lr * s.output}};
}

}  // namespace

TrainResult run_training(const RunConfig& cfg, const RunSpec& spec, const Corpus& corpus,
                         const TrainOptions& options) {
    cfg.validate();
    if (spec.batch == 0) throw ConfigError("batch size must be positive");
    if (!(spec.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (corpus.context() != cfg.data.context)
        throw ConfigError(fmt::format("corpus windows are {} tokens but data.context is {}", corpus.context(),
                                      cfg.data.context));
    const std::uint64_t per_step = static_cast<std::uint64_t>(spec.batch) * cfg.data.context;
    for (std::uint64_t h : cfg.logging.horizons) {
        if (h % per_step != 0)
            throw ConfigError(fmt::format("horizon {} is not a multiple of {} tokens per step (batch {} x context {})", h,
                                          per_step, spec.batch, cfg.data.context));
    }
    corpus.require_tokens(cfg.final_horizon());

    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };

    ScionConfig scion = cfg.scion();
    scion.base_lr = spec.lr;
    const auto groups = param_groups(cfg.model, spec.layout);
    const auto names = param_names(cfg.model);

    TrainResult result;
    std::uint64_t step = 0, tokens = 0, windows = 0;
    std::vector<Matrix> params;
    ScionState state;
    if (options.resume_from.empty()) {
        Rng rng(spec.seed);
        params = build_model(cfg.model, rng).params;
        state = ScionState(scion, params);
    } else {
        Checkpoint ck = load_checkpoint(options.resume_from);
        if (ck.names != names)
            throw SchemaError(fmt::format("{}: parameter names do not match the model config", options.resume_from.string()));
        Rng rng(spec.seed);
        const Model shape = build_model(cfg.model, rng);
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (ck.params[i].rows() != shape.params[i].rows() || ck.params[i].cols() != shape.params[i].cols())
                throw SchemaError(fmt::format("{}: {} has shape {}x{}, model expects {}x{}", options.resume_from.string(),
                                              names[i], ck.params[i].rows(), ck.params[i].cols(),
                                              shape.params[i].rows(), shape.params[i].cols()));
        }
        if (ck.tokens % per_step != 0)
            throw ConfigError(fmt::format("checkpoint at {} tokens is not a multiple of {} tokens per step", ck.tokens,
                                          per_step));
        step = ck.step;
        tokens = ck.tokens;
        windows = ck.windows;
        params = std::move(ck.params);
        state = ScionState(scion, params);
        state.momentum = std::move(ck.momentum);
    }

    RunHeader& h = result.header;
    h.run_id = spec.run_id;
    h.lr = spec.lr;
    h.batch = spec.batch;
    h.seed = spec.seed;
    h.data_seed = cfg.data.seed;
    h.context = cfg.data.context;
    h.layout = spec.layout;
    h.schedule = std::string(to_string(scion.schedule.kind));
    h.momentum = scion.momentum;
    h.weight_decay = scion.weight_decay;
    h.d_model = cfg.model.d_model;
    h.n_layers = cfg.model.n_layers;
    h.vocab_size = cfg.model.vocab_size;
    {
        const auto owner = resolve_groups(groups, names.size(), names);
        for (std::size_t i = 0; i < names.size(); ++i) h.norm_kinds[names[i]] = std::string(to_string(owner[i]->norm));
    }
    h.resumed_from = options.resume_from.string();

    std::ofstream log;
    const bool write = !options.out_dir.empty();
    if (write) {
        std::filesystem::create_directories(options.out_dir);
        result.log_path = options.out_dir / (spec.run_id + ".jsonl");
        result.checkpoint_path = options.out_dir / (spec.run_id + ".ckpt");
        log.open(result.log_path, std::ios::trunc);
        if (!log) throw Error(fmt::format("cannot write run log {}", result.log_path.string()));
        log << serialize(h) << '\n' << std::flush;
    }

    const TokenBatch eval_batch = corpus.eval_batch();
    std::string last_good = "none";
    const auto save = [&] {
        if (!write) return;
        save_checkpoint({step, tokens, windows, names, params, state.momentum}, result.checkpoint_path);
        last_good = fmt::format("{} (step {})", result.checkpoint_path.string(), step);
    };
    const auto evaluate = [&](double lr_now) {
        LogLine l;
        l.run_id = spec.run_id;
        l.step = step;
        l.tokens = tokens;
        l.raw_loss = forward_loss(params, cfg.model, eval_batch).loss;
        l.norms = parameter_norms(params, cfg.model, spec.layout);
        l.lr_effective = group_rates(lr_now, spec.layout);
        l.wall_ms = elapsed_ms();
        if (write) log << serialize(l) << '\n' << std::flush;
        if (options.on_eval) options.on_eval(l);
        result.evals.push_back(std::move(l));
    };

    try {
        if (options.resume_from.empty()) evaluate(lr_at(scion.schedule, 0, spec.lr));
        auto next = std::upper_bound(cfg.logging.horizons.begin(), cfg.logging.horizons.end(), tokens);
        while (tokens < cfg.final_horizon()) {
            const double lr = lr_at(scion.schedule, tokens, spec.lr);
            result.lr_trace.push_back({step, tokens, lr});
            const TokenBatch batch = corpus.train_batch(windows, spec.batch);
            const LossAndGrad lg = loss_and_grad(params, cfg.model, batch);
            scion_step(params, lg.grads, state, groups, lr, names);
            ++step;
            tokens += per_step;
            windows += spec.batch;
            if (next != cfg.logging.horizons.end() && tokens == *next) {
                evaluate(lr);
                if (cfg.logging.checkpoint_at_eval) save();
                ++next;
            }
        }
    } catch (const NonFiniteError& e) {
        throw TrainingAborted(fmt::format("run {} aborted at step {} ({} tokens): {}; last good checkpoint: {}",
                                          spec.run_id, step, tokens, e.what(), last_good));
    }
    if (!cfg.logging.checkpoint_at_eval) save();
    result.params = std::move(params);
    return result;
}

}  // namespace normlab
