// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel training of the tiny transformer on the simulated fabric.
// Shared by the unit and acceptance suites.

#pragma once

#include <vector>

#include "normlab/disco.hpp"
#include "normlab/model.hpp"

namespace normlab::testing {

enum class Parallelism { Reference, Ddp, Fsdp };

struct Trajectory {
    std::vector<double> losses;
    std::vector<Matrix> final_params;
    std::size_t step_all_gathers = 0;  // inside optimizer steps, rank 0
    std::size_t step_all_to_alls = 0;
};

inline ModelConfig trajectory_model() {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.n_kv_heads = 2;
    cfg.d_head = 8;
    cfg.vocab_size = 31;
    cfg.context_len = 8;
    return cfg;
}

inline std::vector<TokenBatch> trajectory_data(std::size_t steps, std::size_t batch, const ModelConfig& cfg) {
    Rng rng(404);
    std::vector<TokenBatch> out;
    for (std::size_t s = 0; s < steps; ++s) {
        TokenBatch tb{batch, cfg.context_len, {}};
        for (std::size_t i = 0; i < batch * cfg.context_len; ++i) {
            // A learnable pattern: next token = previous + 1 most of the time.
            const auto prev = tb.tokens.empty() ? 0u : tb.tokens.back();
            tb.tokens.push_back(rng.uniform() < 0.8 ? (prev + 1) % static_cast<std::uint32_t>(cfg.vocab_size)
                                                    : static_cast<std::uint32_t>(rng.below(cfg.vocab_size)));
        }
        out.push_back(std::move(tb));
    }
    return out;
}

inline TokenBatch micro_batch(const TokenBatch& tb, std::size_t parts, std::size_t part) {
    const std::size_t per = tb.batch / parts;
    TokenBatch out{per, tb.seq, {}};
    out.tokens.assign(tb.tokens.begin() + static_cast<std::ptrdiff_t>(part * per * tb.seq),
                      tb.tokens.begin() + static_cast<std::ptrdiff_t>((part + 1) * per * tb.seq));
    return out;
}

/// `batch` must divide evenly across `world_size` ranks.
inline Trajectory run_trajectory(Parallelism mode, std::size_t world_size, std::size_t steps, std::size_t batch = 4) {
    const ModelConfig cfg = trajectory_model();
    Rng init(77);
    const Model model = build_model(cfg, init);
    const auto groups = param_groups(cfg);
    const auto data = trajectory_data(steps, batch, cfg);
    const ScionConfig sc{.base_lr = 0.05, .momentum = 0.1};
    Trajectory out;

    if (mode == Parallelism::Reference) {
        std::vector<Matrix> params = model.params;
        ScionState state(sc, params);
        for (const auto& tb : data) {
            auto lg = loss_and_grad(params, cfg, tb);
            out.losses.push_back(lg.loss);
            scion_step(params, lg.grads, state, groups, sc.base_lr, model.names);
        }
        out.final_params = params;
        return out;
    }

    Fabric fabric(world_size);
    const double inv_m = 1.0 / static_cast<double>(world_size);
    run_ranks(fabric, [&](Communicator& comm) {
        const std::size_t r = comm.rank();
        std::vector<double> losses;
        std::size_t gathers = 0, a2a = 0;

        auto reduce = [&](LossAndGrad lg) {
            Matrix loss(1, 1, {lg.loss});
            const double total = comm.all_reduce_sum(loss)(0, 0) * inv_m;
            for (auto& g : lg.grads) {
                g = comm.all_reduce_sum(g);
                g *= inv_m;
            }
            lg.loss = total;
            return lg;
        };

        if (mode == Parallelism::Ddp) {
            std::vector<Matrix> params = model.params;
            ScionState state(sc, params);
            for (const auto& tb : data) {
                auto lg = reduce(loss_and_grad(params, cfg, micro_batch(tb, world_size, r)));
                losses.push_back(lg.loss);
                const auto before = comm.counters();
                step_ddp(comm, params, lg.grads, state, groups, sc.base_lr, model.names);
                gathers += comm.counters().all_gather - before.all_gather;
            }
            if (r == 0) out.final_params = params;
        } else {
            std::vector<ShardedParam> shards;
            std::vector<Matrix> mom;
            for (const auto& p : model.params) {
                shards.push_back(shard_rows(p, world_size, r));
                mom.emplace_back(shards.back().local.rows(), shards.back().local.cols());
            }
            auto unshard = [&] {
                std::vector<Matrix> full;
                for (const auto& s : shards) {
                    const auto parts = comm.all_gather(s.local);
                    full.push_back(concat_rows(parts));
                }
                return full;
            };
            for (const auto& tb : data) {
                const auto full = unshard();
                auto lg = reduce(loss_and_grad(full, cfg, micro_batch(tb, world_size, r)));
                losses.push_back(lg.loss);
                std::vector<Matrix> gshards;
                for (const auto& g : lg.grads) gshards.push_back(shard_rows(g, world_size, r).local);
                const auto before = comm.counters();
                step_fsdp(comm, shards, gshards, mom, sc, groups, sc.base_lr, model.names);
                a2a += comm.counters().all_to_all - before.all_to_all;
                gathers += comm.counters().all_gather - before.all_gather;
            }
            const auto full = unshard();
            if (r == 0) out.final_params = full;
        }
        if (r == 0) {
            out.losses = losses;
            out.step_all_gathers = gathers;
            out.step_all_to_alls = a2a;
        }
    });
    return out;
}

}  // namespace normlab::testing
