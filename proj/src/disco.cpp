// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#include "normlab/disco.hpp"

#include <algorithm>
#include <cstring>
#include <exception>
#include <thread>

#include <fmt/core.h>

#include "le_bytes.hpp"
#include "normlab/rng.hpp"

namespace normlab {

// ---------------------------------------------------------------------------
// Wire format

using detail::put_le;
using detail::put_f64;

namespace {

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    return detail::get_le<T>(bytes, offset, "decode_frame");
}

}  // namespace

void encode_frame(const Frame& frame, std::vector<std::uint8_t>& out) {
    put_le<std::uint32_t>(out, frame.rank);
    put_le<std::uint64_t>(out, frame.seq);
    put_le<std::uint64_t>(out, frame.tensor.rows());
    put_le<std::uint64_t>(out, frame.tensor.cols());
    for (double x : frame.tensor.data()) put_f64(out, x);
}

Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    Frame f;
    f.rank = get_le<std::uint32_t>(bytes, offset);
    f.seq = get_le<std::uint64_t>(bytes, offset);
    const auto rows = get_le<std::uint64_t>(bytes, offset);
    const auto cols = get_le<std::uint64_t>(bytes, offset);
    if (cols != 0 && rows > (bytes.size() - offset) / 8 / cols) throw Error("decode_frame: truncated payload");
    std::vector<double> data(rows * cols);
    for (double& x : data) x = detail::get_f64(bytes, offset, "decode_frame");
    f.tensor = Matrix(rows, cols, std::move(data));
    return f;
}

// ---------------------------------------------------------------------------
// Fabric

std::string_view to_string(CollectiveKind kind) {
    switch (kind) {
        case CollectiveKind::AllGather: return "all_gather";
        case CollectiveKind::AllToAll: return "all_to_all";
        case CollectiveKind::AllReduceSum: return "all_reduce_sum";
        case CollectiveKind::Agree: return "agree";
    }
    return "?";
}

Fabric::Fabric(std::size_t world_size, std::chrono::milliseconds timeout)
    : world_size_(world_size), timeout_(timeout), seq_(world_size, 0), finished_(world_size, false),
      counters_(world_size) {
    if (world_size == 0) throw Error("fabric: world size must be positive");
}

std::vector<std::vector<std::uint8_t>> Fabric::exchange(std::size_t rank, CollectiveKind kind,
                                                        std::vector<std::uint8_t> payload) {
    std::unique_lock lock(mu_);
    if (rank >= world_size_) throw Error(fmt::format("fabric: rank {} outside world of {}", rank, world_size_));
    const std::uint64_t seq = seq_[rank]++;
    auto [it, fresh] = rounds_.try_emplace(seq);
    Round& round = it->second;
    if (fresh) {
        round.kind = kind;
        round.posts.resize(world_size_);
        round.posted.assign(world_size_, false);
    } else if (round.kind != kind && round.error.empty()) {
        round.error = fmt::format("collective mismatch at seq {}: rank {} called {} but another rank called {}", seq,
                                  rank, to_string(kind), to_string(round.kind));
    }
    round.posts[rank] = std::move(payload);
    round.posted[rank] = true;
    ++round.arrived;
    switch (kind) {
        case CollectiveKind::AllGather: ++counters_[rank].all_gather; break;
        case CollectiveKind::AllToAll: ++counters_[rank].all_to_all; break;
        case CollectiveKind::AllReduceSum: ++counters_[rank].all_reduce; break;
        case CollectiveKind::Agree: ++counters_[rank].agree; break;
    }
    cv_.notify_all();

    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    auto stuck_on = [&]() -> std::optional<std::size_t> {
        for (std::size_t j = 0; j < world_size_; ++j) {
            if (finished_[j] && !round.posted[j]) return j;
        }
        return std::nullopt;
    };
    while (round.arrived < world_size_ && round.error.empty()) {
        if (auto gone = stuck_on()) {
            round.error = fmt::format("deadlock at seq {} ({}): rank {} exited without joining", seq, to_string(kind),
                                      *gone);
            cv_.notify_all();
            throw DeadlockError(round.error);
        }
        if (cv_.wait_until(lock, deadline) == std::cv_status::timeout && round.arrived < world_size_) {
            round.error = fmt::format("deadlock at seq {} ({}): timed out after {} ms with {}/{} ranks", seq,
                                      to_string(kind), timeout_.count(), round.arrived, world_size_);
            cv_.notify_all();
            throw DeadlockError(round.error);
        }
    }
    if (!round.error.empty()) {
        if (round.error.starts_with("deadlock")) throw DeadlockError(round.error);
        throw Error(round.error);
    }
    auto result = round.posts;
    if (++round.consumed == world_size_) rounds_.erase(it);
    return result;
}

void Fabric::finish(std::size_t rank) {
    std::lock_guard lock(mu_);
    finished_[rank] = true;
    cv_.notify_all();
}

CollectiveCounters Fabric::counters(std::size_t rank) const {
    std::lock_guard lock(mu_);
    return counters_[rank];
}

std::uint64_t Fabric::next_seq(std::size_t rank) const {
    std::lock_guard lock(mu_);
    return seq_[rank];
}

std::vector<Matrix> Communicator::all_gather(const Matrix& tensor) {
    std::vector<std::uint8_t> payload;
    encode_frame({static_cast<std::uint32_t>(rank_), fabric_->next_seq(rank_), tensor}, payload);
    const auto posts = fabric_->exchange(rank_, CollectiveKind::AllGather, std::move(payload));
    std::vector<Matrix> out;
    out.reserve(posts.size());
    for (std::size_t j = 0; j < posts.size(); ++j) {
        std::size_t offset = 0;
        Frame f = decode_frame(posts[j], offset);
        if (f.rank != j) throw Error(fmt::format("all_gather: frame from rank {} in slot {}", f.rank, j));
        out.push_back(std::move(f.tensor));
    }
    return out;
}

std::vector<Matrix> Communicator::all_to_all(std::span<const Matrix> send) {
    const std::size_t m = world_size();
    if (send.size() != m) throw ShapeError(fmt::format("all_to_all: {} entries for world size {}", send.size(), m));
    const std::uint64_t seq = fabric_->next_seq(rank_);
    std::vector<std::uint8_t> payload;
    for (const auto& t : send) encode_frame({static_cast<std::uint32_t>(rank_), seq, t}, payload);
    const auto posts = fabric_->exchange(rank_, CollectiveKind::AllToAll, std::move(payload));
    std::vector<Matrix> out;
    out.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
        std::size_t offset = 0;
        Frame f;
        for (std::size_t k = 0; k <= rank_; ++k) f = decode_frame(posts[j], offset);
        if (f.rank != j) throw Error(fmt::format("all_to_all: frame from rank {} in slot {}", f.rank, j));
        out.push_back(std::move(f.tensor));
    }
    return out;
}

Matrix Communicator::all_reduce_sum(const Matrix& tensor) {
    std::vector<std::uint8_t> payload;
    encode_frame({static_cast<std::uint32_t>(rank_), fabric_->next_seq(rank_), tensor}, payload);
    const auto posts = fabric_->exchange(rank_, CollectiveKind::AllReduceSum, std::move(payload));
    Matrix sum;
    for (std::size_t j = 0; j < posts.size(); ++j) {
        std::size_t offset = 0;
        Frame f = decode_frame(posts[j], offset);
        if (j == 0) {
            sum = std::move(f.tensor);
        } else {
            if (!sum.same_shape(f.tensor)) {
                throw ShapeError(fmt::format("all_reduce_sum: rank {} sent {}x{}, rank 0 sent {}x{}", j,
                                             f.tensor.rows(), f.tensor.cols(), sum.rows(), sum.cols()));
            }
            sum += f.tensor;
        }
    }
    return sum;
}

void Communicator::agree(std::uint64_t value, std::string_view what) {
    std::vector<std::uint8_t> payload;
    put_le(payload, value);
    const auto posts = fabric_->exchange(rank_, CollectiveKind::Agree, std::move(payload));
    std::vector<std::uint64_t> values;
    for (const auto& p : posts) {
        std::size_t offset = 0;
        values.push_back(get_le<std::uint64_t>(p, offset));
    }
    for (std::size_t j = 1; j < values.size(); ++j) {
        if (values[j] != values[0]) {
            throw Error(fmt::format("{} diverged across ranks: rank 0 has {:016x}, rank {} has {:016x}", what,
                                    values[0], j, values[j]));
        }
    }
}

void run_ranks(Fabric& fabric, const std::function<void(Communicator&)>& fn) {
    const std::size_t m = fabric.world_size();
    std::vector<std::exception_ptr> errors(m);
    std::vector<bool> deadlocked(m, false);
    std::vector<std::thread> threads;
    threads.reserve(m);
    for (std::size_t r = 0; r < m; ++r) {
        threads.emplace_back([&, r] {
            try {
                Communicator comm(fabric, r);
                fn(comm);
            } catch (const DeadlockError&) {
                errors[r] = std::current_exception();
                deadlocked[r] = true;
            } catch (...) {
                errors[r] = std::current_exception();
            }
            fabric.finish(r);
        });
    }
    for (auto& t : threads) t.join();
    // Root causes first; deadlocks are usually a consequence.
    for (std::size_t r = 0; r < m; ++r) {
        if (errors[r] && !deadlocked[r]) std::rethrow_exception(errors[r]);
    }
    for (std::size_t r = 0; r < m; ++r) {
        if (errors[r]) std::rethrow_exception(errors[r]);
    }
}

std::uint64_t fingerprint(std::span<const Matrix> params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& p : params) {
        mix(p.rows());
        mix(p.cols());
        for (double x : p.data()) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, &x, sizeof bits);
            mix(bits);
        }
    }
    return h;
}

ShardedParam shard_rows(const Matrix& full, std::size_t world_size, std::size_t rank) {
    auto blocks = split_rows(full, world_size);
    return {full.rows(), full.cols(), std::move(blocks.at(rank))};
}

// ---------------------------------------------------------------------------
// Steps

namespace {

std::string label(std::size_t i, std::span<const std::string> names) {
    return i < names.size() ? names[i] : fmt::format("#{}", i);
}

std::size_t bucket_count(std::size_t p, std::size_t m) { return (p + m - 1) / m; }

}  // namespace

void step_ddp(Communicator& comm, std::span<Matrix> params, std::span<const Matrix> grads, ScionState& state,
              std::span<const ParamGroup> groups, double lr, std::span<const std::string> names) {
    const std::size_t p_count = params.size();
    const std::size_t m = comm.world_size();
    const std::size_t r = comm.rank();
    if (grads.size() != p_count || state.momentum.size() != p_count) {
        throw ShapeError(fmt::format("step_ddp: {} params, {} grads, {} momentum buffers", p_count, grads.size(),
                                     state.momentum.size()));
    }
    const auto owner = resolve_groups(groups, p_count, names);
    comm.agree(fingerprint(params) ^ (fingerprint(state.momentum) * 31), "parameter replica");

    for (std::size_t i = 0; i < p_count; ++i) momentum_update(state, i, grads[i]);

    std::vector<Matrix> updates(p_count);
    for (std::size_t bucket = 0; bucket < bucket_count(p_count, m); ++bucket) {
        const std::size_t start = bucket * m;
        const std::size_t end = std::min(start + m, p_count);
        const std::size_t mine = start + r;
        const Matrix u = mine < end ? lmo(state.momentum[mine], owner[mine]->norm, state.config.ns) : Matrix(1, 1);
        auto gathered = comm.all_gather(u);
        for (std::size_t j = 0; start + j < end; ++j) updates[start + j] = std::move(gathered[j]);
    }
    for (std::size_t i = 0; i < p_count; ++i) {
        apply_update(params[i], updates[i], lr * owner[i]->lr_scale, state.config.weight_decay, label(i, names));
    }
}

void step_fsdp(Communicator& comm, std::span<ShardedParam> params, std::span<const Matrix> grad_shards,
               std::span<Matrix> momentum_shards, const ScionConfig& config, std::span<const ParamGroup> groups,
               double lr, std::span<const std::string> names) {
    const std::size_t p_count = params.size();
    const std::size_t m = comm.world_size();
    const std::size_t r = comm.rank();
    if (grad_shards.size() != p_count || momentum_shards.size() != p_count) {
        throw ShapeError(fmt::format("step_fsdp: {} params, {} grad shards, {} momentum shards", p_count,
                                     grad_shards.size(), momentum_shards.size()));
    }
    const auto owner = resolve_groups(groups, p_count, names);
    for (std::size_t i = 0; i < p_count; ++i) {
        if (!momentum_shards[i].same_shape(params[i].local) || !grad_shards[i].same_shape(params[i].local)) {
            throw ShapeError(fmt::format("step_fsdp: shard shapes disagree for {}", label(i, names)));
        }
        momentum_blend(momentum_shards[i].data(), grad_shards[i].data(), config.momentum);
    }

    std::vector<Matrix> updates(p_count);
    for (std::size_t bucket = 0; bucket < bucket_count(p_count, m); ++bucket) {
        const std::size_t start = bucket * m;
        const std::size_t end = std::min(start + m, p_count);

        std::vector<Matrix> send(m);
        for (std::size_t j = 0; j < m; ++j) send[j] = start + j < end ? momentum_shards[start + j] : Matrix(1, 1);
        const auto recv = comm.all_to_all(send);

        const std::size_t mine = start + r;
        std::vector<Matrix> back(m, Matrix(1, 1));
        if (mine < end) {
            const ShardedParam& sp = params[mine];
            for (std::size_t j = 0; j < m; ++j) {
                const auto [b, e] = row_block(sp.full_rows, m, j);
                if (recv[j].rows() != e - b || recv[j].cols() != sp.cols) {
                    throw ShapeError(fmt::format("step_fsdp: shard {} of {} is {}x{}, expected {}x{}", j,
                                                 label(mine, names), recv[j].rows(), recv[j].cols(), e - b, sp.cols));
                }
            }
            const Matrix full = concat_rows(recv);
            back = split_rows(lmo(full, owner[mine]->norm, config.ns), m);
        }
        auto returned = comm.all_to_all(back);
        for (std::size_t j = 0; start + j < end; ++j) updates[start + j] = std::move(returned[j]);
    }
    for (std::size_t i = 0; i < p_count; ++i) {
        apply_update(params[i].local, updates[i], lr * owner[i]->lr_scale, config.weight_decay, label(i, names));
    }
}

std::string_view to_string(EmbeddingLayout layout) {
    return layout == EmbeddingLayout::Operator ? "operator" : "token-major";
}

void step_embedding(ShardedParam& param, const Matrix& grad_shard, Matrix& momentum_shard, NormKind kind,
                    EmbeddingLayout layout, const ScionConfig& config, double lr, std::string_view name) {
    if (kind == NormKind::RmsToRms) {
        throw Error(fmt::format("step_embedding: {} uses rms->rms, which is not row-local", name));
    }
    if (!grad_shard.same_shape(param.local) || !momentum_shard.same_shape(param.local)) {
        throw ShapeError(fmt::format("step_embedding: shard shapes disagree for {}", name));
    }
    momentum_blend(momentum_shard.data(), grad_shard.data(), config.momentum);
    const Matrix u = layout == EmbeddingLayout::Operator ? lmo(momentum_shard, kind, config.ns)
                                                         : lmo(momentum_shard.transposed(), kind, config.ns).transposed();
    apply_update(param.local, u, lr, config.weight_decay, name);
}

ShardedExperts shard_experts(const Batch3D& full, std::size_t world_size, std::size_t rank) {
    const auto [begin, end] = row_block(full.experts(), world_size, rank);
    std::vector<Matrix> slices;
    for (std::size_t e = begin; e < end; ++e) slices.push_back(full.slice(e));
    ShardedExperts out{full.experts(), ShardAxis::Expert, Batch3D(0, full.rows(), full.cols())};
    if (!slices.empty()) out.local = Batch3D::from_slices(slices);
    return out;
}

void step_experts(ShardedExperts& param, const Batch3D& grad_shard, Batch3D& momentum_shard, NormKind kind,
                  bool transpose_experts, const ScionConfig& config, double lr, std::string_view name) {
    if (param.axis != ShardAxis::Expert) {
        throw Error(fmt::format("step_experts: {} is sharded along rows, not experts", name));
    }
    if (grad_shard.size() != param.local.size() || momentum_shard.size() != param.local.size()) {
        throw ShapeError(fmt::format("step_experts: shard shapes disagree for {}", name));
    }
    momentum_blend(momentum_shard.data(), grad_shard.data(), config.momentum);
    if (param.local.experts() == 0) return;
    const Batch3D u = batched_lmo(momentum_shard, kind, config.ns, transpose_experts);
    apply_update(param.local.data(), u.data(), lr, config.weight_decay, name);
}

// ---------------------------------------------------------------------------
// disco-check

std::string_view to_string(DiscoMode mode) {
    switch (mode) {
        case DiscoMode::Ddp: return "ddp";
        case DiscoMode::Fsdp: return "fsdp";
        case DiscoMode::Embedding: return "embedding";
        case DiscoMode::Experts: return "experts";
    }
    return "?";
}

std::optional<DiscoMode> parse_disco_mode(std::string_view text) {
    if (text == "ddp") return DiscoMode::Ddp;
    if (text == "fsdp") return DiscoMode::Fsdp;
    if (text == "embedding") return DiscoMode::Embedding;
    if (text == "experts") return DiscoMode::Experts;
    return std::nullopt;
}

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = rng.normal();
    return m;
}

Batch3D gaussian_batch(std::size_t e, std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> data(e * rows * cols);
    for (double& x : data) x = rng.normal();
    return Batch3D(e, rows, cols, std::move(data));
}

CollectiveCounters minus(CollectiveCounters a, const CollectiveCounters& b) {
    a.all_gather -= b.all_gather;
    a.all_to_all -= b.all_to_all;
    a.all_reduce -= b.all_reduce;
    a.agree -= b.agree;
    return a;
}

}  // namespace

DiscoCheckReport disco_check(DiscoMode mode, std::size_t world_size, std::size_t params, std::uint64_t seed) {
    if (world_size == 0) throw Error("disco-check: world size must be positive");
    if (params == 0) throw Error("disco-check: need at least one parameter");
    DiscoCheckReport report{mode, world_size, params, seed};
    Rng rng(seed);
    const ScionConfig config{.base_lr = 0.05, .momentum = 0.1, .weight_decay = 0.01};
    const double lr = config.base_lr;
    const std::size_t buckets = (params + world_size - 1) / world_size;
    report.ranks.resize(world_size);
    for (std::size_t r = 0; r < world_size; ++r) report.ranks[r].rank = r;
    Fabric fabric(world_size);

    if (mode == DiscoMode::Ddp || mode == DiscoMode::Fsdp) {
        std::vector<Matrix> full, grads;
        std::vector<ParamGroup> groups;
        constexpr NormKind kinds[] = {NormKind::RmsToRms, NormKind::OneToRms, NormKind::RmsToInf};
        for (std::size_t i = 0; i < params; ++i) {
            const std::size_t rows = 1 + rng.below(9), cols = 1 + rng.below(9);
            full.push_back(gaussian_matrix(rows, cols, rng));
            grads.push_back(gaussian_matrix(rows, cols, rng));
            const NormKind k = mode == DiscoMode::Fsdp ? NormKind::RmsToRms : kinds[i % 3];
            groups.push_back({fmt::format("g{}", i), LayerGroup::Hidden, k, 1.0 + 0.5 * static_cast<double>(i % 2), {i}});
        }
        std::vector<Matrix> reference = full;
        ScionState ref_state(config, reference);
        scion_step(reference, grads, ref_state, groups, lr);

        report.expected_all_gather = mode == DiscoMode::Ddp ? buckets : 0;
        report.expected_all_to_all = mode == DiscoMode::Fsdp ? 2 * buckets : 0;
        run_ranks(fabric, [&](Communicator& comm) {
            const std::size_t r = comm.rank();
            const CollectiveCounters before = comm.counters();
            double diff = 0.0;
            if (mode == DiscoMode::Ddp) {
                std::vector<Matrix> mine = full;
                ScionState state(config, mine);
                step_ddp(comm, mine, grads, state, groups, lr);
                for (std::size_t i = 0; i < params; ++i) diff = std::max(diff, max_abs_diff(mine[i], reference[i]));
            } else {
                std::vector<ShardedParam> shards;
                std::vector<Matrix> gshards, mom;
                for (std::size_t i = 0; i < params; ++i) {
                    shards.push_back(shard_rows(full[i], world_size, r));
                    gshards.push_back(shard_rows(grads[i], world_size, r).local);
                    mom.emplace_back(shards.back().local.rows(), shards.back().local.cols());
                }
                step_fsdp(comm, shards, gshards, mom, config, groups, lr);
                for (std::size_t i = 0; i < params; ++i) {
                    diff = std::max(diff, max_abs_diff(shards[i].local, shard_rows(reference[i], world_size, r).local));
                }
            }
            report.ranks[r].counts = minus(comm.counters(), before);
            report.ranks[r].max_abs_diff = diff;
        });
    } else if (mode == DiscoMode::Embedding) {
        // Token-major storage of a (d_model, vocab) operator with 1->rms, and an
        // operator-orientation output head with rms->inf.
        const std::size_t vocab = 3 * world_size + 2, d_model = 6;
        const Matrix table = gaussian_matrix(vocab, d_model, rng), table_grad = gaussian_matrix(vocab, d_model, rng);
        const Matrix head = gaussian_matrix(vocab, d_model, rng), head_grad = gaussian_matrix(vocab, d_model, rng);
        auto reference = [&](const Matrix& w, const Matrix& g, NormKind kind, bool transpose) {
            Matrix buf(w.rows(), w.cols());
            momentum_blend(buf.data(), g.data(), config.momentum);
            Matrix out = w;
            const Matrix u = transpose ? lmo(buf.transposed(), kind).transposed() : lmo(buf, kind);
            apply_update(out, u, lr, config.weight_decay, "reference");
            return out;
        };
        const Matrix ref_table = reference(table, table_grad, NormKind::OneToRms, true);
        const Matrix ref_head = reference(head, head_grad, NormKind::RmsToInf, false);
        run_ranks(fabric, [&](Communicator& comm) {
            const std::size_t r = comm.rank();
            ShardedParam t = shard_rows(table, world_size, r), h = shard_rows(head, world_size, r);
            Matrix mt(t.local.rows(), t.local.cols()), mh(h.local.rows(), h.local.cols());
            step_embedding(t, shard_rows(table_grad, world_size, r).local, mt, NormKind::OneToRms,
                           EmbeddingLayout::TokenMajor, config, lr, "embed");
            step_embedding(h, shard_rows(head_grad, world_size, r).local, mh, NormKind::RmsToInf,
                           EmbeddingLayout::Operator, config, lr, "head");
            report.ranks[r].max_abs_diff = std::max(max_abs_diff(t.local, shard_rows(ref_table, world_size, r).local),
                                                    max_abs_diff(h.local, shard_rows(ref_head, world_size, r).local));
            report.ranks[r].counts = comm.counters();
        });
    } else {
        const std::size_t experts = params;
        const Batch3D w = gaussian_batch(experts, 5, 3, rng), g = gaussian_batch(experts, 5, 3, rng);
        Batch3D ref = w, ref_m(experts, 5, 3);
        momentum_blend(ref_m.data(), g.data(), config.momentum);
        apply_update(ref.data(), batched_lmo(ref_m, NormKind::RmsToRms, config.ns).data(), lr, config.weight_decay,
                     "reference");
        run_ranks(fabric, [&](Communicator& comm) {
            const std::size_t r = comm.rank();
            ShardedExperts mine = shard_experts(w, world_size, r);
            const ShardedExperts gs = shard_experts(g, world_size, r);
            Batch3D mom(mine.local.experts(), 5, 3);
            step_experts(mine, gs.local, mom, NormKind::RmsToRms, false, config, lr, "experts");
            const ShardedExperts expect = shard_experts(ref, world_size, r);
            double diff = 0.0;
            for (std::size_t e = 0; e < mine.local.experts(); ++e) {
                diff = std::max(diff, max_abs_diff(mine.local.slice(e), expect.local.slice(e)));
            }
            report.ranks[r].max_abs_diff = diff;
            report.ranks[r].counts = comm.counters();
        });
    }

    report.passed = true;
    for (const auto& row : report.ranks) {
        const bool counts_ok = row.counts.all_gather == report.expected_all_gather &&
                               row.counts.all_to_all == report.expected_all_to_all && row.counts.all_reduce == 0;
        if (row.max_abs_diff > report.tolerance || !counts_ok) {
            report.passed = false;
            report.detail += fmt::format("rank {}: max_abs_diff {:.3e}, all_gather {} (want {}), all_to_all {} (want {}); ",
                                         row.rank, row.max_abs_diff, row.counts.all_gather, report.expected_all_gather,
                                         row.counts.all_to_all, report.expected_all_to_all);
        }
    }
    return report;
}

}  // namespace normlab
