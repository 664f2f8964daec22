// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Distributed Scion over an in-process collective fabric. Each simulated rank
// runs on its own thread; collectives rendezvous through the Fabric.

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "normlab/error.hpp"
#include "normlab/lmo.hpp"
#include "normlab/matrix.hpp"
#include "normlab/scion.hpp"

namespace normlab {

class DeadlockError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Wire format. One frame per tensor, all integers little-endian:
//   u32 sender rank | u64 sequence | u64 rows | u64 cols | rows*cols x f64 (IEEE-754 bits, LE)

struct Frame {
    std::uint32_t rank = 0;
    std::uint64_t seq = 0;
    Matrix tensor;
};

void encode_frame(const Frame& frame, std::vector<std::uint8_t>& out);
/// Decodes one frame starting at `offset` and advances it.
Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t& offset);

// ---------------------------------------------------------------------------

enum class CollectiveKind { AllGather, AllToAll, AllReduceSum, Agree };
std::string_view to_string(CollectiveKind kind);

struct CollectiveCounters {
    std::size_t all_gather = 0;
    std::size_t all_to_all = 0;
    std::size_t all_reduce = 0;
    std::size_t agree = 0;
};

class Fabric {
public:
    explicit Fabric(std::size_t world_size, std::chrono::milliseconds timeout = std::chrono::seconds(30));

    std::size_t world_size() const { return world_size_; }

    /// Posts this rank's payload for its next collective and blocks until
    /// every rank has posted. Returns all payloads in rank order.
    std::vector<std::vector<std::uint8_t>> exchange(std::size_t rank, CollectiveKind kind,
                                                    std::vector<std::uint8_t> payload);

    /// Marks a rank as done; ranks still waiting on it fail with DeadlockError.
    void finish(std::size_t rank);

    CollectiveCounters counters(std::size_t rank) const;
    std::uint64_t next_seq(std::size_t rank) const;

private:
    struct Round {
        CollectiveKind kind;
        std::vector<std::vector<std::uint8_t>> posts;
        std::vector<bool> posted;
        std::size_t arrived = 0;
        std::size_t consumed = 0;
        std::string error;
    };

    std::size_t world_size_;
    std::chrono::milliseconds timeout_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::uint64_t, Round> rounds_;
    std::vector<std::uint64_t> seq_;
    std::vector<bool> finished_;
    std::vector<CollectiveCounters> counters_;
};

/// A rank's handle on the fabric.
class Communicator {
public:
    Communicator(Fabric& fabric, std::size_t rank) : fabric_(&fabric), rank_(rank) {}

    std::size_t rank() const { return rank_; }
    std::size_t world_size() const { return fabric_->world_size(); }

    /// Rank-ordered list of every rank's tensor.
    std::vector<Matrix> all_gather(const Matrix& tensor);
    /// recv[j] = send[rank] from rank j. Throws ShapeError unless send has M entries.
    std::vector<Matrix> all_to_all(std::span<const Matrix> send);
    /// Elementwise sum, accumulated in rank order on every rank.
    Matrix all_reduce_sum(const Matrix& tensor);
    /// Throws Error on every rank if any two ranks pass different values.
    void agree(std::uint64_t value, std::string_view what);

    CollectiveCounters counters() const { return fabric_->counters(rank_); }

private:
    Fabric* fabric_;
    std::size_t rank_;
};

/// Runs fn on `world_size` threads, one per rank, and rethrows the first
/// failure (lowest rank) after all threads have joined.
void run_ranks(Fabric& fabric, const std::function<void(Communicator&)>& fn);

/// FNV-1a over the raw bytes of a parameter list.
std::uint64_t fingerprint(std::span<const Matrix> params);

// ---------------------------------------------------------------------------
// Row sharding ("Shard(0)"): rank r holds rows row_block(full_rows, M, r).

struct ShardedParam {
    std::size_t full_rows = 0;
    std::size_t cols = 0;
    Matrix local;
};

ShardedParam shard_rows(const Matrix& full, std::size_t world_size, std::size_t rank);

// ---------------------------------------------------------------------------
// Steps. `lr` is the schedule-applied base rate; groups add their lr_scale.

/// Full replicas on every rank; grads must already be identical across ranks.
/// The LMO of parameter i is computed by rank i mod M and shared with
/// ceil(P / M) bucketed all_gathers.
void step_ddp(Communicator& comm, std::span<Matrix> params, std::span<const Matrix> grads, ScionState& state,
              std::span<const ParamGroup> groups, double lr, std::span<const std::string> names = {});

/// Row-sharded params, grads and momentum. For each bucket of M parameters,
/// rank r rebuilds parameter (bucket * M + r) with one all_to_all, runs the
/// LMO, and returns row blocks with a second all_to_all.
void step_fsdp(Communicator& comm, std::span<ShardedParam> params, std::span<const Matrix> grad_shards,
               std::span<Matrix> momentum_shards, const ScionConfig& config, std::span<const ParamGroup> groups,
               double lr, std::span<const std::string> names = {});

/// How an embedding matrix is stored. Operator: (d_model, vocab), the same
/// orientation as the model. TokenMajor: (vocab, d_model), one row per token.
enum class EmbeddingLayout { Operator, TokenMajor };
std::string_view to_string(EmbeddingLayout layout);

/// Row-local LMO for 1->rms and rms->inf on a row shard; no communication.
/// The norm is always evaluated in operator orientation, so a TokenMajor
/// shard is transposed, mapped, and transposed back.
void step_embedding(ShardedParam& param, const Matrix& grad_shard, Matrix& momentum_shard, NormKind kind,
                    EmbeddingLayout layout, const ScionConfig& config, double lr, std::string_view name = "embedding");

enum class ShardAxis { Expert, Row };

struct ShardedExperts {
    std::size_t full_experts = 0;
    ShardAxis axis = ShardAxis::Expert;
    Batch3D local;
};

ShardedExperts shard_experts(const Batch3D& full, std::size_t world_size, std::size_t rank);

/// Expert-local batched LMO; no communication.
void step_experts(ShardedExperts& param, const Batch3D& grad_shard, Batch3D& momentum_shard, NormKind kind,
                  bool transpose_experts, const ScionConfig& config, double lr, std::string_view name = "experts");

// ---------------------------------------------------------------------------

enum class DiscoMode { Ddp, Fsdp, Embedding, Experts };
std::string_view to_string(DiscoMode mode);
std::optional<DiscoMode> parse_disco_mode(std::string_view text);

struct DiscoCheckRow {
    std::size_t rank = 0;
    CollectiveCounters counts;
    double max_abs_diff = 0.0;
};

struct DiscoCheckReport {
    DiscoMode mode = DiscoMode::Ddp;
    std::size_t world_size = 1;
    std::size_t params = 0;
    std::uint64_t seed = 0;
    std::size_t expected_all_gather = 0;
    std::size_t expected_all_to_all = 0;
    double tolerance = 1e-6;
    std::vector<DiscoCheckRow> ranks;
    bool passed = false;
    std::string detail;
};

/// Randomized single-step equivalence check against the single-rank reference.
DiscoCheckReport disco_check(DiscoMode mode, std::size_t world_size, std::size_t params, std::uint64_t seed);

}  // namespace normlab
