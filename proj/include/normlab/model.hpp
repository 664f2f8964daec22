// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale decoder-only transformer with parameter-free RMSNorm in front of
// every linear map, and a hand-written backward pass.
//
// Parameter layout (flat, in this order):
//   embed                       d_model x vocab   (column j is token j)
//   per block l: wq wk wv wo w1 w3 w2
//   head                        vocab x d_model
// All matrices are stored as (d_out, d_in).

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "normlab/matrix.hpp"
#include "normlab/rng.hpp"
#include "normlab/scion.hpp"

namespace normlab {

enum class InitScheme { Identity, TotalDepth, RelativeDepth };
enum class ResidualScheme { Identity, DepthNormalized, CompleteP };

std::string_view to_string(InitScheme s);
std::string_view to_string(ResidualScheme s);
std::optional<InitScheme> parse_init_scheme(std::string_view text);
std::optional<ResidualScheme> parse_residual_scheme(std::string_view text);

struct ModelConfig {
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t n_kv_heads = 4;
    std::size_t d_head = 16;
    double mlp_factor = 2.75;
    std::size_t vocab_size = 257;
    std::size_t context_len = 128;
    double rope_theta = 10000.0;
    InitScheme init_scheme = InitScheme::TotalDepth;
    ResidualScheme residual_scheme = ResidualScheme::Identity;
    /// Relative-depth init only: FFN blocks reuse the depth of the attention
    /// block before them instead of counting as their own level.
    bool ffn_depth_offset = false;
    bool tie_embeddings = false;

    /// Throws ConfigError on inconsistent dimensions.
    void validate() const;
    std::size_t d_ff() const;
    std::size_t param_count() const { return 2 + 7 * n_layers; }
};

/// Residual mixing y = alpha * x + beta * block(x).
struct ResidualCoefficients {
    double alpha = 1.0;
    double beta = 1.0;
};
ResidualCoefficients residual_coefficients(const ModelConfig& cfg);

/// Gain multiplier applied to wo / w2 of block `layer` (0-based).
double depth_gain(const ModelConfig& cfg, std::size_t layer, bool ffn);

enum class BlockParam { Wq = 0, Wk, Wv, Wo, W1, W3, W2 };

inline constexpr std::size_t kEmbedIndex = 0;
std::size_t block_param_index(std::size_t layer, BlockParam which);
std::size_t head_index(const ModelConfig& cfg);

std::vector<std::string> param_names(const ModelConfig& cfg);

struct Model {
    ModelConfig config;
    std::vector<Matrix> params;
    std::vector<std::string> names;
};

Model build_model(const ModelConfig& cfg, Rng& rng);

/// Three groups: embed -> {input, 1->rms}, interior -> {hidden, rms->rms},
/// head -> {output, rms->inf}.
struct LayerLrScales {
    double input = 1.0;
    double hidden = 1.0;
    double output = 1.0;

    bool operator==(const LayerLrScales&) const = default;
};
std::vector<ParamGroup> param_groups(const ModelConfig& cfg, const LayerLrScales& scales = {});

/// Row-major (batch, seq) token ids.
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t seq = 0;
    std::vector<std::uint32_t> tokens;

    std::uint32_t at(std::size_t b, std::size_t t) const { return tokens[b * seq + t]; }
};

/// Called once per linear map with the (tokens x d_in) matrix it consumes.
/// The embedding is skipped: its input is one-hot.
using LinearInputObserver = std::function<void(std::string_view param_name, const Matrix& input)>;

struct ActivationCache;

struct ForwardResult {
    double loss = 0.0;
    std::shared_ptr<const ActivationCache> cache;
};

/// Mean next-token cross entropy over batch * (seq - 1) positions.
ForwardResult forward_loss(std::span<const Matrix> params, const ModelConfig& cfg, const TokenBatch& batch,
                           const LinearInputObserver& observer = {});

std::vector<Matrix> backward(std::span<const Matrix> params, const ModelConfig& cfg, const ActivationCache& cache);

struct LossAndGrad {
    double loss = 0.0;
    std::vector<Matrix> grads;
};
LossAndGrad loss_and_grad(std::span<const Matrix> params, const ModelConfig& cfg, const TokenBatch& batch);

}  // namespace normlab
