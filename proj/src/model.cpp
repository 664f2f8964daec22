// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#include "normlab/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "normlab/error.hpp"
#include "normlab/linalg.hpp"

namespace normlab {

namespace {

constexpr double kNormEps = 1e-20;
constexpr const char* kBlockNames[] = {"wq", "wk", "wv", "wo", "w1", "w3", "w2"};

}  // namespace

std::string_view to_string(InitScheme s) {
    switch (s) {
        case InitScheme::Identity: return "identity";
        case InitScheme::TotalDepth: return "total-depth";
        case InitScheme::RelativeDepth: return "relative-depth";
    }
    return "?";
}

std::string_view to_string(ResidualScheme s) {
    switch (s) {
        case ResidualScheme::Identity: return "identity";
        case ResidualScheme::DepthNormalized: return "depth-normalized";
        case ResidualScheme::CompleteP: return "completeP";
    }
    return "?";
}

std::optional<InitScheme> parse_init_scheme(std::string_view text) {
    if (text == "identity") return InitScheme::Identity;
    if (text == "total-depth") return InitScheme::TotalDepth;
    if (text == "relative-depth") return InitScheme::RelativeDepth;
    return std::nullopt;
}

std::optional<ResidualScheme> parse_residual_scheme(std::string_view text) {
    if (text == "identity") return ResidualScheme::Identity;
    if (text == "depth-normalized") return ResidualScheme::DepthNormalized;
    if (text == "completeP") return ResidualScheme::CompleteP;
    return std::nullopt;
}

void ModelConfig::validate() const {
    if (d_model == 0 || n_layers == 0 || n_heads == 0 || n_kv_heads == 0 || d_head == 0) {
        throw ConfigError("model: every dimension must be positive");
    }
    if (d_model != n_heads * d_head) {
        throw ConfigError(fmt::format("model: d_model {} != n_heads {} * d_head {}", d_model, n_heads, d_head));
    }
    if (n_heads % n_kv_heads != 0) {
        throw ConfigError(fmt::format("model: n_heads {} not a multiple of n_kv_heads {}", n_heads, n_kv_heads));
    }
    if (d_head % 2 != 0) throw ConfigError(fmt::format("model: d_head {} must be even for rotary embeddings", d_head));
    if (vocab_size < 2) throw ConfigError("model: vocab_size must be at least 2");
    if (context_len < 2) throw ConfigError("model: context_len must be at least 2");
    if (!(mlp_factor > 0.0) || d_ff() == 0) throw ConfigError(fmt::format("model: bad mlp_factor {}", mlp_factor));
    if (!(rope_theta > 1.0)) throw ConfigError(fmt::format("model: bad rope_theta {}", rope_theta));
    if (tie_embeddings) throw ConfigError("model: tied embeddings are not supported");
}

std::size_t ModelConfig::d_ff() const {
    return static_cast<std::size_t>(std::llround(mlp_factor * static_cast<double>(d_model)));
}

ResidualCoefficients residual_coefficients(const ModelConfig& cfg) {
    const double two_n = 2.0 * static_cast<double>(cfg.n_layers);
    switch (cfg.residual_scheme) {
        case ResidualScheme::Identity: return {1.0, 1.0};
        case ResidualScheme::DepthNormalized: return {(two_n - 1.0) / two_n, 1.0 / two_n};
        case ResidualScheme::CompleteP: return {1.0, 1.0 / two_n};
    }
    return {};
}

double depth_gain(const ModelConfig& cfg, std::size_t layer, bool ffn) {
    switch (cfg.init_scheme) {
        case InitScheme::Identity: return 1.0;
        case InitScheme::TotalDepth: return 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.n_layers));
        case InitScheme::RelativeDepth: {
            // Attention of block i (1-based) sits at depth 2i - 1, its FFN at 2i.
            const double depth = static_cast<double>(2 * layer + 1 + (ffn && !cfg.ffn_depth_offset ? 1 : 0));
            return 1.0 / std::sqrt(2.0 * depth);
        }
    }
    return 1.0;
}

std::size_t block_param_index(std::size_t layer, BlockParam which) {
    return 1 + 7 * layer + static_cast<std::size_t>(which);
}

std::size_t head_index(const ModelConfig& cfg) { return 1 + 7 * cfg.n_layers; }

std::vector<std::string> param_names(const ModelConfig& cfg) {
    std::vector<std::string> names{"embed"};
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        for (const char* n : kBlockNames) names.push_back(fmt::format("block{}.{}", l, n));
    }
    names.emplace_back("head");
    return names;
}

Model build_model(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.d_model;
    const std::size_t dq = cfg.n_heads * cfg.d_head;
    const std::size_t dkv = cfg.n_kv_heads * cfg.d_head;
    const std::size_t ff = cfg.d_ff();
    auto hidden = [&](std::size_t d_out, std::size_t d_in, double extra) {
        return semi_orthogonal_init(d_out, d_in, extra * std::sqrt(static_cast<double>(d_out) / static_cast<double>(d_in)),
                                    rng);
    };

    Model m;
    m.config = cfg;
    m.names = param_names(cfg);
    // Columns of the input embedding have RMS 1.
    m.params.push_back(row_normalized_gaussian_init(cfg.vocab_size, d, 1.0, rng).transposed());
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        m.params.push_back(hidden(dq, d, 1.0));
        m.params.push_back(hidden(dkv, d, 1.0));
        m.params.push_back(hidden(dkv, d, 1.0));
        m.params.push_back(hidden(d, dq, depth_gain(cfg, l, false)));
        m.params.push_back(hidden(ff, d, 1.0));
        m.params.push_back(hidden(ff, d, 1.0));
        m.params.push_back(hidden(d, ff, depth_gain(cfg, l, true)));
    }
    // Row RMS 1/d_model puts ||head||_{rms->inf} at 1.
    m.params.push_back(row_normalized_gaussian_init(cfg.vocab_size, d, 1.0 / static_cast<double>(d), rng));
    return m;
}

std::vector<ParamGroup> param_groups(const ModelConfig& cfg, const LayerLrScales& scales) {
    ParamGroup hidden{"hidden", LayerGroup::Hidden, NormKind::RmsToRms, scales.hidden, {}};
    for (std::size_t i = 1; i < head_index(cfg); ++i) hidden.members.push_back(i);
    return {
        ParamGroup{"input", LayerGroup::Input, NormKind::OneToRms, scales.input, {kEmbedIndex}},
        hidden,
        ParamGroup{"output", LayerGroup::Output, NormKind::RmsToInf, scales.output, {head_index(cfg)}},
    };
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

/// Row-segment RMSNorm: every `width`-wide segment of every row is divided by
/// its own RMS. `inv` receives 1/rms per segment.
Matrix rmsnorm(const Matrix& x, std::size_t width, std::vector<double>& inv) {
    const std::size_t segs = x.cols() / width;
    Matrix y(x.rows(), x.cols());
    inv.assign(x.rows() * segs, 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row(r);
        auto yr = y.row(r);
        for (std::size_t s = 0; s < segs; ++s) {
            double sq = 0.0;
            for (std::size_t j = s * width; j < (s + 1) * width; ++j) sq += xr[j] * xr[j];
            const double k = 1.0 / std::sqrt(sq / static_cast<double>(width) + kNormEps);
            inv[r * segs + s] = k;
            for (std::size_t j = s * width; j < (s + 1) * width; ++j) yr[j] = xr[j] * k;
        }
    }
    return y;
}

Matrix rmsnorm_backward(const Matrix& y, const std::vector<double>& inv, std::size_t width, const Matrix& dy) {
    const std::size_t segs = y.cols() / width;
    Matrix dx(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row(r);
        auto gr = dy.row(r);
        auto xr = dx.row(r);
        for (std::size_t s = 0; s < segs; ++s) {
            double proj = 0.0;
            for (std::size_t j = s * width; j < (s + 1) * width; ++j) proj += gr[j] * yr[j];
            proj /= static_cast<double>(width);
            const double k = inv[r * segs + s];
            for (std::size_t j = s * width; j < (s + 1) * width; ++j) xr[j] = k * (gr[j] - yr[j] * proj);
        }
    }
    return dx;
}

/// cos/sin of position * theta^(-2i / d_head), laid out [t][i].
struct RopeTable {
    std::size_t half = 0;
    std::vector<double> cos, sin;

    RopeTable(std::size_t seq, std::size_t d_head, double theta) : half(d_head / 2), cos(seq * half), sin(seq * half) {
        for (std::size_t t = 0; t < seq; ++t) {
            for (std::size_t i = 0; i < half; ++i) {
                const double freq = std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(d_head));
                const double angle = static_cast<double>(t) * freq;
                cos[t * half + i] = std::cos(angle);
                sin[t * half + i] = std::sin(angle);
            }
        }
    }
};

/// Rotates every head of x in place; `inverse` applies the transpose.
void apply_rope(Matrix& x, std::size_t seq, std::size_t d_head, const RopeTable& rope, bool inverse) {
    const std::size_t heads = x.cols() / d_head;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const std::size_t t = r % seq;
        auto row = x.row(r);
        for (std::size_t h = 0; h < heads; ++h) {
            double* seg = row.data() + h * d_head;
            for (std::size_t i = 0; i < rope.half; ++i) {
                const double c = rope.cos[t * rope.half + i];
                const double s = inverse ? -rope.sin[t * rope.half + i] : rope.sin[t * rope.half + i];
                const double x0 = seg[2 * i], x1 = seg[2 * i + 1];
                seg[2 * i] = x0 * c - x1 * s;
                seg[2 * i + 1] = x0 * s + x1 * c;
            }
        }
    }
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
    const double sg = 1.0 / (1.0 + std::exp(-x));
    return sg * (1.0 + x * (1.0 - sg));
}

void linear_observe(const LinearInputObserver& obs, const std::vector<std::string>& names, std::size_t idx,
                    const Matrix& input) {
    if (obs) obs(names[idx], input);
}

}  // namespace

struct LayerCache {
    Matrix h_in;
    Matrix a;
    std::vector<double> a_inv;
    Matrix av;
    std::vector<double> av_inv;
    Matrix qn, kn;
    std::vector<double> q_inv, k_inv;
    Matrix qr, kr, v;
    std::vector<double> probs;  // [b][head][t][u], u <= t used
    Matrix o, on;
    std::vector<double> on_inv;
    Matrix h_mid;
    Matrix m;
    std::vector<double> m_inv;
    Matrix g, u, s, sn;
    std::vector<double> sn_inv;
};

struct ActivationCache {
    TokenBatch batch;
    std::vector<LayerCache> layers;
    Matrix z;
    std::vector<double> z_inv;
    Matrix softmax;  // over the vocabulary, one row per position
    std::size_t count = 0;
};

ForwardResult forward_loss(std::span<const Matrix> params, const ModelConfig& cfg, const TokenBatch& batch,
                           const LinearInputObserver& observer) {
    cfg.validate();
    if (params.size() != cfg.param_count()) {
        throw ShapeError(fmt::format("forward_loss: {} parameters, model expects {}", params.size(), cfg.param_count()));
    }
    if (batch.tokens.size() != batch.batch * batch.seq || batch.batch == 0) {
        throw ShapeError(fmt::format("forward_loss: token batch {}x{} holds {} ids", batch.batch, batch.seq,
                                     batch.tokens.size()));
    }
    if (batch.seq < 2) throw ShapeError("forward_loss: sequences of length 1 predict no positions");
    if (batch.seq > cfg.context_len) {
        throw ShapeError(fmt::format("forward_loss: sequence length {} exceeds context {}", batch.seq, cfg.context_len));
    }
    for (std::uint32_t tok : batch.tokens) {
        if (tok >= cfg.vocab_size) {
            throw ShapeError(fmt::format("forward_loss: token id {} outside vocabulary of {}", tok, cfg.vocab_size));
        }
    }

    const std::size_t d = cfg.d_model;
    const std::size_t dh = cfg.d_head;
    const std::size_t H = cfg.n_heads;
    const std::size_t group = cfg.n_heads / cfg.n_kv_heads;
    const std::size_t T = batch.seq;
    const std::size_t N = batch.batch * T;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto [alpha, beta] = residual_coefficients(cfg);
    const RopeTable rope(T, dh, cfg.rope_theta);
    const auto names = observer ? param_names(cfg) : std::vector<std::string>{};

    auto cache = std::make_shared<ActivationCache>();
    cache->batch = batch;
    cache->layers.resize(cfg.n_layers);

    const Matrix& embed = params[kEmbedIndex];
    Matrix h(N, d);
    for (std::size_t n = 0; n < N; ++n) {
        const std::uint32_t tok = batch.tokens[n];
        for (std::size_t j = 0; j < d; ++j) h(n, j) = embed(j, tok);
    }

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        LayerCache& c = cache->layers[l];
        auto P = [&](BlockParam w) -> const Matrix& { return params[block_param_index(l, w)]; };
        c.h_in = h;

        c.a = rmsnorm(h, d, c.a_inv);
        c.av = rmsnorm(c.a, d, c.av_inv);
        linear_observe(observer, names, block_param_index(l, BlockParam::Wq), c.a);
        linear_observe(observer, names, block_param_index(l, BlockParam::Wk), c.a);
        linear_observe(observer, names, block_param_index(l, BlockParam::Wv), c.av);
        const Matrix q = matmul_nt(c.a, P(BlockParam::Wq));
        const Matrix k = matmul_nt(c.a, P(BlockParam::Wk));
        c.v = matmul_nt(c.av, P(BlockParam::Wv));
        c.qn = rmsnorm(q, dh, c.q_inv);
        c.kn = rmsnorm(k, dh, c.k_inv);
        c.qr = c.qn;
        c.kr = c.kn;
        apply_rope(c.qr, T, dh, rope, false);
        apply_rope(c.kr, T, dh, rope, false);

        c.o = Matrix(N, H * dh);
        c.probs.assign(batch.batch * H * T * T, 0.0);
        std::vector<double> row(T);
        for (std::size_t b = 0; b < batch.batch; ++b) {
            for (std::size_t hq = 0; hq < H; ++hq) {
                const std::size_t hk = hq / group;
                double* pbase = c.probs.data() + ((b * H + hq) * T) * T;
                for (std::size_t t = 0; t < T; ++t) {
                    const double* qt = c.qr.row(b * T + t).data() + hq * dh;
                    double peak = -INFINITY;
                    for (std::size_t u = 0; u <= t; ++u) {
                        const double* ku = c.kr.row(b * T + u).data() + hk * dh;
                        double sdot = 0.0;
                        for (std::size_t j = 0; j < dh; ++j) sdot += qt[j] * ku[j];
                        row[u] = sdot * scale;
                        peak = std::max(peak, row[u]);
                    }
                    double total = 0.0;
                    for (std::size_t u = 0; u <= t; ++u) {
                        row[u] = std::exp(row[u] - peak);
                        total += row[u];
                    }
                    double* pt = pbase + t * T;
                    double* ot = c.o.row(b * T + t).data() + hq * dh;
                    for (std::size_t u = 0; u <= t; ++u) {
                        const double p = row[u] / total;
                        pt[u] = p;
                        const double* vu = c.v.row(b * T + u).data() + hk * dh;
                        for (std::size_t j = 0; j < dh; ++j) ot[j] += p * vu[j];
                    }
                }
            }
        }

        c.on = rmsnorm(c.o, H * dh, c.on_inv);
        linear_observe(observer, names, block_param_index(l, BlockParam::Wo), c.on);
        const Matrix attn = matmul_nt(c.on, P(BlockParam::Wo));
        for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] = alpha * h.data()[i] + beta * attn.data()[i];
        c.h_mid = h;

        c.m = rmsnorm(h, d, c.m_inv);
        linear_observe(observer, names, block_param_index(l, BlockParam::W1), c.m);
        linear_observe(observer, names, block_param_index(l, BlockParam::W3), c.m);
        c.g = matmul_nt(c.m, P(BlockParam::W1));
        c.u = matmul_nt(c.m, P(BlockParam::W3));
        c.s = Matrix(c.g.rows(), c.g.cols());
        for (std::size_t i = 0; i < c.s.size(); ++i) c.s.data()[i] = silu(c.g.data()[i]) * c.u.data()[i];
        c.sn = rmsnorm(c.s, c.s.cols(), c.sn_inv);
        linear_observe(observer, names, block_param_index(l, BlockParam::W2), c.sn);
        const Matrix ffn = matmul_nt(c.sn, P(BlockParam::W2));
        for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] = alpha * h.data()[i] + beta * ffn.data()[i];
    }

    cache->z = rmsnorm(h, d, cache->z_inv);
    linear_observe(observer, names, head_index(cfg), cache->z);
    Matrix logits = matmul_nt(cache->z, params[head_index(cfg)]);

    double loss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        auto lr = logits.row(n);
        const double peak = *std::max_element(lr.begin(), lr.end());
        double total = 0.0;
        for (double& x : lr) {
            x = std::exp(x - peak);
            total += x;
        }
        for (double& x : lr) x /= total;
        if (n % T + 1 < T) {
            loss -= std::log(lr[batch.tokens[n + 1]]);
        }
    }
    cache->count = batch.batch * (T - 1);
    cache->softmax = std::move(logits);
    loss /= static_cast<double>(cache->count);
    if (!std::isfinite(loss)) throw NonFiniteError(fmt::format("forward_loss: non-finite loss {}", loss));
    return {loss, std::move(cache)};
}

std::vector<Matrix> backward(std::span<const Matrix> params, const ModelConfig& cfg, const ActivationCache& cache) {
    const TokenBatch& batch = cache.batch;
    const std::size_t d = cfg.d_model;
    const std::size_t dh = cfg.d_head;
    const std::size_t H = cfg.n_heads;
    const std::size_t group = cfg.n_heads / cfg.n_kv_heads;
    const std::size_t T = batch.seq;
    const std::size_t N = batch.batch * T;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto [alpha, beta] = residual_coefficients(cfg);
    const RopeTable rope(T, dh, cfg.rope_theta);

    std::vector<Matrix> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.emplace_back(p.rows(), p.cols());

    // Cross entropy.
    Matrix dlogits = cache.softmax;
    const double inv_count = 1.0 / static_cast<double>(cache.count);
    for (std::size_t n = 0; n < N; ++n) {
        auto r = dlogits.row(n);
        if (n % T + 1 < T) {
            r[batch.tokens[n + 1]] -= 1.0;
            for (double& x : r) x *= inv_count;
        } else {
            std::fill(r.begin(), r.end(), 0.0);
        }
    }
    const Matrix& head = params[head_index(cfg)];
    grads[head_index(cfg)] = matmul_tn(dlogits, cache.z);
    Matrix dh_res = rmsnorm_backward(cache.z, cache.z_inv, d, matmul(dlogits, head));

    for (std::size_t li = cfg.n_layers; li-- > 0;) {
        const LayerCache& c = cache.layers[li];
        auto P = [&](BlockParam w) -> const Matrix& { return params[block_param_index(li, w)]; };
        auto G = [&](BlockParam w) -> Matrix& { return grads[block_param_index(li, w)]; };

        // FFN branch.
        Matrix dffn = dh_res;
        dffn *= beta;
        dh_res *= alpha;
        G(BlockParam::W2) = matmul_tn(dffn, c.sn);
        const Matrix ds = rmsnorm_backward(c.sn, c.sn_inv, c.s.cols(), matmul(dffn, P(BlockParam::W2)));
        Matrix dg(ds.rows(), ds.cols()), du(ds.rows(), ds.cols());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const double gi = c.g.data()[i];
            du.data()[i] = ds.data()[i] * silu(gi);
            dg.data()[i] = ds.data()[i] * c.u.data()[i] * silu_grad(gi);
        }
        G(BlockParam::W1) = matmul_tn(dg, c.m);
        G(BlockParam::W3) = matmul_tn(du, c.m);
        Matrix dm = matmul(dg, P(BlockParam::W1));
        dm += matmul(du, P(BlockParam::W3));
        dh_res += rmsnorm_backward(c.m, c.m_inv, d, dm);

        // Attention branch.
        Matrix dattn = dh_res;
        dattn *= beta;
        dh_res *= alpha;
        G(BlockParam::Wo) = matmul_tn(dattn, c.on);
        const Matrix d_o = rmsnorm_backward(c.on, c.on_inv, H * dh, matmul(dattn, P(BlockParam::Wo)));

        Matrix dqr(N, H * dh), dkr(N, c.kr.cols()), dv(N, c.v.cols());
        std::vector<double> dp(T);
        for (std::size_t b = 0; b < batch.batch; ++b) {
            for (std::size_t hq = 0; hq < H; ++hq) {
                const std::size_t hk = hq / group;
                const double* pbase = c.probs.data() + ((b * H + hq) * T) * T;
                for (std::size_t t = 0; t < T; ++t) {
                    const double* pt = pbase + t * T;
                    const double* dot_ = d_o.row(b * T + t).data() + hq * dh;
                    double weighted = 0.0;
                    for (std::size_t u = 0; u <= t; ++u) {
                        const double* vu = c.v.row(b * T + u).data() + hk * dh;
                        double* dvu = dv.row(b * T + u).data() + hk * dh;
                        double s = 0.0;
                        for (std::size_t j = 0; j < dh; ++j) {
                            s += dot_[j] * vu[j];
                            dvu[j] += pt[u] * dot_[j];
                        }
                        dp[u] = s;
                        weighted += pt[u] * s;
                    }
                    const double* qt = c.qr.row(b * T + t).data() + hq * dh;
                    double* dqt = dqr.row(b * T + t).data() + hq * dh;
                    for (std::size_t u = 0; u <= t; ++u) {
                        const double dsc = pt[u] * (dp[u] - weighted) * scale;
                        if (dsc == 0.0) continue;
                        const double* ku = c.kr.row(b * T + u).data() + hk * dh;
                        double* dku = dkr.row(b * T + u).data() + hk * dh;
                        for (std::size_t j = 0; j < dh; ++j) {
                            dqt[j] += dsc * ku[j];
                            dku[j] += dsc * qt[j];
                        }
                    }
                }
            }
        }
        apply_rope(dqr, T, dh, rope, true);
        apply_rope(dkr, T, dh, rope, true);
        const Matrix dq = rmsnorm_backward(c.qn, c.q_inv, dh, dqr);
        const Matrix dk = rmsnorm_backward(c.kn, c.k_inv, dh, dkr);
        G(BlockParam::Wq) = matmul_tn(dq, c.a);
        G(BlockParam::Wk) = matmul_tn(dk, c.a);
        G(BlockParam::Wv) = matmul_tn(dv, c.av);
        Matrix da = matmul(dq, P(BlockParam::Wq));
        da += matmul(dk, P(BlockParam::Wk));
        da += rmsnorm_backward(c.av, c.av_inv, d, matmul(dv, P(BlockParam::Wv)));
        dh_res += rmsnorm_backward(c.a, c.a_inv, d, da);
    }

    Matrix& dembed = grads[kEmbedIndex];
    for (std::size_t n = 0; n < N; ++n) {
        const std::uint32_t tok = batch.tokens[n];
        auto r = dh_res.row(n);
        for (std::size_t j = 0; j < d; ++j) dembed(j, tok) += r[j];
    }
    return grads;
}

LossAndGrad loss_and_grad(std::span<const Matrix> params, const ModelConfig& cfg, const TokenBatch& batch) {
    const ForwardResult fwd = forward_loss(params, cfg, batch);
    return {fwd.loss, backward(params, cfg, *fwd.cache)};
}

}  // namespace normlab
