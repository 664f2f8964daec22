// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0

#include "normlab/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "normlab/error.hpp"

namespace normlab {

using Json = nlohmann::ordered_json;

namespace {

/// One JSON object. Every lookup marks the key as known; finish() rejects the rest.
class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(fmt::format("{}: expected an object", where()));
    }

    template <class T>
    void get(const char* key, T& out) {
        known_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(fmt::format("{}: wrong type ({})", at(key), it->type_name()));
        }
    }

    const Json* child(const char* key) {
        known_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <class E, class Parse>
    void get_enum(const char* key, E& out, Parse parse) {
        std::string text;
        bool present = j_.contains(key);
        get(key, text);
        if (!present) return;
        auto v = parse(text);
        if (!v) throw ConfigError(fmt::format("{}: unknown value '{}'", at(key), text));
        out = *v;
    }

    std::string at(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!known_.count(it.key())) throw ConfigError(fmt::format("{}: unknown key", at(it.key())));
        }
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }

    const Json& j_;
    std::string path_;
    std::set<std::string> known_;
};

LayerLrScales parse_layout(const Json& j, const std::string& path) {
    Section s(j, path);
    LayerLrScales l;
    s.get("input", l.input);
    s.get("hidden", l.hidden);
    s.get("output", l.output);
    s.finish();
    return l;
}

Json layout_json(const LayerLrScales& l) { return Json{{"input", l.input}, {"hidden", l.hidden}, {"output", l.output}}; }

void parse_model(const Json& j, ModelConfig& m) {
    Section s(j, "model");
    s.get("d_model", m.d_model);
    s.get("n_layers", m.n_layers);
    s.get("n_heads", m.n_heads);
    s.get("n_kv_heads", m.n_kv_heads);
    s.get("d_head", m.d_head);
    s.get("mlp_factor", m.mlp_factor);
    s.get("vocab_size", m.vocab_size);
    s.get("context_len", m.context_len);
    s.get("rope_theta", m.rope_theta);
    s.get_enum("init_scheme", m.init_scheme, parse_init_scheme);
    s.get_enum("residual_scheme", m.residual_scheme, parse_residual_scheme);
    s.get("ffn_depth_offset", m.ffn_depth_offset);
    s.get("tie_embeddings", m.tie_embeddings);
    s.finish();
}

void parse_optimizer(const Json& j, OptimizerSection& o) {
    Section s(j, "optimizer");
    s.get("lr", o.lr);
    s.get("momentum", o.momentum);
    s.get("weight_decay", o.weight_decay);
    s.get_enum("schedule", o.schedule, parse_schedule_kind);
    s.get("total_horizon", o.total_horizon);
    s.get("decay_fraction", o.decay_fraction);
    s.get("ns_iters", o.ns_iters);
    if (const Json* l = s.child("layout")) o.layout = parse_layout(*l, "optimizer.layout");
    s.finish();
}

void parse_data(const Json& j, DataSection& d) {
    Section s(j, "data");
    std::string corpus = d.corpus.string();
    s.get("corpus", corpus);
    d.corpus = corpus;
    s.get("context", d.context);
    s.get("batch_size", d.batch_size);
    s.get("seed", d.seed);
    s.get("eval_windows", d.eval_windows);
    s.finish();
}

void parse_sweep(const Json& j, SweepSection& w) {
    Section s(j, "sweep");
    s.get("lrs", w.lrs);
    if (const Json* g = s.child("lr_grid")) {
        if (!w.lrs.empty()) throw ConfigError("sweep: give either lrs or lr_grid, not both");
        Section gs(*g, "sweep.lr_grid");
        double start = 0.0, step_log2 = 0.5;
        std::size_t count = 0;
        gs.get("start", start);
        gs.get("step_log2", step_log2);
        gs.get("count", count);
        gs.finish();
        for (std::size_t k = 0; k < count; ++k) w.lrs.push_back(start * std::exp2(step_log2 * static_cast<double>(k)));
    }
    s.get("batch_sizes", w.batch_sizes);
    if (const Json* ls = s.child("layouts")) {
        if (!ls->is_array()) throw ConfigError("sweep.layouts: expected an array");
        w.layouts.clear();
        for (std::size_t i = 0; i < ls->size(); ++i)
            w.layouts.push_back(parse_layout((*ls)[i], fmt::format("sweep.layouts[{}]", i)));
    }
    s.get("seeds", w.seeds);
    s.get("seed_policy", w.seed_policy);
    s.get("jobs", w.jobs);
    s.get("tie_input_output", w.tie_input_output);
    s.finish();
}

void parse_logging(const Json& j, LoggingSection& l) {
    Section s(j, "logging");
    s.get("horizons", l.horizons);
    if (const Json* p = s.child("horizons_log2")) {
        Section ps(*p, "logging.horizons_log2");
        int lo = 0, hi = -1;
        ps.get("min", lo);
        ps.get("max", hi);
        ps.finish();
        if (lo < 0 || hi < lo || hi > 62) throw ConfigError("logging.horizons_log2: need 0 <= min <= max <= 62");
        l.horizons.clear();
        for (int k = lo; k <= hi; ++k) l.horizons.push_back(std::uint64_t{1} << k);
    }
    s.get("checkpoint_at_eval", l.checkpoint_at_eval);
    s.finish();
}

void parse_analysis(const Json& j, AnalysisSection& a) {
    Section s(j, "analysis");
    s.get("smoothing", a.smoothing.enabled);
    s.get("smoothing_max_batch", a.smoothing.max_batch);
    s.get("smoothing_min_tokens", a.smoothing.min_tokens);
    s.get("fit_points", a.fit_points);
    s.get("norm_param", a.norm_param);
    s.get("band_lo", a.band_lo);
    s.get("band_hi", a.band_hi);
    s.finish();
}

}  // namespace

void validate_lr_grid(const std::vector<double>& lrs) {
    for (double lr : lrs) {
        if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError(fmt::format("sweep.lrs: {} is not a positive rate", lr));
    }
    if (lrs.size() < 2) return;
    const double step = std::log2(lrs[1] / lrs[0]);
    if (std::abs(step - 0.5) > 1e-9 && std::abs(step - 1.0) > 1e-9)
        throw ConfigError(fmt::format("sweep.lrs: grid step is 2^{:.6g}; expected 2^0.5 or 2^1", step));
    for (std::size_t i = 2; i < lrs.size(); ++i) {
        if (std::abs(std::log2(lrs[i] / lrs[i - 1]) - step) > 1e-9)
            throw ConfigError(fmt::format("sweep.lrs: grid is not geometric at index {}", i));
    }
}

void RunConfig::validate() const {
    model.validate();
    const auto& o = optimizer;
    if (!(o.lr > 0.0) || !std::isfinite(o.lr)) throw ConfigError("optimizer.lr must be positive");
    if (o.momentum < 0.0 || o.momentum >= 1.0) throw ConfigError("optimizer.momentum must lie in [0, 1)");
    if (o.weight_decay < 0.0) throw ConfigError("optimizer.weight_decay must be non-negative");
    if (o.decay_fraction <= 0.0 || o.decay_fraction > 1.0) throw ConfigError("optimizer.decay_fraction must lie in (0, 1]");
    if (o.ns_iters < 1) throw ConfigError("optimizer.ns_iters must be at least 1");
    for (double v : {o.layout.input, o.layout.hidden, o.layout.output})
        if (!(v > 0.0)) throw ConfigError("optimizer.layout entries must be positive");

    if (data.context < 2) throw ConfigError("data.context must be at least 2");
    if (data.context > model.context_len)
        throw ConfigError(fmt::format("data.context {} exceeds model.context_len {}", data.context, model.context_len));
    if (data.batch_size == 0) throw ConfigError("data.batch_size must be positive");
    if (data.eval_windows == 0) throw ConfigError("data.eval_windows must be positive");
    if (model.vocab_size < 257) throw ConfigError("model.vocab_size must cover 256 bytes plus EOS");

    if (logging.horizons.empty()) throw ConfigError("logging.horizons must not be empty");
    for (std::size_t i = 0; i < logging.horizons.size(); ++i) {
        if (logging.horizons[i] == 0) throw ConfigError("logging.horizons must be positive");
        if (i > 0 && logging.horizons[i] <= logging.horizons[i - 1])
            throw ConfigError("logging.horizons must be strictly increasing");
    }
    if (o.total_horizon != 0 && o.total_horizon < final_horizon())
        throw ConfigError("optimizer.total_horizon is shorter than the last logging horizon");

    validate_lr_grid(sweep.lrs);
    for (std::size_t b : sweep.batch_sizes)
        if (b == 0) throw ConfigError("sweep.batch_sizes must be positive");
    for (const auto& l : sweep.layouts) {
        if (!(l.input > 0.0) || !(l.hidden > 0.0) || !(l.output > 0.0))
            throw ConfigError("sweep.layouts entries must be positive");
        if (sweep.tie_input_output && l.input != l.output)
            throw ConfigError(fmt::format("sweep.layouts: input {} != output {} with tie_input_output", l.input, l.output));
    }
    if (sweep.seed_policy != "fixed" && sweep.seed_policy != "interleave")
        throw ConfigError(fmt::format("sweep.seed_policy: unknown value '{}'", sweep.seed_policy));
    if (sweep.jobs == 0) throw ConfigError("sweep.jobs must be positive");

    if (analysis.fit_points < 3) throw ConfigError("analysis.fit_points must be at least 3");
    if (!(analysis.band_lo < analysis.band_hi)) throw ConfigError("analysis.band_lo must be below band_hi");
}

ScionConfig RunConfig::scion() const {
    ScionConfig c;
    c.base_lr = optimizer.lr;
    c.momentum = optimizer.momentum;
    c.weight_decay = optimizer.weight_decay;
    c.ns.n_iter = optimizer.ns_iters;
    c.schedule.kind = optimizer.schedule;
    c.schedule.decay_fraction = optimizer.decay_fraction;
    c.schedule.total_horizon = optimizer.total_horizon != 0 ? optimizer.total_horizon : final_horizon();
    return c;
}

RunConfig parse_config(std::string_view json_text, std::string_view origin) {
    Json j;
    try {
        j = Json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("{}: {}", origin, e.what()));
    }
    RunConfig cfg;
    try {
        Section root(j, "");
        root.get("name", cfg.name);
        root.get("seed", cfg.seed);
        if (const Json* m = root.child("model")) parse_model(*m, cfg.model);
        if (const Json* o = root.child("optimizer")) parse_optimizer(*o, cfg.optimizer);
        if (const Json* d = root.child("data")) parse_data(*d, cfg.data);
        if (const Json* w = root.child("sweep")) parse_sweep(*w, cfg.sweep);
        if (const Json* l = root.child("logging")) parse_logging(*l, cfg.logging);
        if (const Json* a = root.child("analysis")) parse_analysis(*a, cfg.analysis);
        root.finish();
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", origin, e.what()));
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
    std::ostringstream text;
    text << in.rdbuf();
    RunConfig cfg = parse_config(text.str(), path.string());
    if (!cfg.data.corpus.empty() && cfg.data.corpus.is_relative())
        cfg.data.corpus = path.parent_path() / cfg.data.corpus;
    return cfg;
}

std::string dump_config(const RunConfig& c) {
    const auto& m = c.model;
    const auto& o = c.optimizer;
    Json layouts = Json::array();
    for (const auto& l : c.sweep.layouts) layouts.push_back(layout_json(l));
    Json j{
        {"name", c.name},
        {"seed", c.seed},
        {"model",
         {{"d_model", m.d_model},
          {"n_layers", m.n_layers},
          {"n_heads", m.n_heads},
          {"n_kv_heads", m.n_kv_heads},
          {"d_head", m.d_head},
          {"mlp_factor", m.mlp_factor},
          {"vocab_size", m.vocab_size},
          {"context_len", m.context_len},
          {"rope_theta", m.rope_theta},
          {"init_scheme", to_string(m.init_scheme)},
          {"residual_scheme", to_string(m.residual_scheme)},
          {"ffn_depth_offset", m.ffn_depth_offset},
          {"tie_embeddings", m.tie_embeddings}}},
        {"optimizer",
         {{"lr", o.lr},
          {"momentum", o.momentum},
          {"weight_decay", o.weight_decay},
          {"schedule", to_string(o.schedule)},
          {"total_horizon", o.total_horizon},
          {"decay_fraction", o.decay_fraction},
          {"ns_iters", o.ns_iters},
          {"layout", layout_json(o.layout)}}},
        {"data",
         {{"corpus", c.data.corpus.string()},
          {"context", c.data.context},
          {"batch_size", c.data.batch_size},
          {"seed", c.data.seed},
          {"eval_windows", c.data.eval_windows}}},
        {"sweep",
         {{"lrs", c.sweep.lrs},
          {"batch_sizes", c.sweep.batch_sizes},
          {"layouts", layouts},
          {"seeds", c.sweep.seeds},
          {"seed_policy", c.sweep.seed_policy},
          {"jobs", c.sweep.jobs},
          {"tie_input_output", c.sweep.tie_input_output}}},
        {"logging", {{"horizons", c.logging.horizons}, {"checkpoint_at_eval", c.logging.checkpoint_at_eval}}},
        {"analysis",
         {{"smoothing", c.analysis.smoothing.enabled},
          {"smoothing_max_batch", c.analysis.smoothing.max_batch},
          {"smoothing_min_tokens", c.analysis.smoothing.min_tokens},
          {"fit_points", c.analysis.fit_points},
          {"norm_param", c.analysis.norm_param},
          {"band_lo", c.analysis.band_lo},
          {"band_hi", c.analysis.band_hi}}},
    };
    return j.dump(2);
}

}  // namespace normlab
