// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0

#include "normlab/runlog.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <json.hpp>

#include "le_bytes.hpp"

namespace normlab {

using Json = nlohmann::ordered_json;

namespace {

class Record {
public:
    Record(std::string_view text, std::string_view where) : where_(where) {
        try {
            j_ = Json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(fmt::format("{}: invalid JSON: {}", where_, e.what()));
        }
        if (!j_.is_object()) throw SchemaError(fmt::format("{}: expected a JSON object", where_));
    }

    template <class T>
    T get(const char* key) const {
        auto it = j_.find(key);
        if (it == j_.end()) throw SchemaError(fmt::format("{}: missing field '{}'", where_, key));
        try {
            return it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw SchemaError(fmt::format("{}: field '{}' has the wrong type ({})", where_, key, it->type_name()));
        }
    }

    template <class T>
    T get_or(const char* key, T fallback) const {
        return j_.contains(key) ? get<T>(key) : fallback;
    }

    void expect_type(std::string_view type) const {
        const auto t = get<std::string>("type");
        if (t != type) throw SchemaError(fmt::format("{}: expected a '{}' record, got '{}'", where_, type, t));
    }

private:
    Json j_;
    std::string where_;
};

}  // namespace

std::string serialize(const RunHeader& h) {
    Json j{{"type", "run"},
           {"run_id", h.run_id},
           {"lr", h.lr},
           {"batch", h.batch},
           {"seed", h.seed},
           {"data_seed", h.data_seed},
           {"context", h.context},
           {"layout", {{"input", h.layout.input}, {"hidden", h.layout.hidden}, {"output", h.layout.output}}},
           {"schedule", h.schedule},
           {"momentum", h.momentum},
           {"weight_decay", h.weight_decay},
           {"d_model", h.d_model},
           {"n_layers", h.n_layers},
           {"vocab_size", h.vocab_size},
           {"norm_kinds", h.norm_kinds},
           {"resumed_from", h.resumed_from}};
    return j.dump();
}

std::string serialize(const LogLine& l) {
    Json j{{"type", "eval"},       {"run_id", l.run_id}, {"step", l.step},
           {"tokens", l.tokens},   {"raw_loss", l.raw_loss}, {"norms", l.norms},
           {"lr_effective", l.lr_effective}, {"wall_ms", l.wall_ms}};
    return j.dump();
}

RunHeader parse_header(std::string_view text, std::string_view where) {
    const Record r(text, where);
    r.expect_type("run");
    RunHeader h;
    h.run_id = r.get<std::string>("run_id");
    h.lr = r.get<double>("lr");
    h.batch = r.get<std::size_t>("batch");
    h.seed = r.get<std::uint64_t>("seed");
    h.data_seed = r.get<std::uint64_t>("data_seed");
    h.context = r.get<std::size_t>("context");
    const auto layout = r.get<std::map<std::string, double>>("layout");
    for (const char* key : {"input", "hidden", "output"})
        if (!layout.count(key)) throw SchemaError(fmt::format("{}: missing field 'layout.{}'", where, key));
    h.layout = {layout.at("input"), layout.at("hidden"), layout.at("output")};
    h.schedule = r.get<std::string>("schedule");
    h.momentum = r.get<double>("momentum");
    h.weight_decay = r.get<double>("weight_decay");
    h.d_model = r.get<std::size_t>("d_model");
    h.n_layers = r.get<std::size_t>("n_layers");
    h.vocab_size = r.get<std::size_t>("vocab_size");
    h.norm_kinds = r.get<std::map<std::string, std::string>>("norm_kinds");
    h.resumed_from = r.get_or<std::string>("resumed_from", "");
    return h;
}

LogLine parse_log_line(std::string_view text, std::string_view where) {
    const Record r(text, where);
    r.expect_type("eval");
    LogLine l;
    l.run_id = r.get<std::string>("run_id");
    l.step = r.get<std::uint64_t>("step");
    l.tokens = r.get<std::uint64_t>("tokens");
    l.raw_loss = r.get<double>("raw_loss");
    l.norms = r.get<std::map<std::string, double>>("norms");
    l.lr_effective = r.get<std::map<std::string, double>>("lr_effective");
    l.wall_ms = r.get<double>("wall_ms");
    return l;
}

RunLog read_run_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("cannot read run log {}", path.string()));
    RunLog log;
    log.path = path;
    std::string line;
    std::size_t number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        const std::string where = fmt::format("{}:{}", path.string(), number);
        if (!have_header) {
            log.header = parse_header(line, where);
            have_header = true;
            continue;
        }
        LogLine l = parse_log_line(line, where);
        if (l.run_id != log.header.run_id)
            throw SchemaError(fmt::format("{}: run_id '{}' does not match header '{}'", where, l.run_id, log.header.run_id));
        if (!log.evals.empty() && (l.step <= log.evals.back().step || l.tokens <= log.evals.back().tokens))
            throw SchemaError(fmt::format("{}: step and tokens must increase", where));
        log.evals.push_back(std::move(l));
    }
    if (!have_header) throw SchemaError(fmt::format("{}: empty run log", path.string()));
    return log;
}

std::vector<RunLog> read_run_logs(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(fmt::format("{} is not a directory", dir.string()));
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    if (files.empty()) throw Error(fmt::format("no run logs (*.jsonl) in {}", dir.string()));
    std::sort(files.begin(), files.end());
    std::vector<RunLog> out;
    for (const auto& f : files) out.push_back(read_run_log(f));
    return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'N', 'L', 'C', 'K', 'P', 'T', '0', '1'};

void put_matrix(std::vector<std::uint8_t>& out, const Matrix& m) {
    detail::put_le<std::uint64_t>(out, m.rows());
    detail::put_le<std::uint64_t>(out, m.cols());
    for (double x : m.data()) detail::put_f64(out, x);
}

Matrix get_matrix(std::span<const std::uint8_t> bytes, std::size_t& off, std::string_view where) {
    const auto rows = detail::get_le<std::uint64_t>(bytes, off, where);
    const auto cols = detail::get_le<std::uint64_t>(bytes, off, where);
    if (cols != 0 && rows > (bytes.size() - off) / 8 / cols)
        throw SchemaError(fmt::format("{}: truncated {}x{} tensor", where, rows, cols));
    std::vector<double> data(rows * cols);
    for (double& x : data) x = detail::get_f64(bytes, off, where);
    return Matrix(rows, cols, std::move(data));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    if (ck.names.size() != ck.params.size() || ck.momentum.size() != ck.params.size())
        throw Error("checkpoint: names, params and momentum must have the same length");
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    detail::put_le<std::uint64_t>(out, ck.step);
    detail::put_le<std::uint64_t>(out, ck.tokens);
    detail::put_le<std::uint64_t>(out, ck.windows);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.params.size()));
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.names[i].size()));
        out.insert(out.end(), ck.names[i].begin(), ck.names[i].end());
        put_matrix(out, ck.params[i]);
    }
    for (const auto& m : ck.momentum) put_matrix(out, m);
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, std::string_view where) {
    try {
        if (bytes.size() < sizeof kMagic || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
            throw SchemaError(fmt::format("{}: not a checkpoint (bad magic)", where));
        std::size_t off = sizeof kMagic;
        Checkpoint ck;
        ck.step = detail::get_le<std::uint64_t>(bytes, off, where);
        ck.tokens = detail::get_le<std::uint64_t>(bytes, off, where);
        ck.windows = detail::get_le<std::uint64_t>(bytes, off, where);
        const auto n = detail::get_le<std::uint32_t>(bytes, off, where);
        for (std::uint32_t i = 0; i < n; ++i) {
            const auto len = detail::get_le<std::uint32_t>(bytes, off, where);
            if (len > bytes.size() - off) throw SchemaError(fmt::format("{}: truncated parameter name", where));
            ck.names.emplace_back(reinterpret_cast<const char*>(bytes.data() + off), len);
            off += len;
            ck.params.push_back(get_matrix(bytes, off, where));
        }
        for (std::uint32_t i = 0; i < n; ++i) {
            Matrix m = get_matrix(bytes, off, where);
            if (m.rows() != ck.params[i].rows() || m.cols() != ck.params[i].cols())
                throw SchemaError(fmt::format("{}: momentum shape of {} does not match the parameter", where, ck.names[i]));
            ck.momentum.push_back(std::move(m));
        }
        if (off != bytes.size()) throw SchemaError(fmt::format("{}: {} trailing bytes", where, bytes.size() - off));
        return ck;
    } catch (const SchemaError&) {
        throw;
    } catch (const Error& e) {
        throw SchemaError(e.what());
    }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(ck);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(fmt::format("cannot write checkpoint {}", tmp.string()));
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(fmt::format("short write to {}", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot read checkpoint {}", path.string()));
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_checkpoint(bytes, path.string());
}

}  // namespace normlab
