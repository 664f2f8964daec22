// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Run logs (JSONL) and checkpoints. docs/formats.md has the field tables.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "normlab/error.hpp"
#include "normlab/matrix.hpp"
#include "normlab/model.hpp"
#include "normlab/scion.hpp"

namespace normlab {

/// Malformed log line or checkpoint; the message names file and line.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// First line of every run log.
struct RunHeader {
    std::string run_id;
    double lr = 0.0;
    std::size_t batch = 0;
    std::uint64_t seed = 0;
    std::uint64_t data_seed = 0;
    std::size_t context = 0;
    LayerLrScales layout;
    std::string schedule;
    double momentum = 0.0;
    double weight_decay = 0.0;
    std::size_t d_model = 0;
    std::size_t n_layers = 0;
    std::size_t vocab_size = 0;
    /// Parameter name -> assigned norm label.
    std::map<std::string, std::string> norm_kinds;
    std::string resumed_from;

    bool operator==(const RunHeader&) const = default;
};

/// One evaluation point.
struct LogLine {
    std::string run_id;
    std::uint64_t step = 0;
    std::uint64_t tokens = 0;
    double raw_loss = 0.0;
    /// Parameter name -> value of its assigned operator norm.
    std::map<std::string, double> norms;
    /// Layer group -> rate applied at the most recent step.
    std::map<std::string, double> lr_effective;
    double wall_ms = 0.0;

    bool operator==(const LogLine&) const = default;
};

std::string serialize(const RunHeader& h);
std::string serialize(const LogLine& line);
RunHeader parse_header(std::string_view text, std::string_view where = "<header>");
LogLine parse_log_line(std::string_view text, std::string_view where = "<line>");

struct RunLog {
    std::filesystem::path path;
    RunHeader header;
    std::vector<LogLine> evals;
};

/// Reads one JSONL file. Throws SchemaError naming file:line on a bad record,
/// including non-increasing (step, tokens).
RunLog read_run_log(const std::filesystem::path& path);

/// All *.jsonl files in `dir`, sorted by filename. Throws Error when none exist.
std::vector<RunLog> read_run_logs(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Checkpoint layout, all integers and reals little-endian:
//   8 bytes magic "NLCKPT01"
//   u64 step | u64 tokens | u64 windows consumed | u32 parameter count
//   per parameter: u32 name length | name bytes | u64 rows | u64 cols | rows*cols f64
//   per parameter: momentum buffer as u64 rows | u64 cols | rows*cols f64

struct Checkpoint {
    std::uint64_t step = 0;
    std::uint64_t tokens = 0;
    std::uint64_t windows = 0;
    std::vector<std::string> names;
    std::vector<Matrix> params;
    std::vector<Matrix> momentum;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, std::string_view where = "<checkpoint>");
/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace normlab
