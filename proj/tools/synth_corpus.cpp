// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Writes the synthetic text corpus used by the example configs.

#include <fstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "normlab/corpus.hpp"

int main(int argc, char** argv) {
    CLI::App app{"normlab-synth-corpus: deterministic English-like text"};
    std::string out;
    std::size_t bytes = 1 << 20;
    std::uint64_t seed = 0;
    app.add_option("out", out, "output file")->required();
    app.add_option("--bytes", bytes, "size in bytes")->default_val(bytes);
    app.add_option("--seed", seed, "generator seed")->default_val(0);
    CLI11_PARSE(app, argc, argv);
    std::ofstream f(out, std::ios::binary);
    if (!f) {
        fmt::print(stderr, "error: cannot write {}\n", out);
        return 1;
    }
    f << normlab::synthetic_text(bytes, seed);
    return f ? 0 : 1;
}
