// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Byte-level corpus: tokens 0..255 are bytes, 256 is end-of-sequence.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "normlab/error.hpp"
#include "normlab/model.hpp"

namespace normlab {

inline constexpr std::uint32_t kEosToken = 256;
inline constexpr std::size_t kByteVocab = 257;

class CorpusExhausted : public Error {
public:
    using Error::Error;
};

/// Non-overlapping windows of `context` tokens, visited once in a seeded
/// order. The first `eval_windows` windows of that order are held out for
/// evaluation; training draws from the rest and never repeats a window.
class Corpus {
public:
    /// Bytes followed by one EOS token. Throws Error on an empty input.
    static std::vector<std::uint32_t> tokenize(std::span<const std::uint8_t> bytes);

    Corpus(std::vector<std::uint32_t> tokens, std::size_t context, std::uint64_t seed, std::size_t eval_windows);
    static Corpus from_file(const std::filesystem::path& path, std::size_t context, std::uint64_t seed,
                            std::size_t eval_windows);
    static Corpus from_bytes(std::string_view bytes, std::size_t context, std::uint64_t seed, std::size_t eval_windows);

    std::size_t context() const { return context_; }
    std::size_t window_count() const { return order_.size(); }
    std::size_t train_windows() const { return order_.size() - eval_windows_; }
    std::size_t token_count() const { return tokens_.size(); }
    /// Window indices in visiting order, held-out ones first.
    std::span<const std::size_t> order() const { return order_; }

    /// Training windows [first, first + count) of the visiting order as a batch.
    /// Throws CorpusExhausted, naming the bytes needed, when they run out.
    TokenBatch train_batch(std::size_t first, std::size_t count) const;
    TokenBatch eval_batch() const;

    /// Throws CorpusExhausted if `tokens` training tokens cannot be served.
    void require_tokens(std::uint64_t tokens) const;

private:
    TokenBatch gather(std::span<const std::size_t> windows) const;

    std::vector<std::uint32_t> tokens_;
    std::size_t context_;
    std::size_t eval_windows_;
    std::vector<std::size_t> order_;
};

/// Deterministic English-like text from a small word-level grammar, for
/// smoke tests and examples when no corpus is at hand.
std::string synthetic_text(std::size_t bytes, std::uint64_t seed);

}  // namespace normlab
