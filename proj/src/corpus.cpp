// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0

#include "normlab/corpus.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <numeric>

#include <fmt/format.h>

#include "normlab/rng.hpp"

namespace normlab {

std::vector<std::uint32_t> Corpus::tokenize(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw Error("corpus is empty");
    std::vector<std::uint32_t> out(bytes.begin(), bytes.end());
    out.push_back(kEosToken);
    return out;
}

Corpus::Corpus(std::vector<std::uint32_t> tokens, std::size_t context, std::uint64_t seed, std::size_t eval_windows)
    : tokens_(std::move(tokens)), context_(context), eval_windows_(eval_windows) {
    if (context_ < 2) throw Error("corpus context must be at least 2 tokens");
    const std::size_t n = tokens_.size() / context_;
    if (n < eval_windows_ + 1)
        throw CorpusExhausted(fmt::format("corpus has {} windows of {} tokens; {} are held out and at least one more is "
                                          "needed for training ({} bytes)",
                                          n, context_, eval_windows_, (eval_windows_ + 1) * context_ - 1));
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
}

Corpus Corpus::from_bytes(std::string_view bytes, std::size_t context, std::uint64_t seed, std::size_t eval_windows) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data());
    return Corpus(tokenize({p, bytes.size()}), context, seed, eval_windows);
}

Corpus Corpus::from_file(const std::filesystem::path& path, std::size_t context, std::uint64_t seed,
                         std::size_t eval_windows) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot read corpus {}", path.string()));
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (bytes.empty()) throw Error(fmt::format("corpus {} is empty", path.string()));
    return from_bytes(bytes, context, seed, eval_windows);
}

void Corpus::require_tokens(std::uint64_t tokens) const {
    const std::uint64_t windows = (tokens + context_ - 1) / context_;
    if (windows > train_windows()) {
        // One EOS token is appended, so the byte count is one less than the tokens.
        const std::uint64_t need = (windows + eval_windows_) * context_ - 1;
        throw CorpusExhausted(fmt::format("corpus exhausted: {} training tokens need {} windows of {} plus {} held out, "
                                          "i.e. at least {} bytes; the corpus has {} bytes",
                                          tokens, windows, context_, eval_windows_, need, tokens_.size() - 1));
    }
}

TokenBatch Corpus::train_batch(std::size_t first, std::size_t count) const {
    require_tokens(static_cast<std::uint64_t>(first + count) * context_);
    return gather(std::span(order_).subspan(eval_windows_ + first, count));
}

TokenBatch Corpus::eval_batch() const { return gather(std::span(order_).first(eval_windows_)); }

TokenBatch Corpus::gather(std::span<const std::size_t> windows) const {
    TokenBatch b;
    b.batch = windows.size();
    b.seq = context_;
    b.tokens.reserve(b.batch * b.seq);
    for (std::size_t w : windows) {
        const auto start = tokens_.begin() + static_cast<std::ptrdiff_t>(w * context_);
        b.tokens.insert(b.tokens.end(), start, start + static_cast<std::ptrdiff_t>(context_));
    }
    return b;
}

std::string synthetic_text(std::size_t bytes, std::uint64_t seed) {
    static const char* subjects[] = {"the cat", "a dog", "the old man", "my sister", "the robot", "a small bird",
                                     "the teacher", "our neighbour", "the river", "a tired farmer"};
    static const char* verbs[] = {"sees", "likes", "follows", "paints", "finds", "carries", "watches", "builds"};
    static const char* objects[] = {"the red ball", "a green hat", "the long road", "an empty box", "the bright moon",
                                    "a warm loaf", "the quiet house", "a wooden chair", "the tall tree"};
    static const char* tails[] = {"", " every morning", " near the hill", " with great care", " before dinner",
                                  " in the rain"};
    Rng rng(seed);
    std::string out;
    out.reserve(bytes + 64);
    while (out.size() < bytes) {
        // Subject choice steers the verb, so the text has learnable structure.
        const std::size_t s = rng.below(std::size(subjects));
        const std::size_t v = (s + rng.below(3)) % std::size(verbs);
        const std::size_t o = (v * 2 + rng.below(2)) % std::size(objects);
        out += subjects[s];
        out += ' ';
        out += verbs[v];
        out += ' ';
        out += objects[o];
        out += tails[rng.below(std::size(tails))];
        out += rng.below(4) == 0 ? ".\n" : ". ";
    }
    out.resize(bytes);
    if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out;
}

}  // namespace normlab
