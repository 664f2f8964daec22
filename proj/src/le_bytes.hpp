// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian integer and f64 packing shared by frames and checkpoints.

#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <vector>

#include "normlab/error.hpp"

namespace normlab::detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& offset, std::string_view what) {
    if (offset + sizeof(T) > bytes.size()) throw Error(std::string(what) + ": truncated input");
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[offset + i]) << (8 * i);
    offset += sizeof(T);
    return value;
}

inline void put_f64(std::vector<std::uint8_t>& out, double x) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &x, sizeof bits);
    put_le(out, bits);
}

inline double get_f64(std::span<const std::uint8_t> bytes, std::size_t& offset, std::string_view what) {
    const auto bits = get_le<std::uint64_t>(bytes, offset, what);
    double x = 0.0;
    std::memcpy(&x, &bits, sizeof x);
    return x;
}

}  // namespace normlab::detail
