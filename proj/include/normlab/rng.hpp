// Copyright (c) 2026, The normlab authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace normlab {

/// xoshiro256** seeded through splitmix64.
///
/// The state is expanded from a single 64-bit seed with splitmix64
/// (increment 0x9e3779b97f4a7c15, multipliers 0xbf58476d1ce4e5b9 and
/// 0x94d049bb133111eb). Output is scrambled as rotl(s1 * 5, 7) * 9. Doubles
/// take the top 53 bits. Normals use Box-Muller and hand out both variates of
/// a pair, so a stream of normals is reproducible given the seed.
class Rng {
public:
    static constexpr std::string_view kAlgorithm = "xoshiro256**/splitmix64";

    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();

    /// Independent child stream, e.g. one per run or per rank.
    Rng fork(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace normlab
