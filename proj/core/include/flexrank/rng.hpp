// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace flexrank {

/// Seeded sample stream with platform-independent output.
///
/// The bit source is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Distributions are implemented here rather than taken from
/// <random>, because the standard distributions are implementation-defined:
///   - uniform():      top 53 bits of one draw, scaled into [0, 1).
///   - uniform_index(): modulo with rejection, unbiased on [0, n).
///   - normal():       Marsaglia polar method; the spare variate is cached
///                     so each accepted pair yields two samples.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::uint64_t uniform_index(std::uint64_t n);

    /// Standard normal sample.
    double normal();

    /// Independent child stream derived from this one.
    SeededRng fork() { return SeededRng(engine_()); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace flexrank
