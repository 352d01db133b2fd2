// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/rng.hpp"

#include <cmath>

#include "flexrank/errors.hpp"

namespace flexrank {

std::uint64_t SeededRng::uniform_index(std::uint64_t n)
{
    if (n == 0) {
        throw ParameterError("uniform_index: empty range");
    }
    // Reject the top partial block so every residue is equally likely.
    const std::uint64_t remainder = (0 - n) % n;  // 2^64 mod n
    for (;;) {
        const std::uint64_t x = engine_();
        if (remainder == 0 || x < 0 - remainder) {
            return x % n;
        }
    }
}

double SeededRng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
}

} // namespace flexrank
