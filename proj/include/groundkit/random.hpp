// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace groundkit {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr auto mix_seed(std::uint64_t x) noexcept -> std::uint64_t
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30U)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27U)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31U);
}

/// Seed for a sub-stream identified by `parts`, e.g. (seed, epoch, batch).
constexpr auto derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) noexcept
    -> std::uint64_t
{
    std::uint64_t s = mix_seed(base);
    for (std::uint64_t p : parts) {
        s = mix_seed(s ^ mix_seed(p + 0x632BE59BD9B4E019ULL));
    }
    return s;
}

/// Seeded generator whose outputs do not depend on the standard
/// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed)
        : engine_(mix_seed(seed))
    {
    }

    auto next_u64() -> std::uint64_t { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    auto uniform() -> double
    {
        return static_cast<double>(engine_() >> 11U) * 0x1.0p-53;
    }

    auto uniform(double lo, double hi) -> double { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n) by rejection; n must be positive.
    auto below(std::uint64_t n) -> std::uint64_t
    {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) {
            x = engine_();
        }
        return x % n;
    }

    auto bernoulli(double p) -> bool { return uniform() < p; }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace groundkit
