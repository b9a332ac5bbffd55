#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "prpl/numerics/tensor.hpp"

namespace prpl {

/// Counter-based generator: output i is a SplitMix64 finalizer applied to (seed, i).
/// Identical seed and call sequence give an identical stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    static std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() noexcept {
        return mix(seed_ * 0xd1342543de82ef95ull + (++counter_) * 0x9e3779b97f4a7c15ull);
    }

    /// Uniform in the open interval (0, 1).
    double uniform() noexcept { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept {
        // Lemire's multiply-shift; bias is negligible for the ranges used here.
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Independent child stream; result depends only on this seed and `stream`.
    Rng fork(std::uint64_t stream) const noexcept { return Rng(mix(seed_ ^ mix(stream + 0x632be59bd9b4e019ull))); }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline Tensor2 randn(Rng& rng, std::size_t rows, std::size_t cols) {
    Tensor2 out(rows, cols);
    for (auto& v : out.span()) v = static_cast<float>(rng.normal());
    return out;
}

}  // namespace prpl
