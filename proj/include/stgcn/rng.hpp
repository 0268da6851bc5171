#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace stgcn {

// splitmix64 finalizer. This is the documented 64-bit mix used everywhere a
// seed is derived from another seed, so adding a new consumer never perturbs
// an existing stream.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derive a sub-seed from a master seed and a stable role tag:
// mix64(master ^ fnv1a64(role)).
std::uint64_t derive_seed(std::uint64_t master, std::string_view role);

// xoshiro256++ with hand-rolled distributions. Everything is specified at the
// bit level so identical seeds give identical streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);

    // Unbiased integer in {0, ..., bound-1}; bound >= 1.
    std::uint64_t uniform_int(std::uint64_t bound);

    // Standard normal via Box-Muller; generates pairs, caches the second.
    double normal();

    // Seeded Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_[4];
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

}  // namespace stgcn
