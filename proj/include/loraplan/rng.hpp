#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string_view>

namespace loraplan {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Seeded mt19937_64 wrapper with named, order-independent substreams.
// Substreams derive from the original seed, never from drawn state, so adding
// a consumer of one stream cannot shift the draws seen by another.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(detail::splitmix64(seed)) {}

    Rng substream(std::string_view tag, std::uint64_t index = 0) const {
        std::uint64_t h = detail::splitmix64(seed_ ^ detail::fnv1a(tag));
        return Rng(detail::splitmix64(h + index));
    }

    // [0, 1)
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    double exponential(double rate) {
        if (rate <= 0) throw std::domain_error("rate must be positive");
        return -std::log1p(-uniform01()) / rate;
    }

    double normal(double mean, double stddev) {
        // Box-Muller, no cached spare: one call, two uniforms, one value.
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925287 * u2);
    }

    // [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::domain_error("n must be positive");
        const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

}  // namespace loraplan
