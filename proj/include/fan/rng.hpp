#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace fan {

// Deterministic random stream. All draws are implemented on top of raw
// 64-bit outputs so the sequence is pinned by this file, not by the
// standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Derives an independent child stream from a seed and a path of stream
    // ids (e.g. {iteration, episode, role}). Mixing is splitmix64-style so
    // nearby ids give unrelated streams.
    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        std::uint64_t state = mix(seed ^ 0x9e3779b97f4a7c15ull);
        for (std::uint64_t id : path) {
            state = mix(state ^ mix(id + 0xbf58476d1ce4e5b9ull));
        }
        return Rng(state);
    }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Integer uniform on [0, n). n must be positive.
    int uniform_int(int n) {
        return static_cast<int>(gen_() % static_cast<std::uint64_t>(n));
    }

    // Standard normal via Box-Muller. Always consumes exactly two uniforms;
    // no cached spare, so the stream position is predictable.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) {
            u1 = 0x1.0p-53;
        }
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    // Categorical draw by CDF inversion; probs need not be exactly
    // normalized, trailing mass rounds to the last index.
    int categorical(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
            acc += probs[k];
            if (u < acc) {
                return static_cast<int>(k);
            }
        }
        return static_cast<int>(probs.size()) - 1;
    }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = gen_() % i;
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::mt19937_64 gen_;
};

}  // namespace fan
