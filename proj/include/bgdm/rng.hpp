#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "bgdm/tensor.hpp"

namespace bgdm {

/// Deterministic random source. Gaussian draws use Box-Muller on top of
/// mt19937_64 so that a given seed produces identical bits on every build
/// (std::normal_distribution is implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// splitmix64 finalizer; decorrelates structured (seed, stream) pairs.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Derive an independent stream for a sub-task; stable w.r.t. call order
    /// of other streams.
    static Rng derive(std::uint64_t seed, std::uint64_t stream) {
        std::seed_seq seq{seed, static_cast<std::uint64_t>(
                                    stream ^ 0x9e3779b97f4a7c15ull)};
        std::mt19937_64 e(seq);
        Rng r(0);
        r.engine_ = e;
        return r;
    }

    double uniform() {
        // 53-bit uniform in [0, 1)
        return (engine_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t integer() { return engine_(); }

    /// Standard normal tensor; complex entries get independent N(0,1) real
    /// and imaginary parts.
    template <class T>
    Tensor<T> standard_normal(const std::vector<std::size_t>& shape) {
        Tensor<T> t(shape);
        for (std::size_t i = 0; i < t.size(); ++i) {
            if constexpr (is_complex_v<T>) {
                const double re = gaussian();
                const double im = gaussian();
                t[i] = cdouble(re, im);
            } else {
                t[i] = gaussian();
            }
        }
        return t;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace bgdm
