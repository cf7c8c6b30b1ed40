#pragma once

#include <cmath>
#include <cstdint>

#include "tensor.hpp"

namespace fmsr {

/// Deterministic generator (splitmix64 core). All project randomness flows
/// through this class so that fixed seeds reproduce bit-identical runs on any
/// platform; std:: distributions are implementation-defined and avoided.
class Rng {
 public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// integer in [lo, hi] inclusive
    i64 uniform_int(i64 lo, i64 hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<i64>(next_u64() % span);
    }

    /// standard normal, Box-Muller (spare cached)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    template <typename T>
    void fill_uniform(Tensor<T>& t, double lo, double hi) {
        for (i64 i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
    }
    template <typename T>
    void fill_normal(Tensor<T>& t, double mean = 0.0, double stddev = 1.0) {
        for (i64 i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(mean + stddev * normal());
    }

 private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fmsr
