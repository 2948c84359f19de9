#pragma once

#include <cmath>
#include <cstdint>

namespace gmfg {

// Counter-based pseudorandom generator built on the splitmix64 finalizer.
// Output at counter k is a pure function of (key, k), so streams are
// platform-independent and trivially splittable: sweeps derive one substream
// per (family, size, run) and may consume them from any thread.
//
// Normal variates use Box-Muller on counter pairs instead of
// std::normal_distribution, whose output differs between standard library
// implementations and would break pinned-seed reproducibility.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(mix(seed) ^ (0x9e3779b97f4a7c15ULL * (stream + 1)))) {}

    // Derive an independent generator; child streams with distinct tags do
    // not collide with the parent or with each other.
    CounterRng substream(std::uint64_t tag) const {
        CounterRng r(0);
        r.key_ = mix(key_ ^ mix(tag + 0x517cc1b727220a95ULL));
        return r;
    }

    std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // Uniform double in [0, 1) with 53 random mantissa bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [a, b).
    double next_uniform(double a, double b) { return a + (b - a) * next_double(); }

    // Standard normal via Box-Muller; consumes two counters per call.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        // Guard the log: u1 == 0 occurs with probability 2^-53.
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace gmfg
