#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace monoalign {

// splitmix64 step; used to derive independent stream seeds from
// (base seed, step, sample index) so resumed or parallel runs replay
// the exact same draws.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0) {
    return mix64(mix64(base ^ mix64(a)) ^ mix64(b + 0x517cc1b727220a95ULL));
}

// Deterministic random stream. Distributions are hand-rolled on top of raw
// 64-bit draws so the byte-for-byte output does not depend on the standard
// library's <random> distribution internals.
class RngStream {
  public:
    explicit RngStream(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform on the open interval (0,1)
    double uniform01() {
        return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // inclusive range
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(eng_() % static_cast<uint64_t>(hi - lo + 1));
    }

    // Box-Muller
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // G = -log(-log U), U ~ U(0,1)
    double gumbel() { return -std::log(-std::log(uniform01())); }

  private:
    std::mt19937_64 eng_;
};

}  // namespace monoalign
