#pragma once

#include <cmath>
#include <cstdint>

namespace unmix {

// Counter-based splittable RNG. Every value is a pure function of
// (seed, stream, counter), so per-pixel streams give identical results no
// matter how work is scheduled across threads.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Packs a domain tag and an element index into a stream id. Domains keep
/// independent draws (abundances, noise, subsampling, ...) from colliding.
constexpr std::uint64_t substream(std::uint64_t domain, std::uint64_t index) {
    return (domain << 48) ^ index;
}

namespace stream_domain {
inline constexpr std::uint64_t kAbundance = 1;
inline constexpr std::uint64_t kNoise = 2;
inline constexpr std::uint64_t kCalibrationNoise = 3;
inline constexpr std::uint64_t kGpSubsample = 4;
inline constexpr std::uint64_t kVca = 5;
inline constexpr std::uint64_t kEndmembers = 6;
inline constexpr std::uint64_t kGeneric = 7;
}  // namespace stream_domain

class CounterRng {
  public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : base_(mix64(mix64(seed + kGolden) ^ mix64(stream * 0xD1342543DE82EF95ull + 1))) {}

    std::uint64_t next_u64() { return mix64(base_ + (counter_++) * kGolden); }

    /// Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in the open interval (0, 1); safe for logs.
    double next_open() {
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    }

    /// Standard normal via Box-Muller; the sine partner is cached.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_open();
        const double u2 = next_double();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  private:
    std::uint64_t base_;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace unmix
