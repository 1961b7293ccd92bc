#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rigcal {

// Mixes a seed with stream identifiers so derived generators are independent
// of each other and of evaluation order (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0x94d049bb133111ebULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic random source. Raw bits come from std::mt19937_64, whose
// output sequence is fixed by the standard; the distributions below are
// implemented explicitly because the std:: distribution objects are not
// portable across library implementations. Results are therefore
// bit-identical across platforms for a given seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix_seed(seed, 0x5eedULL)) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform in [0, n) without modulo bias.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes two uniforms per pair, caches the second draw.
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double gaussian(double sigma) { return sigma * gaussian(); }

    // Child generator on an independent stream; depends only on the original
    // seed and the stream ids, never on how much this instance has consumed.
    Rng split(std::uint64_t a, std::uint64_t b = 0) const { return Rng(mix_seed(seed_, a, b)); }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace rigcal
