#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace degforge {

// Seeded generator with portable distributions. std:: distributions are
// implementation-defined, which would break cross-machine reproducibility
// of manifests, so uniform/normal are derived from raw mt19937_64 draws.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return (engine_() >> 11) * (1.0 / 9007199254740992.0);  // 2^53
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n), n > 0.
    uint64_t uniform_int(uint64_t n) {
        // modulo bias is negligible for n << 2^64
        return engine_() % n;
    }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Derive an independent stream; used to fan a master seed out to
    // per-item seeds in a stable, order-independent way.
    static uint64_t mix(uint64_t seed, uint64_t a, uint64_t b = 0) {
        uint64_t x = seed ^ (a * 0x9E3779B97F4A7C15ull) ^ (b * 0xBF58476D1CE4E5B9ull);
        x ^= x >> 30;
        x *= 0xBF58476D1CE4E5B9ull;
        x ^= x >> 27;
        x *= 0x94D049BB133111EBull;
        x ^= x >> 31;
        return x;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a over a string, for seeding from text keys.
inline uint64_t hash_str(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace degforge
