#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace vflu {

/// One splitmix64 step. Used for seed expansion and sub-seed derivation.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Deterministic PRNG (xoshiro256** seeded via splitmix64).
///
/// All randomness in the library flows through this class so that runs are
/// bit-reproducible across platforms; std::uniform_*_distribution is never
/// used because its output is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    uint64_t next() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1), 53 mantissa bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (second deviate cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double ang = 6.283185307179586476925286766559 * u2;
        spare_ = mag * std::sin(ang);
        has_spare_ = true;
        return mag * std::cos(ang);
    }

    /// Uniform integer in [0, n). n must be nonzero.
    uint64_t below(uint64_t n) {
        // Rejection sampling keeps the draw unbiased and deterministic.
        const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
        uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Derive a sub-seed from a master seed and up to three path labels.
    /// Each phase of a run (init, per-round shuffles, calibration, shadows...)
    /// uses a distinct path so arms stay comparable across configs.
    static uint64_t derive(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
        uint64_t s = master;
        uint64_t h = splitmix64(s);
        s = h ^ (a * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
        h = splitmix64(s);
        s = h ^ (b * 0xd1342543de82ef95ull + 0x6a09e667f3bcc909ull);
        h = splitmix64(s);
        s = h ^ (c * 0xa0761d6478bd642full + 0xe7037ed1a0b428dbull);
        return splitmix64(s);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace vflu
