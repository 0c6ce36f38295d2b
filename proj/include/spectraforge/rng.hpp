#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace spectraforge {

// mt19937_64 with hand-rolled draw methods. The engine's output sequence is
// pinned by the standard; std::*_distribution is not, so uniform/normal/
// bounded draws are implemented here to make seeded runs reproducible across
// standard libraries. Whole state round trips through serialize().
class Rng {
public:
    Rng() : eng_(0) {}
    explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection sampled to avoid modulo bias.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller. One value per call; the sine partner is
    // discarded so the draw count stays predictable.
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Fisher-Yates over indices [0, n).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Child stream keyed by index. Advances the parent by one draw, so the
    // engine state alone captures everything a checkpoint needs.
    Rng fork(std::uint64_t index) {
        return Rng(splitmix64(next_u64() ^ splitmix64(index)));
    }

    std::string serialize() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }
    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
    }

    static std::uint64_t splitmix64(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace spectraforge
