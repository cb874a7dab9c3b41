#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace planter::rng {

/// SplitMix64 finalizer. Stable across platforms; the basis for all seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e9b5ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and one or more integer tags.
/// Used wherever independent streams are needed (per layer, per epoch, per
/// candidate); the derivation is stateless so interrupted runs can resume.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed ^ mix64(tag));
}
template <class... Tags>
std::uint64_t derive(std::uint64_t seed, std::uint64_t tag, Tags... rest) {
    return derive(derive(seed, tag), rest...);
}

/// mt19937_64 with hand-rolled value mappings. The engine itself is pinned by
/// the standard; std::uniform_* distributions are not, so we avoid them.
class Prng {
public:
    explicit Prng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double next_double() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Unit normal via Box-Muller; consumes two draws per pair.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [0, n) by rejection; exact and portable.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// In-place Fisher-Yates shuffle with the portable integer draw.
template <class T>
void shuffle(std::vector<T>& v, Prng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = std::size_t(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

/// [0, n) as a shuffled permutation.
std::vector<int> permutation(int n, std::uint64_t seed);

/// k distinct values drawn from [0, n), returned in ascending order.
std::vector<int> sample_without_replacement(int n, int k, std::uint64_t seed);

}  // namespace planter::rng
