#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fedul/errors.hpp"

namespace fedul {

// All randomness in the project flows through this header. Standard-library
// distributions are implementation-defined, so the transforms are spelled out
// here to keep every run bit-reproducible.

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Folds any number of 64-bit values into one seed. Used to derive
// independent streams, e.g. mix_seed(master, client_id, round).
inline std::uint64_t mix_seed(std::uint64_t a) {
    std::uint64_t s = a;
    return splitmix64_next(s);
}

template <typename... Rest>
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
    std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return mix_seed(splitmix64_next(s), rest...);
}

// Stream tags so different uses of the same master seed never collide.
namespace seed_tag {
inline constexpr std::uint64_t init = 0x696e6974ULL;        // model init
inline constexpr std::uint64_t local = 0x6c6f63616cULL;     // local training
inline constexpr std::uint64_t data = 0x64617461ULL;        // dataset synthesis
inline constexpr std::uint64_t part = 0x70617274ULL;        // partitioning
inline constexpr std::uint64_t poison = 0x706f69736eULL;    // backdoor injection
inline constexpr std::uint64_t fed = 0x666564ULL;           // orchestration
inline constexpr std::uint64_t retrain = 0x7265747261ULL;   // retrain baseline
inline constexpr std::uint64_t neggrad = 0x6e656767ULL;     // neggrad baseline
inline constexpr std::uint64_t pga = 0x706761ULL;           // pga baseline
inline constexpr std::uint64_t eraser = 0x65726173ULL;      // federaser baseline
inline constexpr std::uint64_t eval = 0x6576616cULL;        // evaluation
inline constexpr std::uint64_t rep = 0x726570ULL;           // repetition index
} // namespace seed_tag

// xoshiro256** with explicit double/normal/gamma transforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64_next(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ContractError("Rng::below: n must be positive");
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller; caches the spare draw.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Gamma(shape, 1) via Marsaglia-Tsang, with the shape<1 boost.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw ContractError("Rng::gamma: shape must be positive");
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0);
            double u = uniform();
            while (u <= 0.0) u = uniform();
            return g * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x;
            double v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> dirichlet(double alpha, int k) {
        std::vector<double> p(static_cast<std::size_t>(k));
        double total = 0.0;
        for (auto& v : p) {
            v = gamma(alpha);
            total += v;
        }
        if (total <= 0.0) {
            // All-zero draw is theoretically impossible; fall back to uniform.
            for (auto& v : p) v = 1.0 / k;
            return p;
        }
        for (auto& v : p) v /= total;
        return p;
    }

    // Seeded Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace fedul
