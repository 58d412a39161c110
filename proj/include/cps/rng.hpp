#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cps {

/// Seeded generator with draws defined here rather than by the standard
/// library's distributions, whose output differs between implementations.
/// Same seed, same sequence, on every platform.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    /// Seed from the first eight bytes of SHA-256(material).
    static SeededRng from_material(std::string_view material);

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    /// Uniform in [0, 1) with 53 bits.
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool chance(double p) { return unit() < p; }

    template <class It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::swap(first[i - 1], first[below(i)]);
        }
    }

    template <class Seq>
    const auto& pick(const Seq& seq) {
        return seq[below(seq.size())];
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace cps
