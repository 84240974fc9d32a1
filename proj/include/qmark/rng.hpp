#pragma once

#include <cstddef>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace qmark {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix64_finalize(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// One-shot splitmix64 hash: advance the state once and return the output.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    return splitmix64_finalize(x + kGoldenGamma);
}

/// Fixed-increment splitmix64 stream (Steele, Lea & Flood). The exact output
/// sequence is part of the key format: watermark locations are re-derived from
/// it, so it must never change.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit constexpr SplitMix64(std::uint64_t state) noexcept : state_(state) {}

    constexpr std::uint64_t next() noexcept {
        state_ += kGoldenGamma;
        return splitmix64_finalize(state_);
    }

    constexpr std::uint64_t operator()() noexcept { return next(); }
    static constexpr std::uint64_t min() noexcept { return 0; }
    static constexpr std::uint64_t max() noexcept { return ~std::uint64_t{0}; }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Index in [0, bound) by plain modulo; the bias is tiny for the bounds
    /// used here and keeping it simple keeps other implementations exact.
    std::uint64_t below(std::uint64_t bound) noexcept { return next() % bound; }

private:
    std::uint64_t state_;
};

/// Per-stream seed: splitmix64(seed ^ (stream * gamma)).
constexpr std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return splitmix64(seed ^ (stream * kGoldenGamma));
}

/// First `count` entries of a partial Fisher-Yates shuffle of [0, n): at step
/// i, swap slot i with slot i + below(n - i). Uses a sparse virtual array so
/// sampling a few positions out of millions stays O(count).
inline std::vector<std::size_t> partial_fisher_yates(std::size_t n, std::size_t count,
                                                     SplitMix64& rng) {
    std::unordered_map<std::size_t, std::size_t> moved;
    moved.reserve(count * 2);
    auto slot = [&](std::size_t i) {
        auto it = moved.find(i);
        return it == moved.end() ? i : it->second;
    };
    std::vector<std::size_t> picked;
    picked.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        const std::size_t at_j = slot(j);
        const std::size_t at_i = slot(i);
        moved[j] = at_i;
        picked.push_back(at_j);
    }
    return picked;
}

}  // namespace qmark
