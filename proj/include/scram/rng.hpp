#pragma once

#include <cstdint>

namespace scram {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based random stream. Streams are keyed by up to four words
/// (seed, run/chain, position, iteration), so per-position draws are
/// independent of visit order and thread count. Successive values come
/// from hashing (key, counter); no state is shared between streams.
class StreamRng {
public:
    explicit StreamRng(std::uint64_t k0, std::uint64_t k1 = 0, std::uint64_t k2 = 0,
                       std::uint64_t k3 = 0) {
        std::uint64_t k = detail::mix64(k0);
        k = detail::mix64(k ^ k1);
        k = detail::mix64(k ^ k2);
        k = detail::mix64(k ^ k3);
        key_ = k;
    }

    std::uint64_t next_u64() { return detail::mix64(key_ ^ counter_++); }

    /// Uniform integer in [0, bound). bound must be >= 1. Fixed-width
    /// multiply keeps the draw count at exactly one per call.
    std::uint32_t next_below(std::uint32_t bound) {
        return static_cast<std::uint32_t>(
            (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
    }

    /// Uniform integer in [lo, hi] inclusive.
    int next_range(int lo, int hi) {
        return lo + static_cast<int>(next_below(static_cast<std::uint32_t>(hi - lo + 1)));
    }

    /// Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace scram
