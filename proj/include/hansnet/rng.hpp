#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace hansnet {

/// splitmix64 finalizer. Used to fan one master seed out into independent streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Sub-seed for (master, stream). Streams are small integers naming a consumer
/// (data shuffling, init, dropout, ...), optionally combined with an index.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(splitmix64(master) ^ (stream * 0xd1b54a32d192ed03ULL));
}

/// Named seed streams.
enum class Stream : std::uint64_t {
    init = 1,
    shuffle = 2,
    dropout = 3,
    phantom_train = 4,
    phantom_val = 5,
    phantom_test = 6,
    split = 7,
    mc = 8,
};

inline std::uint64_t derive_seed(std::uint64_t master, Stream s, std::uint64_t index = 0) {
    return derive_seed(derive_seed(master, static_cast<std::uint64_t>(s)), index);
}

/// Deterministic generator. The engine is mt19937_64 (bit-exact by the standard);
/// distributions are computed here because the std:: ones are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (no cached second value, so the stream stays simple).
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);

    /// Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
};

}  // namespace hansnet
