#pragma once

#include <cstdint>
#include <random>

namespace fedcome {

using Rng = std::mt19937_64;

/// What a random stream is used for. Each purpose gets an independent stream
/// per (seed, round, client), so adding draws in one place never shifts
/// another.
enum class Purpose : std::uint64_t {
    init_params = 1,
    synth_means,
    synth_samples,
    partition,
    local_shuffle,
    sampler_anneal,
    sampler_explore,
    sampler_random,
    test_fixture,
};

std::uint64_t mix_seed(std::uint64_t seed, Purpose purpose, std::uint64_t round = 0, std::uint64_t client = 0);

inline Rng make_rng(std::uint64_t seed, Purpose purpose, std::uint64_t round = 0, std::uint64_t client = 0) {
    return Rng(mix_seed(seed, purpose, round, client));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

} // namespace fedcome
