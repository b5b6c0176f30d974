#pragma once

#include "fedcome/consensus.hpp"
#include "fedcome/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fedcome {

struct SamplerConfig {
    std::size_t subset_size = 1;   // M
    double mu = 0.7;               // fraction of the subset chosen by annealing
    double alpha = 0.5;            // EMA weight on the previous similarity
    std::size_t sa_iters = 600;
    double t0 = 1.0;               // initial temperature
    double temp_decay = 0.997;     // per annealing iteration
    std::uint64_t seed = 0;

    void validate(std::size_t population) const;
    /// Members replaced at random after annealing: ceil((1 - mu) M).
    std::size_t exploration_count() const;
};

/// Pairwise client similarities, exponentially averaged gradient cosines.
/// Symmetric, zero-initialised; the diagonal is never read.
class SimilarityTable {
public:
    explicit SimilarityTable(std::size_t population);

    std::size_t size() const noexcept { return s_.rows(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return s_(i, j); }
    /// Sets both (i, j) and (j, i).
    void set(std::size_t i, std::size_t j, double value);
    const Matrix& matrix() const noexcept { return s_; }

    /// For every pair in `subset` (whose order matches the gradient columns):
    /// S_ij <- alpha * S_ij + (1 - alpha) * cos(g_i, g_j). Pairs outside the
    /// subset are untouched.
    void update(std::span<const int> subset, const GradientMatrix& gradients, double alpha);

    /// Full N x N matrix, one row per line, no header.
    void write_csv(const std::filesystem::path& path) const;
    static SimilarityTable read_csv(const std::filesystem::path& path);

private:
    Matrix s_;
};

struct Cosine {
    double value = 0.0;
    bool degenerate = false; // an input had zero norm; value is 0
};

/// <x, y> / (|x| |y|), clamped to [-1, 1].
Cosine cosine(std::span<const double> x, std::span<const double> y);

/// Sum of S_ij over unordered pairs i < j inside `subset`.
double subset_energy(const SimilarityTable& table, std::span<const int> subset);

/// Simulated-annealing search for a low-energy subset of size M, followed by
/// replacing ceil((1 - mu) M) members uniformly at random. Returns sorted ids.
/// Deterministic in (cfg.seed, round).
std::vector<int> anneal_select(const SimilarityTable& table, const SamplerConfig& cfg, std::uint64_t round);

/// Uniformly random M-subset, sorted. Deterministic in (seed, round).
std::vector<int> random_select(std::size_t population, std::size_t subset_size, std::uint64_t seed,
                               std::uint64_t round);

} // namespace fedcome
