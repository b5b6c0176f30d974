#pragma once

#include "fedcome/data.hpp"
#include "fedcome/metrics.hpp"
#include "fedcome/model.hpp"
#include "fedcome/orchestrator.hpp"
#include "fedcome/sampler.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fedcome::verify {

struct PropertyResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

using SuiteResult = std::vector<PropertyResult>;

/// Hand-solved fixtures plus 200 random problems checked against the grid
/// oracle and the KKT certificate.
SuiteResult qp_suite();
/// Pairwise invariant on 100 random gradient matrices, identity on
/// consensual inputs, and minimal deviation against the oracle for M <= 3.
SuiteResult consensus_suite();
/// Per-client and global loss monotonicity of the single-step method on the
/// one-class-per-client fixture.
SuiteResult descent_suite();
/// Exhaustive energy oracle, annealing optimality at small N, and
/// uniformity of pure exploration.
SuiteResult sampler_suite();

const std::vector<std::string>& suite_names();
/// Throws ConfigError for an unknown name.
SuiteResult run_suite(const std::string& name);

/// Calls `visit` with every M-subset of [0, N) in lexicographic order.
void for_each_subset(std::size_t population, std::size_t subset_size,
                     const std::function<void(const std::vector<int>&)>& visit);

/// Independent H(P): sums S(i, j) for i < j read straight from the matrix.
double oracle_energy(const Matrix& s, const std::vector<int>& subset);

/// Least energy over all M-subsets.
double exhaustive_min_energy(const SimilarityTable& table, std::size_t subset_size);

/// Pearson statistic of `counts` against equal expected frequencies.
double chi_square_uniform(const std::vector<std::size_t>& counts);

/// Upper 1% point of chi-square with 14 degrees of freedom (C(6, 2) - 1).
inline constexpr double kChiSquare14At1Percent = 29.141;

/// Synthetic Gaussian-blob benchmark used by the suites and acceptance runs:
/// 10 classes, 32 features, separation 2.5, 300 samples per class,
/// one hidden layer of 64 ReLU units.
struct Benchmark {
    MlpSpec model;
    std::vector<ClientDataset> clients;
};

Benchmark synthetic_benchmark(std::size_t num_clients, std::size_t classes_per_client, std::uint64_t seed);

/// Runs an experiment and wraps the records in a log with client sizes.
ExperimentLog run_logged(const FederationConfig& cfg, const Benchmark& bench);

/// The single-step configuration of the descent check.
FederationConfig descent_config(std::size_t rounds = 200);

} // namespace fedcome::verify
