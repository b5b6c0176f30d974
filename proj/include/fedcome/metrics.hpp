#pragma once

#include "fedcome/orchestrator.hpp"

#include <cstddef>
#include <filesystem>
#include <limits>
#include "json.hpp"
#include <vector>

namespace fedcome {

struct ExperimentLog {
    nlohmann::json config_snapshot;
    std::vector<RoundRecord> records;
    /// Training-set size per client, used to weight the global loss. Empty
    /// means uniform weights.
    std::vector<std::size_t> client_train_sizes;

    std::size_t num_clients() const noexcept;
};

/// Header plus one row per round: round, weighted_acc, max_violation,
/// mean_drift, qp_fallbacks, loss_c0..loss_c{N-1}, acc_c0..acc_c{N-1}.
/// Reals are written with 17 significant digits.
void write_csv(const ExperimentLog& log, const std::filesystem::path& path);

/// Parses a file produced by write_csv. Fields not in the CSV (selected,
/// wall time) are left default.
std::vector<RoundRecord> read_csv(const std::filesystem::path& path);

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

/// Equal-width bins over [0, 1]; the last bin includes 1.
std::vector<HistogramBin> fairness_histogram(std::span<const double> accs, std::size_t num_bins = 10);

struct MonotonicityReport {
    std::vector<std::size_t> per_client; // rounds where loss_c rose by more than slack
    std::size_t global = 0;              // same, for the size-weighted mean loss
    std::size_t total() const noexcept;
};

/// Compares consecutive records.
MonotonicityReport monotonicity_report(const ExperimentLog& log, double slack);

/// Loss increases above `slack` counted only for clients that were not
/// selected in the round that produced them.
std::size_t unselected_upticks(const ExperimentLog& log, double slack);

/// Size-weighted mean of a record's per-client training losses.
double global_loss(const ExperimentLog& log, const RoundRecord& rec);

/// {final_weighted_acc, mean_final_acc, acc_std, total_violations,
/// config_snapshot}. total_violations is the monotonicity count at slack 1e-6
/// summed over clients.
nlohmann::json summary_json(const ExperimentLog& log);

void write_summary(const ExperimentLog& log, const std::filesystem::path& path);

inline constexpr double kSummarySlack = 1e-6;

} // namespace fedcome
