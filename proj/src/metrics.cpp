#include "fedcome/metrics.hpp"

#include "fedcome/error.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <sstream>
#include <string>

namespace fedcome {

namespace {

std::string real(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cells.push_back(cell);
    }
    return cells;
}

double parse_real(const std::string& cell, const std::filesystem::path& path, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used == cell.size()) {
            return v;
        }
    } catch (const std::out_of_range&) {
        // Subnormals land here on some libcs; strtod still has the value.
        return std::strtod(cell.c_str(), nullptr);
    } catch (const std::exception&) {
    }
    throw FormatError(fmt::format("{}:{}: bad number '{}'", path.string(), line, cell));
}

} // namespace

std::size_t ExperimentLog::num_clients() const noexcept {
    return records.empty() ? client_train_sizes.size() : records.front().per_client_train_loss.size();
}

void write_csv(const ExperimentLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    const std::size_t n = log.num_clients();
    out << "round,weighted_acc,max_violation,mean_drift,qp_fallbacks";
    for (std::size_t c = 0; c < n; ++c) {
        out << ",loss_c" << c;
    }
    for (std::size_t c = 0; c < n; ++c) {
        out << ",acc_c" << c;
    }
    out << '\n';
    for (const RoundRecord& r : log.records) {
        if (r.per_client_train_loss.size() != n || r.per_client_test_acc.size() != n) {
            throw DimensionError(fmt::format("write_csv: round {} has a different client count", r.round));
        }
        out << r.round << ',' << real(r.weighted_acc) << ',' << real(r.max_violation) << ',' << real(r.mean_drift)
            << ',' << r.qp_fallbacks;
        for (double v : r.per_client_train_loss) {
            out << ',' << real(v);
        }
        for (double v : r.per_client_test_acc) {
            out << ',' << real(v);
        }
        out << '\n';
    }
    out.flush();
    if (!out) {
        throw IoError(fmt::format("failed writing '{}'", path.string()));
    }
}

std::vector<RoundRecord> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot read '{}'", path.string()));
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError(fmt::format("'{}': missing header", path.string()));
    }
    const auto header = split(line);
    if (header.size() < 5 || (header.size() - 5) % 2 != 0 || header[0] != "round") {
        throw FormatError(fmt::format("'{}': unexpected header", path.string()));
    }
    const std::size_t n = (header.size() - 5) / 2;
    std::vector<RoundRecord> records;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw FormatError(fmt::format("{}:{}: {} cells, expected {}", path.string(), lineno, cells.size(),
                                          header.size()));
        }
        RoundRecord r;
        r.round = static_cast<std::size_t>(parse_real(cells[0], path, lineno));
        r.weighted_acc = parse_real(cells[1], path, lineno);
        r.max_violation = parse_real(cells[2], path, lineno);
        r.mean_drift = parse_real(cells[3], path, lineno);
        r.qp_fallbacks = static_cast<std::size_t>(parse_real(cells[4], path, lineno));
        r.per_client_train_loss = Vector(n);
        r.per_client_test_acc = Vector(n);
        for (std::size_t c = 0; c < n; ++c) {
            r.per_client_train_loss[c] = parse_real(cells[5 + c], path, lineno);
            r.per_client_test_acc[c] = parse_real(cells[5 + n + c], path, lineno);
        }
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<HistogramBin> fairness_histogram(std::span<const double> accs, std::size_t num_bins) {
    if (num_bins < 1) {
        throw ConfigError("fairness_histogram: need at least one bin");
    }
    std::vector<HistogramBin> bins(num_bins);
    const auto nb = static_cast<double>(num_bins);
    for (std::size_t b = 0; b < num_bins; ++b) {
        bins[b].lo = static_cast<double>(b) / nb;
        bins[b].hi = static_cast<double>(b + 1) / nb;
    }
    for (double a : accs) {
        const double clamped = std::clamp(a, 0.0, 1.0);
        const auto b = std::min(static_cast<std::size_t>(std::floor(clamped * nb)), num_bins - 1);
        ++bins[b].count;
    }
    return bins;
}

std::size_t MonotonicityReport::total() const noexcept {
    std::size_t t = 0;
    for (std::size_t c : per_client) {
        t += c;
    }
    return t;
}

double global_loss(const ExperimentLog& log, const RoundRecord& rec) {
    const Vector& loss = rec.per_client_train_loss;
    const bool weighted = log.client_train_sizes.size() == loss.size();
    double num = 0.0;
    double den = 0.0;
    for (std::size_t c = 0; c < loss.size(); ++c) {
        const double w = weighted ? static_cast<double>(log.client_train_sizes[c]) : 1.0;
        num += w * loss[c];
        den += w;
    }
    return den > 0.0 ? num / den : 0.0;
}

MonotonicityReport monotonicity_report(const ExperimentLog& log, double slack) {
    MonotonicityReport rep;
    rep.per_client.assign(log.num_clients(), 0);
    for (std::size_t t = 1; t < log.records.size(); ++t) {
        const RoundRecord& prev = log.records[t - 1];
        const RoundRecord& cur = log.records[t];
        for (std::size_t c = 0; c < rep.per_client.size(); ++c) {
            if (cur.per_client_train_loss[c] - prev.per_client_train_loss[c] > slack) {
                ++rep.per_client[c];
            }
        }
        if (global_loss(log, cur) - global_loss(log, prev) > slack) {
            ++rep.global;
        }
    }
    return rep;
}

std::size_t unselected_upticks(const ExperimentLog& log, double slack) {
    std::size_t count = 0;
    for (std::size_t t = 1; t < log.records.size(); ++t) {
        const RoundRecord& prev = log.records[t - 1];
        const RoundRecord& cur = log.records[t];
        for (std::size_t c = 0; c < cur.per_client_train_loss.size(); ++c) {
            const bool selected =
                std::find(cur.selected.begin(), cur.selected.end(), static_cast<int>(c)) != cur.selected.end();
            if (!selected && cur.per_client_train_loss[c] - prev.per_client_train_loss[c] > slack) {
                ++count;
            }
        }
    }
    return count;
}

nlohmann::json summary_json(const ExperimentLog& log) {
    nlohmann::json j;
    double final_weighted = 0.0;
    double mean = 0.0;
    double sd = 0.0;
    if (!log.records.empty()) {
        const RoundRecord& last = log.records.back();
        final_weighted = last.weighted_acc;
        const Vector& accs = last.per_client_test_acc;
        for (double a : accs) {
            mean += a;
        }
        mean /= static_cast<double>(accs.size());
        for (double a : accs) {
            sd += (a - mean) * (a - mean);
        }
        sd = std::sqrt(sd / static_cast<double>(accs.size()));
    }
    j["final_weighted_acc"] = final_weighted;
    j["mean_final_acc"] = mean;
    j["acc_std"] = sd;
    j["total_violations"] = monotonicity_report(log, kSummarySlack).total();
    j["config_snapshot"] = log.config_snapshot;
    return j;
}

void write_summary(const ExperimentLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << summary_json(log).dump(2) << '\n';
    if (!out) {
        throw IoError(fmt::format("failed writing '{}'", path.string()));
    }
}

} // namespace fedcome
