#include "fedcome/sampler.hpp"

#include "fedcome/error.hpp"
#include "fedcome/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fedcome {

void SamplerConfig::validate(std::size_t population) const {
    if (subset_size < 1 || subset_size > population) {
        throw ConfigError(fmt::format("sampler: subset size {} must be in [1, {}]", subset_size, population));
    }
    if (!(mu >= 0.0 && mu <= 1.0)) {
        throw ConfigError(fmt::format("sampler: mu {} outside [0, 1]", mu));
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError(fmt::format("sampler: alpha {} outside [0, 1]", alpha));
    }
    if (!(t0 > 0.0) || !std::isfinite(t0)) {
        throw ConfigError("sampler: initial temperature must be positive");
    }
    if (!(temp_decay > 0.0 && temp_decay < 1.0)) {
        throw ConfigError(fmt::format("sampler: temp_decay {} outside (0, 1)", temp_decay));
    }
}

std::size_t SamplerConfig::exploration_count() const {
    // The epsilon keeps e.g. (1 - 0.7) * 20 = 6.000000000000001 at 6.
    const double raw = (1.0 - mu) * static_cast<double>(subset_size);
    const auto n = static_cast<std::size_t>(std::max(0.0, std::ceil(raw - 1e-9)));
    return std::min(n, subset_size);
}

SimilarityTable::SimilarityTable(std::size_t population) : s_(population, population) {}

void SimilarityTable::set(std::size_t i, std::size_t j, double value) {
    if (i >= size() || j >= size()) {
        throw IndexError(fmt::format("similarity table: index ({}, {}) outside {}", i, j, size()));
    }
    s_(i, j) = value;
    s_(j, i) = value;
}

void SimilarityTable::update(std::span<const int> subset, const GradientMatrix& gradients, double alpha) {
    gradients.validate();
    if (subset.size() != gradients.count() ||
        !std::equal(subset.begin(), subset.end(), gradients.client_ids.begin())) {
        throw DimensionError("similarity update: subset does not match gradient columns");
    }
    for (int id : subset) {
        if (id < 0 || static_cast<std::size_t>(id) >= size()) {
            throw IndexError(fmt::format("similarity update: client {} outside [0, {})", id, size()));
        }
    }
    std::vector<Vector> cols;
    cols.reserve(subset.size());
    for (std::size_t a = 0; a < subset.size(); ++a) {
        cols.push_back(gradients.g.column(a));
    }
    for (std::size_t a = 0; a < subset.size(); ++a) {
        for (std::size_t b = a + 1; b < subset.size(); ++b) {
            const auto i = static_cast<std::size_t>(subset[a]);
            const auto j = static_cast<std::size_t>(subset[b]);
            const double q = cosine(cols[a].span(), cols[b].span()).value;
            set(i, j, alpha * s_(i, j) + (1.0 - alpha) * q);
        }
    }
}

void SimilarityTable::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t j = 0; j < size(); ++j) {
            out << (j == 0 ? "" : ",") << fmt::format("{:.17g}", s_(i, j));
        }
        out << '\n';
    }
    if (!out) {
        throw IoError(fmt::format("failed writing '{}'", path.string()));
    }
}

SimilarityTable SimilarityTable::read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot read '{}'", path.string()));
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) {
                    throw FormatError("");
                }
            } catch (const std::exception&) {
                throw FormatError(fmt::format("'{}': bad similarity cell '{}'", path.string(), cell));
            }
        }
        rows.push_back(std::move(row));
    }
    SimilarityTable t(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) {
            throw FormatError(fmt::format("'{}': row {} has {} cells, expected {}", path.string(), i, rows[i].size(),
                                          rows.size()));
        }
        for (std::size_t j = 0; j < rows.size(); ++j) {
            t.s_(i, j) = rows[i][j];
        }
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = i + 1; j < t.size(); ++j) {
            if (t.s_(i, j) != t.s_(j, i)) {
                throw FormatError(fmt::format("'{}': table is not symmetric at ({}, {})", path.string(), i, j));
            }
        }
    }
    return t;
}

Cosine cosine(std::span<const double> x, std::span<const double> y) {
    const double nx = norm2(x);
    const double ny = norm2(y);
    if (nx == 0.0 || ny == 0.0) {
        return {0.0, true};
    }
    return {std::clamp(dot(x, y) / (nx * ny), -1.0, 1.0), false};
}

double subset_energy(const SimilarityTable& table, std::span<const int> subset) {
    if (subset.empty()) {
        throw IndexError("subset_energy: empty subset");
    }
    std::vector<int> ids(subset.begin(), subset.end());
    std::sort(ids.begin(), ids.end());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] < 0 || static_cast<std::size_t>(ids[k]) >= table.size()) {
            throw IndexError(fmt::format("subset_energy: client {} outside [0, {})", ids[k], table.size()));
        }
        if (k > 0 && ids[k] == ids[k - 1]) {
            throw IndexError(fmt::format("subset_energy: client {} listed twice", ids[k]));
        }
    }
    double h = 0.0;
    for (std::size_t a = 0; a < ids.size(); ++a) {
        for (std::size_t b = a + 1; b < ids.size(); ++b) {
            h += table(static_cast<std::size_t>(ids[a]), static_cast<std::size_t>(ids[b]));
        }
    }
    return h;
}

std::vector<int> random_select(std::size_t population, std::size_t subset_size, std::uint64_t seed,
                               std::uint64_t round) {
    if (subset_size < 1 || subset_size > population) {
        throw ConfigError(fmt::format("random_select: subset size {} must be in [1, {}]", subset_size, population));
    }
    std::vector<int> ids(population);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng = make_rng(seed, Purpose::sampler_random, round);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(subset_size);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<int> anneal_select(const SimilarityTable& table, const SamplerConfig& cfg, std::uint64_t round) {
    const std::size_t n = table.size();
    cfg.validate(n);
    const std::size_t m = cfg.subset_size;

    Rng rng = make_rng(cfg.seed, Purpose::sampler_anneal, round);
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<int> members(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
    std::vector<int> outside(pool.begin() + static_cast<std::ptrdiff_t>(m), pool.end());

    double energy = subset_energy(table, members);
    std::vector<int> best = members;
    double best_energy = energy;

    if (!outside.empty()) {
        std::uniform_int_distribution<std::size_t> pick_in(0, m - 1);
        std::uniform_int_distribution<std::size_t> pick_out(0, outside.size() - 1);
        double temperature = cfg.t0;
        for (std::size_t it = 0; it < cfg.sa_iters; ++it, temperature *= cfg.temp_decay) {
            const std::size_t slot = pick_in(rng);
            const std::size_t cand = pick_out(rng);
            const auto leaving = static_cast<std::size_t>(members[slot]);
            const auto joining = static_cast<std::size_t>(outside[cand]);
            double delta = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                if (k != slot) {
                    const auto other = static_cast<std::size_t>(members[k]);
                    delta += table(joining, other) - table(leaving, other);
                }
            }
            const double u = uniform01(rng);
            if (delta <= 0.0 || u < std::exp(-delta / temperature)) {
                std::swap(members[slot], outside[cand]);
                energy = subset_energy(table, members);
                if (energy < best_energy) {
                    best_energy = energy;
                    best = members;
                }
            }
        }
    }

    const std::size_t explore = cfg.exploration_count();
    if (explore > 0) {
        Rng erng = make_rng(cfg.seed, Purpose::sampler_explore, round);
        std::sort(best.begin(), best.end());
        std::shuffle(best.begin(), best.end(), erng);
        best.resize(m - explore);
        std::vector<int> candidates;
        for (int id = 0; id < static_cast<int>(n); ++id) {
            if (std::find(best.begin(), best.end(), id) == best.end()) {
                candidates.push_back(id);
            }
        }
        std::shuffle(candidates.begin(), candidates.end(), erng);
        best.insert(best.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(explore));
    }
    std::sort(best.begin(), best.end());
    return best;
}

} // namespace fedcome
