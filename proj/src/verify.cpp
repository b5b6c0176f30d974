#include "fedcome/verify.hpp"

#include "fedcome/consensus.hpp"
#include "fedcome/error.hpp"
#include "fedcome/qpsolver.hpp"
#include "fedcome/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <numeric>

namespace fedcome::verify {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix normal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(r, c) = nd(rng);
        }
    }
    return m;
}

Matrix multiply_transposed_left(const Matrix& b) {
    // b^T b, by explicit triple loop (independent of numerics::gram).
    Matrix q(b.cols(), b.cols());
    for (std::size_t i = 0; i < b.cols(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < b.rows(); ++r) {
                s += b(r, i) * b(r, j);
            }
            q(i, j) = s;
        }
    }
    for (std::size_t i = 0; i < q.rows(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            q(i, j) = q(j, i);
        }
    }
    return q;
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

PropertyResult check_fixture(const std::string& name, const qp::QpProblem& p, const Vector& want_a,
                             const Vector& want_dual) {
    const qp::QpSolution s = qp::solve(p);
    const qp::KktReport kkt = qp::certify_kkt(p, s, 1e-6);
    double err = 0.0;
    for (std::size_t i = 0; i < want_a.size(); ++i) {
        err = std::max(err, std::abs(s.a[i] - want_a[i]));
    }
    for (std::size_t j = 0; j < want_dual.size(); ++j) {
        err = std::max(err, std::abs(s.dual[j] - want_dual[j]));
    }
    const bool ok = s.status == qp::QpStatus::optimal && kkt.passed() && err <= 1e-9;
    return {name, ok, fmt::format("status={} max_err={:.3g}", qp::to_string(s.status), err)};
}

} // namespace

void for_each_subset(std::size_t population, std::size_t subset_size,
                     const std::function<void(const std::vector<int>&)>& visit) {
    if (subset_size > population) {
        return;
    }
    std::vector<int> idx(subset_size);
    std::iota(idx.begin(), idx.end(), 0);
    const auto n = static_cast<int>(population);
    const auto m = static_cast<int>(subset_size);
    while (true) {
        visit(idx);
        int k = m - 1;
        while (k >= 0 && idx[static_cast<std::size_t>(k)] == n - m + k) {
            --k;
        }
        if (k < 0) {
            return;
        }
        ++idx[static_cast<std::size_t>(k)];
        for (int j = k + 1; j < m; ++j) {
            idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
}

double oracle_energy(const Matrix& s, const std::vector<int>& subset) {
    std::vector<int> ids = subset;
    std::sort(ids.begin(), ids.end());
    double h = 0.0;
    for (std::size_t a = 0; a < ids.size(); ++a) {
        for (std::size_t b = a + 1; b < ids.size(); ++b) {
            h += s.flat()[static_cast<std::size_t>(ids[a]) * s.cols() + static_cast<std::size_t>(ids[b])];
        }
    }
    return h;
}

double exhaustive_min_energy(const SimilarityTable& table, std::size_t subset_size) {
    double best = std::numeric_limits<double>::infinity();
    for_each_subset(table.size(), subset_size,
                    [&](const std::vector<int>& p) { best = std::min(best, oracle_energy(table.matrix(), p)); });
    return best;
}

double chi_square_uniform(const std::vector<std::size_t>& counts) {
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    const double expected = total / static_cast<double>(counts.size());
    double stat = 0.0;
    for (std::size_t c : counts) {
        const double d = static_cast<double>(c) - expected;
        stat += d * d / expected;
    }
    return stat;
}

Benchmark synthetic_benchmark(std::size_t num_clients, std::size_t classes_per_client, std::uint64_t seed) {
    Benchmark b;
    b.model.input_dim = 32;
    b.model.hidden_dims = {64};
    b.model.num_classes = 10;
    b.model.activation = Activation::relu;
    const Batch full = synth_dataset(10, 300, 32, 2.5, seed);
    b.clients = pathological_partition(full, {num_clients, classes_per_client, seed});
    return b;
}

ExperimentLog run_logged(const FederationConfig& cfg, const Benchmark& bench) {
    ExperimentLog log;
    log.config_snapshot = {{"method", to_string(cfg.method)}, {"rounds", cfg.rounds}, {"seed", cfg.seed}};
    for (const auto& c : bench.clients) {
        log.client_train_sizes.push_back(c.train.size());
    }
    log.records = run_experiment(cfg, bench.model, bench.clients);
    return log;
}

FederationConfig descent_config(std::size_t rounds) {
    FederationConfig cfg;
    cfg.method = Method::fedcome_sgd;
    cfg.rounds = rounds;
    cfg.eta = 0.01;
    cfg.eta_g = 1.0;
    cfg.lr_decay = 1.0;
    cfg.weight_decay = 0.0;
    cfg.participation.full = true;
    cfg.seed = 0;
    return cfg;
}

SuiteResult qp_suite() {
    SuiteResult out;
    {
        qp::QpProblem p{Matrix::identity(1), Vector{0.0}, Matrix(0, 1), Vector{}};
        out.push_back(check_fixture("fixture: unconstrained 1-d minimum at 0", p, Vector{0.0}, Vector{}));
    }
    {
        qp::QpProblem p{Matrix::identity(2), Vector{-1.0, -1.0}, Matrix{{1.0, 1.0}}, Vector{1.0}};
        PropertyResult r = check_fixture("fixture: a1 + a2 <= 1 gives (0.5, 0.5), lambda 0.5", p, Vector{0.5, 0.5},
                                         Vector{0.5});
        const Vector grid = qp::brute_force_oracle(p, 1.0, 1e-3);
        const double gap = std::max(std::abs(grid[0] - 0.5), std::abs(grid[1] - 0.5));
        r.passed = r.passed && gap <= 2e-3;
        r.detail += fmt::format(" oracle_gap={:.3g}", gap);
        out.push_back(r);
    }
    {
        qp::QpProblem p{Matrix::identity(1), Vector{1.0}, Matrix{{-1.0}}, Vector{0.0}};
        out.push_back(check_fixture("fixture: -a <= 0 active, lambda 1", p, Vector{0.0}, Vector{1.0}));
    }

    const auto t0 = Clock::now();
    std::size_t accepted = 0;
    std::size_t worse_than_oracle = 0;
    std::size_t kkt_failures = 0;
    std::size_t worse_than_zero = 0;
    std::size_t nondeterministic = 0;
    double worst_gap = -std::numeric_limits<double>::infinity();
    double worst_kkt = 0.0;
    for (std::uint64_t k = 0; accepted < 200 && k < 2000; ++k) {
        Rng rng = make_rng(0, Purpose::test_fixture, 1, k);
        const std::size_t m = 1 + accepted % 3;
        const std::size_t p = accepted % 5;
        Matrix b = normal_matrix(m, m, rng);
        if (accepted % 4 == 0) {
            for (std::size_t c = 0; c < m; ++c) {
                b(m - 1, c) = 0.0; // rank-deficient Hessian
            }
        }
        qp::QpProblem prob;
        prob.Q = multiply_transposed_left(b);
        Vector target(m);
        for (auto& v : target) {
            v = uniform(rng, -1.5, 1.5);
        }
        prob.c = Vector(m);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                prob.c[i] -= prob.Q(i, j) * target[j];
            }
        }
        Vector x0(m);
        for (auto& v : x0) {
            v = uniform(rng, -1.0, 1.0);
        }
        prob.A = normal_matrix(p, m, rng);
        prob.h = Vector(p);
        for (std::size_t j = 0; j < p; ++j) {
            double ax = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                ax += prob.A(j, i) * x0[i];
            }
            prob.h[j] = ax + uniform(rng, 0.0, 0.5);
        }

        const qp::QpSolution s = qp::solve(prob);
        if (s.status == qp::QpStatus::optimal && norm_inf(s.a.span()) > 1.8) {
            continue; // optimum outside the oracle's box
        }
        ++accepted;
        const qp::KktReport kkt = qp::certify_kkt(prob, s, 1e-6);
        worst_kkt = std::max({worst_kkt, kkt.stationarity / std::max(1.0, norm_inf(prob.c.span())),
                              kkt.primal_infeasibility, kkt.complementarity});
        if (s.status != qp::QpStatus::optimal || !kkt.passed()) {
            ++kkt_failures;
            continue;
        }
        const double step = m == 1 ? 1e-3 : (m == 2 ? 5e-3 : 2.5e-2);
        const Vector grid = qp::brute_force_oracle(prob, 2.0, step);
        const double gap = prob.objective(s.a.span()) - prob.objective(grid.span());
        worst_gap = std::max(worst_gap, gap);
        if (gap > 1e-3) {
            ++worse_than_oracle;
        }
        bool zero_feasible = true;
        for (std::size_t j = 0; j < p; ++j) {
            zero_feasible = zero_feasible && prob.h[j] >= 0.0;
        }
        if (zero_feasible && prob.objective(s.a.span()) > 1e-12) {
            ++worse_than_zero;
        }
        const qp::QpSolution again = qp::solve(prob);
        if (!(again.a == s.a) || !(again.dual == s.dual)) {
            ++nondeterministic;
        }
    }
    const double secs = seconds_since(t0);
    out.push_back({"200 random problems: KKT residuals <= 1e-6", accepted == 200 && kkt_failures == 0,
                   fmt::format("problems={} failures={} worst={:.3g}", accepted, kkt_failures, worst_kkt)});
    out.push_back({"200 random problems: objective <= grid oracle + 1e-3", accepted == 200 && worse_than_oracle == 0,
                   fmt::format("violations={} worst_gap={:.3g} runtime={:.1f}s", worse_than_oracle, worst_gap, secs)});
    out.push_back({"never worse than a = 0 when feasible", worse_than_zero == 0,
                   fmt::format("violations={}", worse_than_zero)});
    out.push_back({"repeat solves are bitwise identical", nondeterministic == 0,
                   fmt::format("mismatches={}", nondeterministic)});
    out.push_back({"random problems finish within 60 s", secs < 60.0, fmt::format("{:.1f}s", secs)});
    return out;
}

SuiteResult consensus_suite() {
    SuiteResult out;
    {
        const GradientMatrix g = GradientMatrix::from_columns({Vector{1.0, 0.0}, Vector{-1.0, 1.0}}, {0, 1});
        const ConsensusResult r = enforce_consensus(g, 1, 1.0);
        const double err = std::max({std::abs(r.corrected.g(0, 0) - 0.5), std::abs(r.corrected.g(1, 0) - 0.5),
                                     std::abs(r.coefficients(0, 0) - 1.0), std::abs(r.coefficients(1, 0) - 0.5)});
        out.push_back({"fixture: (1,0) against (-1,1) corrects to (0.5, 0.5)", err <= 1e-8,
                       fmt::format("max_err={:.3g}", err)});
    }

    const auto t0 = Clock::now();
    double worst_rel = 0.0;
    double worst_descent = 0.0;
    std::size_t failures = 0;
    std::size_t descent_failures = 0;
    std::size_t perm_failures = 0;
    std::size_t fallbacks = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        Rng rng = make_rng(0, Purpose::test_fixture, 2, k);
        const auto d = static_cast<std::size_t>(2 + rng() % 99);
        const auto m = static_cast<std::size_t>(2 + rng() % 19);
        GradientMatrix g{normal_matrix(d, m, rng), {}};
        g.client_ids.resize(m);
        std::iota(g.client_ids.begin(), g.client_ids.end(), 0);
        const ConsensusResult r = enforce_consensus(g, 1, 1.0);
        fallbacks += r.fallback_count;
        bool ok = true;
        Vector mean(d);
        for (std::size_t i = 0; i < m; ++i) {
            const Vector gi = r.corrected.g.column(i);
            for (std::size_t r2 = 0; r2 < d; ++r2) {
                mean[r2] += gi[r2] / static_cast<double>(m);
            }
            for (std::size_t j = 0; j < m; ++j) {
                const Vector gj = g.g.column(j);
                const double scale = norm2(gi) * norm2(gj);
                const double dt = dot(gi, gj);
                if (scale > 0.0) {
                    worst_rel = std::min(worst_rel, dt / scale);
                }
                ok = ok && dt >= -kConsensusTol * scale;
            }
        }
        failures += ok ? 0 : 1;
        for (std::size_t j = 0; j < m; ++j) {
            const Vector gj = g.g.column(j);
            double bound = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                bound += norm2(r.corrected.g.column(i)) * norm2(gj) / static_cast<double>(m);
            }
            const double dt = dot(gj, mean);
            if (bound > 0.0) {
                worst_descent = std::min(worst_descent, dt / bound);
            }
            if (dt < -kConsensusTol * bound) {
                ++descent_failures;
            }
        }
        std::vector<std::size_t> perm(m);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        GradientMatrix shuffled{Matrix(d, m), g.client_ids};
        for (std::size_t i = 0; i < m; ++i) {
            shuffled.g.set_column(i, r.corrected.g.column(perm[i]).span());
        }
        if (!(aggregate(shuffled) == aggregate(r.corrected))) {
            ++perm_failures;
        }
    }
    const double secs = seconds_since(t0);
    out.push_back({"100 random matrices: corrected_i . g_j >= -1e-6 |corrected_i| |g_j|", failures == 0,
                   fmt::format("failures={} worst_relative={:.3g} fallbacks={}", failures, worst_rel, fallbacks)});
    out.push_back({"g_k . mean(corrected) >= 0 for every k", descent_failures == 0,
                   fmt::format("failures={} worst_relative={:.3g}", descent_failures, worst_descent)});
    out.push_back({"aggregate is invariant to column order", perm_failures == 0,
                   fmt::format("mismatches={}", perm_failures)});
    out.push_back({"random matrices finish within 30 s", secs < 30.0, fmt::format("{:.2f}s", secs)});

    {
        std::size_t bad = 0;
        double worst = 0.0;
        for (std::uint64_t k = 0; k < 20; ++k) {
            Rng rng = make_rng(0, Purpose::test_fixture, 3, k);
            Matrix a = normal_matrix(10, 5, rng);
            for (std::size_t r = 0; r < a.rows(); ++r) {
                for (std::size_t c = 0; c < a.cols(); ++c) {
                    a(r, c) = std::abs(a(r, c));
                }
            }
            const GradientMatrix g{a, {0, 1, 2, 3, 4}};
            const ConsensusResult r = enforce_consensus(g, 1, 1.0);
            for (std::size_t i = 0; i < 5; ++i) {
                const Vector diff = axpy(-1.0, g.g.column(i), r.corrected.g.column(i));
                const double rel = norm2(diff) / norm2(g.g.column(i));
                worst = std::max(worst, rel);
                bad += rel <= 1e-8 ? 0 : 1;
            }
        }
        out.push_back({"consensual inputs are returned unchanged", bad == 0,
                       fmt::format("failures={} worst_relative={:.3g}", bad, worst)});
    }

    {
        std::size_t bad = 0;
        double worst_gap = -std::numeric_limits<double>::infinity();
        for (std::uint64_t k = 0; k < 16; ++k) {
            Rng rng = make_rng(0, Purpose::test_fixture, 4, k);
            const std::size_t m = 2 + k % 2;
            const GradientMatrix g{normal_matrix(4, m, rng), m == 2 ? std::vector<int>{0, 1} : std::vector<int>{0, 1, 2}};
            const ConsensusResult r = enforce_consensus(g, 1, 1.0);
            const Matrix kmat = multiply_transposed_left(g.g);
            for (std::size_t i = 0; i < m; ++i) {
                qp::QpProblem p;
                p.Q = kmat;
                p.c = Vector(m);
                p.A = Matrix(m, m);
                p.h = Vector(m);
                for (std::size_t a = 0; a < m; ++a) {
                    p.c[a] = -kmat(a, i);
                    for (std::size_t b = 0; b < m; ++b) {
                        p.A(a, b) = -kmat(a, b);
                    }
                }
                const Vector grid = qp::brute_force_oracle(p, 3.0, m == 2 ? 5e-3 : 5e-2);
                const Vector ai = r.coefficients.column(i);
                const double gap = p.objective(ai.span()) - p.objective(grid.span());
                worst_gap = std::max(worst_gap, gap);
                bad += gap <= 1e-3 ? 0 : 1;
            }
        }
        out.push_back({"M <= 3: QP objective within 1e-3 of the grid oracle", bad == 0,
                       fmt::format("failures={} worst_gap={:.3g}", bad, worst_gap)});
    }
    return out;
}

SuiteResult descent_suite() {
    SuiteResult out;
    const auto t0 = Clock::now();
    const Benchmark bench = synthetic_benchmark(10, 1, 0);
    const ExperimentLog log = run_logged(descent_config(), bench);
    const MonotonicityReport rep = monotonicity_report(log, 1e-6);
    double worst_rise = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 1; t < log.records.size(); ++t) {
        for (std::size_t c = 0; c < log.num_clients(); ++c) {
            worst_rise = std::max(worst_rise, log.records[t].per_client_train_loss[c] -
                                                  log.records[t - 1].per_client_train_loss[c]);
        }
    }
    const double secs = seconds_since(t0);
    const double first = global_loss(log, log.records.front());
    const double last = global_loss(log, log.records.back());
    out.push_back({"every client's training loss is non-increasing (slack 1e-6)", rep.total() == 0,
                   fmt::format("violations={} largest_rise={:.3g}", rep.total(), worst_rise)});
    out.push_back({"global training loss is non-increasing (slack 1e-6)", rep.global == 0,
                   fmt::format("violations={} loss {:.4f} -> {:.4f}", rep.global, first, last)});
    out.push_back({"200 rounds finish within 5 min", secs < 300.0, fmt::format("{:.1f}s", secs)});
    return out;
}

SuiteResult sampler_suite() {
    SuiteResult out;
    {
        std::size_t mismatches = 0;
        std::size_t subsets = 0;
        for (std::uint64_t n = 2; n <= 10; ++n) {
            Rng rng = make_rng(0, Purpose::test_fixture, 5, n);
            SimilarityTable table(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    table.set(i, j, uniform(rng, -1.0, 1.0));
                }
            }
            for (std::size_t m = 1; m <= std::min<std::size_t>(4, n); ++m) {
                for_each_subset(n, m, [&](const std::vector<int>& p) {
                    ++subsets;
                    mismatches += subset_energy(table, p) == oracle_energy(table.matrix(), p) ? 0 : 1;
                });
            }
        }
        out.push_back({"subset_energy equals the exhaustive oracle on every subset", mismatches == 0,
                       fmt::format("subsets={} mismatches={}", subsets, mismatches)});
    }
    {
        SimilarityTable table(6);
        for (std::size_t i = 0; i < 6; ++i) {
            for (std::size_t j = i + 1; j < 6; ++j) {
                table.set(i, j, 0.5);
            }
        }
        table.set(0, 5, -1.0);
        SamplerConfig cfg;
        cfg.subset_size = 2;
        cfg.mu = 1.0;
        const auto got = anneal_select(table, cfg, 0);
        out.push_back({"fixture: single negative pair (0, 5) is selected", got == std::vector<int>{0, 5},
                       fmt::format("got {{{}}}", fmt::join(got, ","))});
    }
    {
        struct Case {
            std::size_t n, m;
        };
        const Case cases[] = {{10, 4}, {10, 3}, {8, 4}, {9, 2}};
        bool all_ok = true;
        bool distinct = true;
        std::string detail;
        for (std::size_t c = 0; c < std::size(cases); ++c) {
            const auto [n, m] = cases[c];
            Rng rng = make_rng(0, Purpose::test_fixture, 6, c);
            SimilarityTable table(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    table.set(i, j, uniform(rng, -1.0, 1.0));
                }
            }
            const double best = exhaustive_min_energy(table, m);
            std::size_t hits = 0;
            for (std::uint64_t seed = 0; seed < 100; ++seed) {
                SamplerConfig cfg;
                cfg.subset_size = m;
                cfg.mu = 1.0;
                cfg.seed = seed;
                const auto got = anneal_select(table, cfg, 0);
                std::vector<int> uniq = got;
                uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
                distinct = distinct && got.size() == m && uniq.size() == m;
                hits += oracle_energy(table.matrix(), got) <= best + 1e-9 ? 1 : 0;
            }
            all_ok = all_ok && hits >= 95;
            detail += fmt::format("{}N={},M={}: {}/100", detail.empty() ? "" : "; ", n, m, hits);
        }
        out.push_back({"mu = 1 reaches the exhaustive minimum in >= 95/100 runs", all_ok, detail});
        out.push_back({"selections have exactly M distinct ids", distinct, ""});
    }
    {
        SimilarityTable table(6);
        Rng rng = make_rng(0, Purpose::test_fixture, 7);
        for (std::size_t i = 0; i < 6; ++i) {
            for (std::size_t j = i + 1; j < 6; ++j) {
                table.set(i, j, uniform(rng, -1.0, 1.0));
            }
        }
        SamplerConfig cfg;
        cfg.subset_size = 2;
        cfg.mu = 0.0;
        cfg.seed = 11;
        std::vector<std::size_t> counts(15, 0);
        for (std::uint64_t round = 0; round < 10000; ++round) {
            const auto got = anneal_select(table, cfg, round);
            // Lexicographic rank of {a, b} among 2-subsets of 6.
            const int a = got[0];
            const int b = got[1];
            const int rank = a * (11 - a) / 2 + (b - a - 1);
            ++counts[static_cast<std::size_t>(rank)];
        }
        const double stat = chi_square_uniform(counts);
        out.push_back({"mu = 0 is uniform over 2-subsets of 6 (chi-square, p > 0.01)", stat < kChiSquare14At1Percent,
                       fmt::format("statistic={:.2f} critical={}", stat, kChiSquare14At1Percent)});
    }
    return out;
}

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"qp", "consensus", "descent", "sampler"};
    return names;
}

SuiteResult run_suite(const std::string& name) {
    if (name == "qp") return qp_suite();
    if (name == "consensus") return consensus_suite();
    if (name == "descent") return descent_suite();
    if (name == "sampler") return sampler_suite();
    throw ConfigError(fmt::format("unknown suite '{}' (expected qp, consensus, descent or sampler)", name));
}

} // namespace fedcome::verify
