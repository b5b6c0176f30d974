// Acceptance suite: one PASS/FAIL line per criterion, exit 0 iff all pass.

#include "fedcome/consensus.hpp"
#include "fedcome/manifest.hpp"
#include "fedcome/metrics.hpp"
#include "fedcome/model.hpp"
#include "fedcome/orchestrator.hpp"
#include "fedcome/rng.hpp"
#include "fedcome/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

using namespace fedcome;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool passed = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
    std::cout << fmt::format("[{}] criterion {}: {} -- {}\n", o.passed ? "PASS" : "FAIL", id, title, o.detail)
              << std::flush;
    failures += o.passed ? 0 : 1;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome from_suite(const verify::SuiteResult& suite, std::initializer_list<std::size_t> picks) {
    Outcome o{true, ""};
    for (std::size_t i : picks) {
        const auto& r = suite.at(i);
        o.passed = o.passed && r.passed;
        o.detail += fmt::format("{}{}: {} ({})", o.detail.empty() ? "" : "; ", r.name, r.passed ? "ok" : "FAILED",
                                r.detail);
    }
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// The 10-class synthetic benchmark as a manifest: 20 clients, paper
// hyperparameters, T = 150.
nlohmann::json benchmark_manifest(const std::string& method, std::uint64_t seed, const fs::path& out,
                                  std::optional<std::string> sampler) {
    nlohmann::json m = {
        {"dataset", {{"synthetic", {{"num_classes", 10}, {"samples_per_class", 300}, {"dim", 32}, {"separation", 2.5}}}}},
        {"partition", {{"num_clients", 20}, {"classes_per_client", 2}}},
        {"model", {{"hidden", {64}}, {"activation", "relu"}}},
        {"federation",
         {{"method", method},
          {"rounds", 150},
          {"local_epochs", 1},
          {"batch_size", 50},
          {"eta", 0.05},
          {"lr_decay", 0.998},
          {"weight_decay", 1e-3},
          {"seed", seed}}},
        {"output_dir", out.string()}};
    if (sampler) {
        m["federation"]["participation"] = {{"mode", "partial"}, {"ratio", 0.2}, {"sampler", *sampler}};
    }
    return m;
}

ExperimentLog run_manifest(const nlohmann::json& doc) { return execute(parse_manifest(doc)); }

Outcome criterion_identity() {
    // Clients drawing from the same distribution produce pairwise
    // consensual gradients; the precondition is checked every round.
    const Batch full = synth_dataset(3, 60, 6, 3.0, 42);
    MlpSpec spec{6, {8}, 3, Activation::tanh};
    Outcome o{true, ""};
    for (std::size_t n_clients : {2u, 3u, 5u}) {
        std::vector<ClientDataset> clients(n_clients);
        for (std::size_t i = 0; i < n_clients; ++i) {
            clients[i].client_id = static_cast<int>(i);
            std::vector<std::size_t> rows;
            for (std::size_t r = i; r < full.size(); r += n_clients) {
                rows.push_back(r);
            }
            clients[i].train = full.select(rows);
            clients[i].train_indices = rows;
        }
        FederationConfig cfg;
        cfg.rounds = 60;
        cfg.eta = 0.05;
        cfg.weight_decay = 0.0;
        cfg.seed = 7;
        cfg.method = Method::fedsgd;
        Federation base(cfg, spec, clients);
        cfg.method = Method::fedcome_sgd;
        Federation cons(cfg, spec, clients);
        double worst = 0.0;
        std::size_t nonconsensual_rounds = 0;
        for (std::size_t t = 0; t < cfg.rounds; ++t) {
            const RoundRecord rb = base.run_round();
            cons.run_round();
            nonconsensual_rounds += rb.max_violation < 0.0 ? 1 : 0;
            for (std::size_t k = 0; k < base.params().size(); ++k) {
                worst = std::max(worst, std::abs(base.params()[k] - cons.params()[k]));
            }
        }
        const bool ok = nonconsensual_rounds == 0 && worst <= 1e-8;
        o.passed = o.passed && ok;
        o.detail += fmt::format("{}N={}: max |diff|={:.3g}, non-consensual rounds={}", o.detail.empty() ? "" : "; ",
                                n_clients, worst, nonconsensual_rounds);
    }
    return o;
}

Outcome criterion_gradients() {
    std::size_t checked = 0;
    double worst = 0.0;
    for (std::uint64_t cfg_id = 0; cfg_id < 10; ++cfg_id) {
        Rng rng = make_rng(2024, Purpose::test_fixture, 8, cfg_id);
        MlpSpec spec;
        spec.input_dim = 2 + rng() % 9;
        const std::size_t depth = rng() % 3;
        for (std::size_t l = 0; l < depth; ++l) {
            spec.hidden_dims.push_back(2 + rng() % 12);
        }
        spec.num_classes = 2 + rng() % 5;
        spec.activation = cfg_id % 2 == 0 ? Activation::tanh : Activation::relu;
        const Mlp mlp(spec);
        ParamVector theta = mlp.init_params(cfg_id);
        std::normal_distribution<double> nd(0.0, 0.3);
        for (double& v : theta) {
            v += nd(rng);
        }
        Batch batch;
        const std::size_t n = 3 + rng() % 10;
        batch.features = Matrix(n, spec.input_dim);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < spec.input_dim; ++c) {
                batch.features(r, c) = nd(rng) * 3.0;
            }
            batch.labels.push_back(static_cast<int>(rng() % spec.num_classes));
        }
        const ParamVector g = mlp.grad(theta, batch);
        const double eps = 1e-5;
        for (int s = 0; s < 50; ++s) {
            const std::size_t k = rng() % theta.size();
            ParamVector plus = theta;
            ParamVector minus = theta;
            plus[k] += eps;
            minus[k] -= eps;
            const double fd = (mlp.loss(plus, batch) - mlp.loss(minus, batch)) / (2.0 * eps);
            const double rel = std::abs(fd - g[k]) / std::max({1.0, std::abs(fd), std::abs(g[k])});
            worst = std::max(worst, rel);
            ++checked;
        }
    }
    return {worst <= 1e-5, fmt::format("{} coordinates over 10 configurations, worst relative error {:.3g}", checked,
                                       worst)};
}

} // namespace

int main() {
    const auto start = Clock::now();
    const fs::path work = fs::temp_directory_path() / "fedcome_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    const auto consensus = verify::consensus_suite();
    report(1, "consensus invariant on 100 random gradient matrices", from_suite(consensus, {1, 4}));

    const auto qp = verify::qp_suite();
    report(2, "QP solver against grid oracle and KKT, hand fixtures", from_suite(qp, {0, 1, 2, 3, 4, 7}));

    const auto descent = verify::descent_suite();
    report(3, "per-client and global loss monotonicity, single-step method", from_suite(descent, {0, 1, 2}));

    report(4, "single-step method equals the baseline on consensual inputs", criterion_identity());

    {
        const auto t0 = Clock::now();
        double sum_cons = 0.0;
        double sum_avg = 0.0;
        std::string per_seed;
        for (std::uint64_t seed : {0u, 1u, 2u}) {
            const auto a = run_manifest(benchmark_manifest("fedcome", seed, work / fmt::format("c5_fedcome_{}", seed),
                                                           std::nullopt));
            const auto b = run_manifest(benchmark_manifest("fedavg", seed, work / fmt::format("c5_fedavg_{}", seed),
                                                           std::nullopt));
            const double ca = a.records.back().weighted_acc;
            const double cb = b.records.back().weighted_acc;
            sum_cons += ca;
            sum_avg += cb;
            per_seed += fmt::format(" seed{}={:.4f}/{:.4f}", seed, ca, cb);
        }
        const double gain = (sum_cons - sum_avg) / 3.0;
        const double secs = seconds_since(t0);
        report(5, "heterogeneity benefit over FedAvg (>= 2 points, 3 seeds)",
               {gain >= 0.02 && secs < 600.0,
                fmt::format("mean gain {:+.2f} points (fedcome/fedavg:{}), {:.0f}s", gain * 100.0, per_seed, secs)});
    }

    const auto sampler = verify::sampler_suite();
    report(6, "annealing optimality and exact energy at small scale", from_suite(sampler, {0, 2, 3}));

    {
        const auto t0 = Clock::now();
        double acc_anneal = 0.0;
        double acc_random = 0.0;
        std::size_t up_anneal = 0;
        std::size_t up_random = 0;
        for (std::uint64_t seed : {0u, 1u, 2u}) {
            const auto a = run_manifest(
                benchmark_manifest("fedcome", seed, work / fmt::format("c7_anneal_{}", seed), "anneal"));
            const auto r = run_manifest(
                benchmark_manifest("fedcome", seed, work / fmt::format("c7_random_{}", seed), "random"));
            acc_anneal += a.records.back().weighted_acc / 3.0;
            acc_random += r.records.back().weighted_acc / 3.0;
            up_anneal += unselected_upticks(a, 1e-4);
            up_random += unselected_upticks(r, 1e-4);
        }
        const bool acc_ok = acc_anneal >= acc_random - 0.005;
        const bool smooth_ok = static_cast<double>(up_anneal) <= 0.2 * static_cast<double>(up_random);
        report(7, "annealing sampler vs random at 20% participation",
               {acc_ok && smooth_ok,
                fmt::format("accuracy {:.4f} vs {:.4f} ({}); unselected upticks {} vs {} ({}); {:.0f}s", acc_anneal,
                            acc_random, acc_ok ? "ok" : "FAILED", up_anneal, up_random, smooth_ok ? "ok" : "FAILED",
                            seconds_since(t0))});
    }

    report(8, "finite-difference gradient agreement", criterion_gradients());

    {
        const auto doc = benchmark_manifest("fedcome", 0, work / "c9_rerun", std::nullopt);
        run_manifest(doc);
        const std::string first = slurp(work / "c5_fedcome_0" / "metrics.csv");
        const std::string second = slurp(work / "c9_rerun" / "metrics.csv");
        report(9, "identical manifests give byte-identical CSV",
               {!first.empty() && first == second, fmt::format("{} bytes, {}", first.size(),
                                                               first == second ? "identical" : "DIFFERENT")});
    }

    std::cout << fmt::format("{} of 9 criteria failed ({:.0f}s)\n", failures, seconds_since(start));
    return failures == 0 ? 0 : 1;
}
