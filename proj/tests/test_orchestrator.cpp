#include "doctest.h"

#include "fedcome/data.hpp"
#include "fedcome/error.hpp"
#include "fedcome/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

using namespace fedcome;

namespace {

const MlpSpec kSpec{4, {6}, 3, Activation::tanh};

std::vector<ClientDataset> clients(std::size_t n, std::size_t classes_per_client, std::uint64_t seed = 0) {
    const Batch full = synth_dataset(3, 40, 4, 3.0, seed);
    return pathological_partition(full, {n, classes_per_client, seed});
}

// Every client holds the same samples, so all gradients agree in direction.
std::vector<ClientDataset> identical_clients(std::size_t n) {
    const auto base = clients(1, 3);
    std::vector<ClientDataset> out(n, base[0]);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].client_id = static_cast<int>(i);
    }
    return out;
}

FederationConfig config(Method m, std::size_t rounds) {
    FederationConfig cfg;
    cfg.method = m;
    cfg.rounds = rounds;
    cfg.local_epochs = 2;
    cfg.batch_size = 10;
    cfg.eta = 0.1;
    cfg.seed = 5;
    return cfg;
}

void same_records(const std::vector<RoundRecord>& a, const std::vector<RoundRecord>& b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].round == b[t].round);
        CHECK(a[t].selected == b[t].selected);
        CHECK(a[t].per_client_train_loss == b[t].per_client_train_loss);
        CHECK(a[t].per_client_test_acc == b[t].per_client_test_acc);
        CHECK(a[t].weighted_acc == b[t].weighted_acc);
        CHECK(a[t].max_violation == b[t].max_violation);
        CHECK(a[t].mean_drift == b[t].mean_drift);
        CHECK(a[t].qp_fallbacks == b[t].qp_fallbacks);
    }
}

} // namespace

TEST_SUITE("orchestrator") {

TEST_CASE("method and sampler names") {
    for (Method m : {Method::fedcome, Method::fedavg, Method::fedsgd, Method::fedcome_sgd}) {
        CHECK(parse_method(to_string(m)) == m);
    }
    CHECK(parse_sampler_kind("random") == SamplerKind::random);
    CHECK_THROWS_AS(parse_method("fedprox"), ConfigError);
    CHECK(uses_consensus(Method::fedcome_sgd));
    CHECK_FALSE(uses_consensus(Method::fedavg));
    CHECK(single_step(Method::fedsgd));
    CHECK_FALSE(single_step(Method::fedcome));
}

TEST_CASE("local training with zero step size returns a zero pseudo-gradient") {
    const Mlp model(kSpec);
    const auto cl = clients(3, 1);
    const ParamVector theta = model.init_params(1);
    const LocalResult r = local_train(model, theta, cl[0], 3, 7, 0.0, 0.0, 9);
    CHECK(r.pseudo_grad == Vector(theta.size()));
    CHECK(r.final_loss == doctest::Approx(model.loss(theta, cl[0].train)));
}

TEST_CASE("one full-batch epoch is a single gradient step") {
    const Mlp model(kSpec);
    const auto cl = clients(3, 2);
    const ParamVector theta = model.init_params(2);
    const double eta = 0.3;
    const double wd = 0.01;
    const LocalResult r = local_train(model, theta, cl[1], 1, 0, eta, wd, 4);
    const ParamVector g = model.grad(theta, cl[1].train);
    for (std::size_t k = 0; k < theta.size(); ++k) {
        CHECK(r.pseudo_grad[k] == doctest::Approx(eta * (g[k] + wd * theta[k])).epsilon(1e-9).scale(1e-12));
    }
}

TEST_CASE("local training is deterministic and rejects empty data") {
    const Mlp model(kSpec);
    const auto cl = clients(3, 1);
    const ParamVector theta = model.init_params(3);
    const LocalResult a = local_train(model, theta, cl[2], 2, 5, 0.1, 1e-3, 77);
    const LocalResult b = local_train(model, theta, cl[2], 2, 5, 0.1, 1e-3, 77);
    CHECK(a.pseudo_grad == b.pseudo_grad);
    CHECK(a.final_loss == b.final_loss);
    ClientDataset empty = cl[0];
    empty.train = Batch{Matrix(0, 4), {}};
    CHECK_THROWS_AS(local_train(model, theta, empty, 1, 5, 0.1, 0.0, 0), ConfigError);
}

TEST_CASE("local step count") {
    CHECK(local_step_count(10, 2, 3) == 8);
    CHECK(local_step_count(10, 2, 0) == 2);
    CHECK(local_step_count(10, 1, 50) == 1);
    CHECK(local_step_count(9, 3, 3) == 9);
}

TEST_CASE("weighted accuracy") {
    const std::vector<double> accs{1.0, 0.0};
    const std::vector<std::size_t> skewed{3, 1};
    const std::vector<std::size_t> equal{5, 5};
    const std::vector<std::size_t> zero{0, 5};
    CHECK(weighted_accuracy(accs, skewed) == 0.75);
    CHECK(weighted_accuracy(accs, equal) == 0.5);
    CHECK_THROWS_AS(weighted_accuracy(accs, zero), ConfigError);
}

TEST_CASE("evaluation falls back to the training split") {
    auto cl = clients(2, 2);
    CHECK(&evaluation_set(cl[0]) == &cl[0].test);
    cl[0].test = Batch{Matrix(0, 4), {}};
    CHECK(&evaluation_set(cl[0]) == &cl[0].train);
}

TEST_CASE("configuration validation names the field") {
    FederationConfig cfg = config(Method::fedcome, 1);
    cfg.eta = -1.0;
    try {
        cfg.validate(3);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("η") != std::string::npos);
    }
    cfg = config(Method::fedcome, 1);
    cfg.participation = {false, 4, SamplerKind::anneal};
    CHECK_THROWS_AS(cfg.validate(3), ConfigError);
    cfg.participation = {false, 0, SamplerKind::anneal};
    CHECK_THROWS_AS(cfg.validate(3), ConfigError);
    cfg = config(Method::fedcome, 1);
    cfg.lr_decay = 0.0;
    CHECK_THROWS_AS(cfg.validate(3), ConfigError);
}

TEST_CASE("zero rounds produce no records") {
    CHECK(run_experiment(config(Method::fedcome, 0), kSpec, clients(3, 1)).empty());
}

TEST_CASE("reruns are identical") {
    for (Method m : {Method::fedcome, Method::fedavg, Method::fedsgd, Method::fedcome_sgd}) {
        FederationConfig cfg = config(m, 3);
        cfg.participation = {false, 2, SamplerKind::anneal};
        const auto cl = clients(4, 1);
        same_records(run_experiment(cfg, kSpec, cl), run_experiment(cfg, kSpec, cl));
    }
}

TEST_CASE("records cover every client and full participation selects everyone") {
    const auto recs = run_experiment(config(Method::fedcome, 3), kSpec, clients(5, 1));
    REQUIRE(recs.size() == 3);
    for (std::size_t t = 0; t < recs.size(); ++t) {
        CHECK(recs[t].round == t + 1);
        CHECK(recs[t].selected == std::vector<int>{0, 1, 2, 3, 4});
        CHECK(recs[t].per_client_train_loss.size() == 5);
        CHECK(recs[t].per_client_test_acc.size() == 5);
        CHECK(recs[t].qp_fallbacks == 0);
        CHECK(recs[t].max_violation <= 0.0);
    }
}

TEST_CASE("consensus methods leave no conflict; baselines report raw conflicts") {
    const auto cl = clients(3, 1);
    for (const auto& r : run_experiment(config(Method::fedcome, 4), kSpec, cl)) {
        CHECK(r.max_violation <= 0.0);
        CHECK(r.max_violation > -1e-6);
    }
    bool conflict = false;
    for (const auto& r : run_experiment(config(Method::fedavg, 4), kSpec, cl)) {
        conflict = conflict || r.max_violation < -1e-6;
        CHECK(r.mean_drift == 0.0);
    }
    CHECK(conflict);
}

TEST_CASE("consensual clients: consensus SGD matches plain SGD exactly") {
    const auto cl = identical_clients(3);
    Federation a(config(Method::fedsgd, 5), kSpec, cl);
    Federation b(config(Method::fedcome_sgd, 5), kSpec, cl);
    for (int t = 0; t < 5; ++t) {
        const RoundRecord ra = a.run_round();
        const RoundRecord rb = b.run_round();
        CHECK(rb.max_violation == 0.0);
        CHECK(rb.mean_drift == 0.0);
        CHECK(a.params() == b.params());
        CHECK(ra.per_client_train_loss == rb.per_client_train_loss);
    }
}

TEST_CASE("FedAvg with equal client sizes matches the uniform mean") {
    FederationConfig avg = config(Method::fedavg, 3);
    avg.local_epochs = 1;
    avg.batch_size = 0;
    const auto cl = identical_clients(3);
    Federation a(avg, kSpec, cl);
    Federation s(config(Method::fedsgd, 3), kSpec, cl);
    for (int t = 0; t < 3; ++t) {
        a.run_round();
        s.run_round();
    }
    for (std::size_t k = 0; k < a.params().size(); ++k) {
        CHECK(a.params()[k] == doctest::Approx(s.params()[k]).epsilon(1e-12).scale(1e-12));
    }
}

TEST_CASE("the learning rate decays once per round") {
    FederationConfig cfg = config(Method::fedavg, 2);
    cfg.lr_decay = 0.5;
    Federation f(cfg, kSpec, clients(2, 2));
    CHECK(f.current_eta() == 0.1);
    f.run_round();
    CHECK(f.current_eta() == 0.05);
    CHECK(f.rounds_done() == 1);
}

TEST_CASE("unselected clients do not influence the round") {
    FederationConfig cfg = config(Method::fedcome, 1);
    cfg.participation = {false, 2, SamplerKind::random};
    const auto cl = clients(4, 1);
    const std::vector<int> picked = random_select(4, 2, cfg.seed, 1);
    std::size_t outsider = 0;
    while (std::find(picked.begin(), picked.end(), static_cast<int>(outsider)) != picked.end()) {
        ++outsider;
    }
    Federation a(cfg, kSpec, cl);
    Federation b(cfg, kSpec, cl);
    ClientDataset swapped = cl[(outsider + 1) % 4];
    swapped.client_id = static_cast<int>(outsider);
    b.replace_client(outsider, swapped);
    const RoundRecord ra = a.run_round();
    const RoundRecord rb = b.run_round();
    CHECK(ra.selected == picked);
    CHECK(rb.selected == picked);
    CHECK(a.params() == b.params());
}

TEST_CASE("partial participation updates similarities only among selected clients") {
    FederationConfig cfg = config(Method::fedcome, 1);
    cfg.participation = {false, 2, SamplerKind::random};
    Federation f(cfg, kSpec, clients(4, 1));
    const RoundRecord r = f.run_round();
    const auto& s = f.similarity();
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j) {
            const bool in = std::find(r.selected.begin(), r.selected.end(), static_cast<int>(i)) != r.selected.end() &&
                            std::find(r.selected.begin(), r.selected.end(), static_cast<int>(j)) != r.selected.end();
            if (!in) {
                CHECK(s(i, j) == 0.0);
            }
        }
    }
}

}
