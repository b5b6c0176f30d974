#pragma once

#include "fedcome/data.hpp"
#include "fedcome/model.hpp"
#include "fedcome/sampler.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedcome {

enum class Method {
    fedcome,     // local epochs, consensus, uniform mean
    fedavg,      // local epochs, sample-size weighted mean
    fedsgd,      // one full-batch step, uniform mean
    fedcome_sgd, // one full-batch step, consensus, uniform mean
};

enum class SamplerKind { anneal, random };

Method parse_method(const std::string& name);
std::string to_string(Method m);
SamplerKind parse_sampler_kind(const std::string& name);
std::string to_string(SamplerKind k);

/// True for the methods that run the consensus QP.
bool uses_consensus(Method m) noexcept;
/// True for the methods whose clients take a single full-batch step.
bool single_step(Method m) noexcept;

struct Participation {
    bool full = true;
    std::size_t subset_size = 0; // M, read when !full
    SamplerKind sampler = SamplerKind::anneal;
};

struct FederationConfig {
    Method method = Method::fedcome;
    std::size_t rounds = 1;
    std::size_t local_epochs = 1;
    std::size_t batch_size = 50; // 0 means full batch
    double eta = 0.05;
    double eta_g = 1.0;
    double lr_decay = 0.998;
    double weight_decay = 1e-3;
    Participation participation;
    std::uint64_t seed = 0;
    SamplerConfig sampler; // subset_size and seed are taken from the fields above

    /// Throws ConfigError naming the offending field.
    void validate(std::size_t num_clients) const;
};

struct RoundRecord {
    std::size_t round = 0; // 1-based
    std::vector<int> selected;
    Vector per_client_train_loss; // all N clients, on the post-update model
    Vector per_client_test_acc;
    double weighted_acc = 0.0;
    double max_violation = 0.0; // min(0, min pairwise dot) after correction
    double mean_drift = 0.0;
    std::size_t qp_fallbacks = 0;
    std::int64_t wall_time_ms = 0;
};

struct LocalResult {
    Vector pseudo_grad; // theta_start - theta_end
    double final_loss = 0.0;
};

/// Minibatch SGD with L2 weight decay. `batch_size` 0 (or larger than the
/// training set) means full batch. Epoch e shuffles with a stream derived
/// from (seed, e).
LocalResult local_train(const Mlp& model, const ParamVector& theta, const ClientDataset& ds, std::size_t epochs,
                        std::size_t batch_size, double eta, double weight_decay, std::uint64_t seed);

/// Steps per local pass: epochs * ceil(n / B).
std::size_t local_step_count(std::size_t samples, std::size_t epochs, std::size_t batch_size);

/// sum n_i acc_i / sum n_i. Throws ConfigError on a zero size.
double weighted_accuracy(std::span<const double> accs, std::span<const std::size_t> sizes);

/// The set each client is scored on: its test split, or its training split
/// when it has no test samples.
const Batch& evaluation_set(const ClientDataset& ds);

class Federation {
public:
    Federation(FederationConfig cfg, const MlpSpec& model, std::vector<ClientDataset> clients);

    /// Runs the next round and returns its record.
    RoundRecord run_round();

    const ParamVector& params() const noexcept { return theta_; }
    std::size_t rounds_done() const noexcept { return round_; }
    double current_eta() const noexcept { return eta_; }
    const SimilarityTable& similarity() const noexcept { return table_; }
    const std::vector<ClientDataset>& clients() const noexcept { return clients_; }
    const Mlp& model() const noexcept { return model_; }

    /// Replaces a client's data between rounds.
    void replace_client(std::size_t index, ClientDataset ds);

private:
    std::vector<int> select(std::uint64_t round) const;

    FederationConfig cfg_;
    Mlp model_;
    std::vector<ClientDataset> clients_;
    ParamVector theta_;
    SimilarityTable table_;
    double eta_;
    std::size_t round_ = 0;
};

/// Builds a Federation and runs cfg.rounds rounds.
std::vector<RoundRecord> run_experiment(const FederationConfig& cfg, const MlpSpec& model,
                                        const std::vector<ClientDataset>& clients);

} // namespace fedcome
