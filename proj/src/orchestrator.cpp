#include "fedcome/orchestrator.hpp"

#include "fedcome/consensus.hpp"
#include "fedcome/error.hpp"
#include "fedcome/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

namespace fedcome {

Method parse_method(const std::string& name) {
    if (name == "fedcome") return Method::fedcome;
    if (name == "fedavg") return Method::fedavg;
    if (name == "fedsgd") return Method::fedsgd;
    if (name == "fedcome_sgd") return Method::fedcome_sgd;
    throw ConfigError(fmt::format("unknown method '{}' (expected fedcome, fedavg, fedsgd or fedcome_sgd)", name));
}

std::string to_string(Method m) {
    switch (m) {
    case Method::fedcome: return "fedcome";
    case Method::fedavg: return "fedavg";
    case Method::fedsgd: return "fedsgd";
    case Method::fedcome_sgd: return "fedcome_sgd";
    }
    return "?";
}

SamplerKind parse_sampler_kind(const std::string& name) {
    if (name == "anneal") return SamplerKind::anneal;
    if (name == "random") return SamplerKind::random;
    throw ConfigError(fmt::format("unknown sampler '{}' (expected anneal or random)", name));
}

std::string to_string(SamplerKind k) { return k == SamplerKind::anneal ? "anneal" : "random"; }

bool uses_consensus(Method m) noexcept { return m == Method::fedcome || m == Method::fedcome_sgd; }

bool single_step(Method m) noexcept { return m == Method::fedsgd || m == Method::fedcome_sgd; }

void FederationConfig::validate(std::size_t num_clients) const {
    if (num_clients == 0) {
        throw ConfigError("federation: need at least one client");
    }
    if (local_epochs < 1) {
        throw ConfigError("federation.local_epochs: must be at least 1");
    }
    if (!(eta > 0.0) || !std::isfinite(eta)) {
        throw ConfigError(fmt::format("federation.eta: η must be positive, got {}", eta));
    }
    if (!(eta_g > 0.0) || !std::isfinite(eta_g)) {
        throw ConfigError(fmt::format("federation.eta_g: η_g must be positive, got {}", eta_g));
    }
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
        throw ConfigError(fmt::format("federation.lr_decay: must lie in (0, 1], got {}", lr_decay));
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw ConfigError(fmt::format("federation.weight_decay: must be nonnegative, got {}", weight_decay));
    }
    if (!participation.full) {
        if (participation.subset_size < 1 || participation.subset_size > num_clients) {
            throw ConfigError(fmt::format("federation.participation.subset_size: must be in [1, {}], got {}",
                                          num_clients, participation.subset_size));
        }
        if (participation.sampler == SamplerKind::anneal) {
            SamplerConfig sc = sampler;
            sc.subset_size = participation.subset_size;
            try {
                sc.validate(num_clients);
            } catch (const ConfigError& e) {
                throw ConfigError(fmt::format("federation.{}", e.what()));
            }
        }
    }
}

std::size_t local_step_count(std::size_t samples, std::size_t epochs, std::size_t batch_size) {
    if (samples == 0) {
        return 0;
    }
    const std::size_t b = (batch_size == 0 || batch_size > samples) ? samples : batch_size;
    return epochs * ((samples + b - 1) / b);
}

LocalResult local_train(const Mlp& model, const ParamVector& theta, const ClientDataset& ds, std::size_t epochs,
                        std::size_t batch_size, double eta, double weight_decay, std::uint64_t seed) {
    const Batch& train = ds.train;
    if (train.empty()) {
        throw ConfigError(fmt::format("client {}: empty training set", ds.client_id));
    }
    if (!(eta >= 0.0) || !(weight_decay >= 0.0)) {
        throw ConfigError("local_train: eta and weight_decay must be nonnegative");
    }
    if (theta.size() != model.param_count()) {
        throw DimensionError(fmt::format("local_train: {} parameters for a model of {}", theta.size(),
                                         model.param_count()));
    }
    const std::size_t n = train.size();
    const std::size_t b = (batch_size == 0 || batch_size > n) ? n : batch_size;

    ParamVector w = theta;
    std::vector<std::size_t> order(n);
    for (std::size_t e = 0; e < epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        if (b < n) {
            Rng rng = make_rng(seed, Purpose::local_shuffle, e);
            std::shuffle(order.begin(), order.end(), rng);
        }
        for (std::size_t start = 0; start < n; start += b) {
            const Batch* batch = &train;
            Batch mini;
            if (b < n) {
                std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                              order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + b)));
                mini = train.select(rows);
                batch = &mini;
            }
            const ParamVector g = model.grad(w, *batch);
            for (std::size_t k = 0; k < w.size(); ++k) {
                w[k] -= eta * (g[k] + weight_decay * w[k]);
            }
        }
    }
    LocalResult out;
    out.pseudo_grad = Vector(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
        out.pseudo_grad[k] = theta[k] - w[k];
    }
    out.final_loss = model.loss(w, train);
    return out;
}

double weighted_accuracy(std::span<const double> accs, std::span<const std::size_t> sizes) {
    if (accs.size() != sizes.size() || accs.empty()) {
        throw DimensionError("weighted_accuracy: need one size per accuracy");
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < accs.size(); ++i) {
        if (sizes[i] == 0) {
            throw ConfigError(fmt::format("weighted_accuracy: client {} has no samples", i));
        }
        num += static_cast<double>(sizes[i]) * accs[i];
        den += static_cast<double>(sizes[i]);
    }
    return num / den;
}

const Batch& evaluation_set(const ClientDataset& ds) { return ds.test.empty() ? ds.train : ds.test; }

Federation::Federation(FederationConfig cfg, const MlpSpec& model, std::vector<ClientDataset> clients)
    : cfg_(std::move(cfg)), model_(model), clients_(std::move(clients)), table_(clients_.size()), eta_(cfg_.eta) {
    cfg_.validate(clients_.size());
    for (const auto& c : clients_) {
        if (c.train.empty()) {
            throw ConfigError(fmt::format("client {}: empty training set", c.client_id));
        }
        if (c.train.dim() != model.input_dim) {
            throw ConfigError(fmt::format("client {}: feature dimension {} but model.input_dim is {}", c.client_id,
                                          c.train.dim(), model.input_dim));
        }
    }
    theta_ = model_.init_params(cfg_.seed);
}

void Federation::replace_client(std::size_t index, ClientDataset ds) {
    if (index >= clients_.size()) {
        throw IndexError(fmt::format("replace_client: index {} outside [0, {})", index, clients_.size()));
    }
    clients_[index] = std::move(ds);
}

std::vector<int> Federation::select(std::uint64_t round) const {
    const std::size_t n = clients_.size();
    const Participation& p = cfg_.participation;
    if (p.full || p.subset_size == n) {
        std::vector<int> all(n);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    if (p.sampler == SamplerKind::random) {
        return random_select(n, p.subset_size, cfg_.seed, round);
    }
    SamplerConfig sc = cfg_.sampler;
    sc.subset_size = p.subset_size;
    sc.seed = cfg_.seed;
    return anneal_select(table_, sc, round);
}

RoundRecord Federation::run_round() {
    const auto started = std::chrono::steady_clock::now();
    const std::uint64_t t = ++round_;
    RoundRecord rec;
    rec.round = t;
    rec.selected = select(t);

    const bool sgd = single_step(cfg_.method);
    const std::size_t epochs = sgd ? 1 : cfg_.local_epochs;
    const std::size_t batch = sgd ? 0 : cfg_.batch_size;

    std::vector<Vector> columns;
    std::vector<std::size_t> sizes;
    std::size_t local_steps = 1;
    for (int id : rec.selected) {
        const ClientDataset& ds = clients_[static_cast<std::size_t>(id)];
        const std::uint64_t stream = mix_seed(cfg_.seed, Purpose::local_shuffle, t, static_cast<std::uint64_t>(id));
        LocalResult lr = local_train(model_, theta_, ds, epochs, batch, eta_, cfg_.weight_decay, stream);
        columns.push_back(std::move(lr.pseudo_grad));
        sizes.push_back(ds.train.size());
        local_steps = std::max(local_steps, local_step_count(ds.train.size(), epochs, batch));
    }
    const GradientMatrix raw = GradientMatrix::from_columns(columns, rec.selected);

    Vector step;
    if (uses_consensus(cfg_.method)) {
        table_.update(rec.selected, raw, cfg_.sampler.alpha);
        const ConsensusResult cons = enforce_consensus(raw, local_steps, eta_);
        step = aggregate(cons.corrected);
        rec.max_violation = cons.max_violation;
        double drift = 0.0;
        for (double d : cons.drift) {
            drift += d;
        }
        rec.mean_drift = drift / static_cast<double>(cons.drift.size());
        rec.qp_fallbacks = cons.fallback_count;
    } else {
        if (cfg_.method == Method::fedavg) {
            const double total = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
            step = Vector(raw.dim());
            for (std::size_t i = 0; i < raw.count(); ++i) {
                const double w = static_cast<double>(sizes[i]) / total;
                for (std::size_t r = 0; r < raw.dim(); ++r) {
                    step[r] += w * raw.g(r, i);
                }
            }
        } else {
            step = aggregate(raw);
        }
        const Matrix k = gram(raw.g);
        for (double v : k.flat()) {
            rec.max_violation = std::min(rec.max_violation, v);
        }
    }
    theta_ = axpy(-cfg_.eta_g, step, theta_);
    require_finite(theta_, "global parameters");
    eta_ *= cfg_.lr_decay;

    const std::size_t n = clients_.size();
    rec.per_client_train_loss = Vector(n);
    rec.per_client_test_acc = Vector(n);
    std::vector<std::size_t> eval_sizes(n);
    for (std::size_t i = 0; i < n; ++i) {
        rec.per_client_train_loss[i] = model_.loss(theta_, clients_[i].train);
        const Batch& eval = evaluation_set(clients_[i]);
        rec.per_client_test_acc[i] = model_.accuracy(theta_, eval);
        eval_sizes[i] = eval.size();
    }
    rec.weighted_acc = weighted_accuracy(rec.per_client_test_acc.span(), eval_sizes);
    rec.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                             started)
                           .count();
    return rec;
}

std::vector<RoundRecord> run_experiment(const FederationConfig& cfg, const MlpSpec& model,
                                        const std::vector<ClientDataset>& clients) {
    Federation fed(cfg, model, clients);
    std::vector<RoundRecord> out;
    out.reserve(cfg.rounds);
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        out.push_back(fed.run_round());
    }
    return out;
}

} // namespace fedcome
