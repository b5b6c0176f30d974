#include "fedcome/manifest.hpp"

#include "fedcome/error.hpp"

#include <cmath>
#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <set>

namespace fedcome {

using nlohmann::json;

namespace {

// Typed access to one JSON object that remembers which keys were read, so
// leftovers can be reported as unknown fields.
class Fields {
public:
    Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) {
            throw ConfigError(fmt::format("{}: expected an object", path_));
        }
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() || it->is_null() ? nullptr : &*it;
    }

    double real(const std::string& key, double fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number()) throw ConfigError(fmt::format("{}: expected a number", at(key)));
        return v->get<double>();
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
            throw ConfigError(fmt::format("{}: expected a nonnegative integer", at(key)));
        }
        return v->get<std::uint64_t>();
    }

    std::optional<std::uint64_t> maybe_count(const std::string& key) {
        if (!obj_.contains(key) || obj_.at(key).is_null()) {
            seen_.insert(key);
            return std::nullopt;
        }
        return count(key, 0);
    }

    std::string text(const std::string& key, const std::string& fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_string()) throw ConfigError(fmt::format("{}: expected a string", at(key)));
        return v->get<std::string>();
    }

    Fields object(const std::string& key) {
        static const json empty = json::object();
        const json* v = find(key);
        return Fields(v ? *v : empty, at(key));
    }

    bool has(const std::string& key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

    void finish() const {
        for (const auto& item : obj_.items()) {
            if (!seen_.count(item.key())) {
                throw ConfigError(fmt::format("{}: unknown field", at(item.key())));
            }
        }
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename F>
auto rethrow_as(const std::string& field, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", field, e.what()));
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

} // namespace

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError(fmt::format("--set '{}': expected path=value", assignment));
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) {
        value = raw;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) {
            throw ConfigError(fmt::format("--set '{}': empty path component", assignment));
        }
        if (node->is_null()) {
            *node = json::object();
        }
        if (!node->is_object()) {
            throw ConfigError(fmt::format("--set '{}': '{}' is not an object", assignment, path.substr(0, start - 1)));
        }
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

RunManifest parse_manifest(const json& doc, const std::filesystem::path& base_dir) {
    RunManifest m;
    Fields root(doc, "");

    {
        Fields ds = root.object("dataset");
        const int sources = int(ds.has("synthetic")) + int(ds.has("idx")) + int(ds.has("csv"));
        if (sources != 1) {
            throw ConfigError("dataset: exactly one of synthetic, idx, csv is required");
        }
        if (ds.has("synthetic")) {
            Fields s = ds.object("synthetic");
            SyntheticSource src;
            src.num_classes = static_cast<int>(s.count("num_classes", static_cast<std::uint64_t>(src.num_classes)));
            src.samples_per_class = s.count("samples_per_class", src.samples_per_class);
            src.dim = s.count("dim", src.dim);
            src.separation = s.real("separation", src.separation);
            src.seed = s.maybe_count("seed");
            s.finish();
            if (src.num_classes < 2) throw ConfigError("dataset.synthetic.num_classes: need at least 2");
            if (src.samples_per_class < 1) throw ConfigError("dataset.synthetic.samples_per_class: must be positive");
            if (src.dim < 2) throw ConfigError("dataset.synthetic.dim: need at least 2");
            if (!(src.separation > 0.0)) throw ConfigError("dataset.synthetic.separation: must be positive");
            m.dataset = src;
        } else if (ds.has("idx")) {
            Fields s = ds.object("idx");
            IdxSource src;
            const std::string images = s.text("images", "");
            const std::string labels = s.text("labels", "");
            s.finish();
            if (images.empty()) throw ConfigError("dataset.idx.images: required");
            if (labels.empty()) throw ConfigError("dataset.idx.labels: required");
            src.images = resolve(base_dir, images);
            src.labels = resolve(base_dir, labels);
            m.dataset = src;
        } else {
            Fields s = ds.object("csv");
            CsvSource src;
            const std::string path = s.text("path", "");
            src.label_column = s.text("label_column", src.label_column);
            s.finish();
            if (path.empty()) throw ConfigError("dataset.csv.path: required");
            src.path = resolve(base_dir, path);
            m.dataset = src;
        }
        ds.finish();
    }

    {
        Fields p = root.object("partition");
        m.num_clients = p.count("num_clients", m.num_clients);
        m.classes_per_client = p.count("classes_per_client", m.classes_per_client);
        m.partition_seed = p.maybe_count("seed");
        p.finish();
        if (m.num_clients < 1) throw ConfigError("partition.num_clients: need at least one client");
        if (m.classes_per_client < 1) throw ConfigError("partition.classes_per_client: must be at least 1");
    }

    {
        Fields md = root.object("model");
        if (const json* h = md.find("hidden")) {
            if (!h->is_array()) throw ConfigError("model.hidden: expected an array of widths");
            m.hidden_dims.clear();
            for (const auto& w : *h) {
                if (!w.is_number_integer() || w.get<std::int64_t>() <= 0) {
                    throw ConfigError("model.hidden: widths must be positive integers");
                }
                m.hidden_dims.push_back(w.get<std::size_t>());
            }
        }
        m.activation = rethrow_as("model.activation",
                                  [&] { return parse_activation(md.text("activation", to_string(m.activation))); });
        md.finish();
    }

    {
        Fields f = root.object("federation");
        FederationConfig& c = m.federation;
        c.method = rethrow_as("federation.method", [&] { return parse_method(f.text("method", to_string(c.method))); });
        c.rounds = f.count("rounds", c.rounds);
        c.local_epochs = f.count("local_epochs", c.local_epochs);
        c.batch_size = f.count("batch_size", c.batch_size);
        c.eta = f.real("eta", c.eta);
        c.eta_g = f.real("eta_g", c.eta_g);
        c.lr_decay = f.real("lr_decay", c.lr_decay);
        c.weight_decay = f.real("weight_decay", c.weight_decay);
        c.seed = f.count("seed", c.seed);

        Fields part = f.object("participation");
        const std::string mode = part.text("mode", "full");
        if (mode == "full") {
            c.participation.full = true;
        } else if (mode == "partial") {
            c.participation.full = false;
            if (part.has("ratio") == part.has("subset_size")) {
                throw ConfigError("federation.participation: give exactly one of ratio, subset_size");
            }
            if (part.has("ratio")) {
                const double r = part.real("ratio", 0.0);
                if (!(r > 0.0 && r <= 1.0)) {
                    throw ConfigError(fmt::format("federation.participation.ratio: must lie in (0, 1], got {}", r));
                }
                m.participation_ratio = r;
                c.participation.subset_size = std::max<std::size_t>(
                    1, static_cast<std::size_t>(std::llround(r * static_cast<double>(m.num_clients))));
            } else {
                c.participation.subset_size = part.count("subset_size", 0);
            }
            c.participation.sampler = rethrow_as("federation.participation.sampler", [&] {
                return parse_sampler_kind(part.text("sampler", to_string(c.participation.sampler)));
            });
        } else {
            throw ConfigError(fmt::format("federation.participation.mode: expected full or partial, got '{}'", mode));
        }
        part.finish();

        Fields s = f.object("sampler");
        c.sampler.mu = s.real("mu", c.sampler.mu);
        c.sampler.alpha = s.real("alpha", c.sampler.alpha);
        c.sampler.sa_iters = s.count("sa_iters", c.sampler.sa_iters);
        c.sampler.t0 = s.real("t0", c.sampler.t0);
        c.sampler.temp_decay = s.real("temp_decay", c.sampler.temp_decay);
        s.finish();
        f.finish();

        if (!(c.sampler.mu >= 0.0 && c.sampler.mu <= 1.0)) {
            throw ConfigError(fmt::format("federation.sampler.mu: must lie in [0, 1], got {}", c.sampler.mu));
        }
        if (!(c.sampler.alpha >= 0.0 && c.sampler.alpha <= 1.0)) {
            throw ConfigError(fmt::format("federation.sampler.alpha: must lie in [0, 1], got {}", c.sampler.alpha));
        }
        if (!(c.sampler.t0 > 0.0)) {
            throw ConfigError("federation.sampler.t0: must be positive");
        }
        if (!(c.sampler.temp_decay > 0.0 && c.sampler.temp_decay < 1.0)) {
            throw ConfigError("federation.sampler.temp_decay: must lie in (0, 1)");
        }
        c.validate(m.num_clients);
    }

    m.output_dir = root.text("output_dir", m.output_dir.string());
    root.finish();
    return m;
}

json load_manifest_json(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("{}: cannot open manifest", path.string()));
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw ConfigError(fmt::format("{}: not valid JSON", path.string()));
    }
    for (const auto& o : overrides) {
        apply_override(doc, o);
    }
    if (const char* env = std::getenv("FEDCOME_SEED"); env && *env) {
        const std::string s(env);
        std::size_t used = 0;
        unsigned long long seed = 0;
        try {
            seed = std::stoull(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size() || s.front() == '-') {
            throw ConfigError(fmt::format("FEDCOME_SEED: expected a nonnegative integer, got '{}'", s));
        }
        apply_override(doc, fmt::format("federation.seed={}", seed));
    }
    return doc;
}

RunManifest load_manifest(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    return parse_manifest(load_manifest_json(path, overrides), path.parent_path());
}

json to_json(const RunManifest& m) {
    const FederationConfig& c = m.federation;
    json j;
    std::visit(
        [&](const auto& src) {
            using T = std::decay_t<decltype(src)>;
            if constexpr (std::is_same_v<T, SyntheticSource>) {
                j["dataset"]["synthetic"] = {{"num_classes", src.num_classes},
                                             {"samples_per_class", src.samples_per_class},
                                             {"dim", src.dim},
                                             {"separation", src.separation},
                                             {"seed", src.seed.value_or(c.seed)}};
            } else if constexpr (std::is_same_v<T, IdxSource>) {
                j["dataset"]["idx"] = {{"images", src.images.string()}, {"labels", src.labels.string()}};
            } else {
                j["dataset"]["csv"] = {{"path", src.path.string()}, {"label_column", src.label_column}};
            }
        },
        m.dataset);
    j["partition"] = {{"num_clients", m.num_clients},
                      {"classes_per_client", m.classes_per_client},
                      {"seed", m.partition_seed.value_or(c.seed)}};
    j["model"] = {{"hidden", m.hidden_dims}, {"activation", to_string(m.activation)}};
    json part;
    if (c.participation.full) {
        part = {{"mode", "full"}};
    } else {
        part = {{"mode", "partial"}, {"sampler", to_string(c.participation.sampler)}};
        if (m.participation_ratio) {
            part["ratio"] = *m.participation_ratio;
        } else {
            part["subset_size"] = c.participation.subset_size;
        }
    }
    j["federation"] = {{"method", to_string(c.method)},
                       {"rounds", c.rounds},
                       {"local_epochs", c.local_epochs},
                       {"batch_size", c.batch_size},
                       {"eta", c.eta},
                       {"eta_g", c.eta_g},
                       {"lr_decay", c.lr_decay},
                       {"weight_decay", c.weight_decay},
                       {"seed", c.seed},
                       {"participation", part},
                       {"sampler",
                        {{"mu", c.sampler.mu},
                         {"alpha", c.sampler.alpha},
                         {"sa_iters", c.sampler.sa_iters},
                         {"t0", c.sampler.t0},
                         {"temp_decay", c.sampler.temp_decay}}}};
    j["output_dir"] = m.output_dir.string();
    return j;
}

PreparedRun prepare(const RunManifest& m) {
    const std::uint64_t seed = m.federation.seed;
    Batch full = std::visit(
        [&](const auto& src) -> Batch {
            using T = std::decay_t<decltype(src)>;
            if constexpr (std::is_same_v<T, SyntheticSource>) {
                return synth_dataset(src.num_classes, src.samples_per_class, src.dim, src.separation,
                                     src.seed.value_or(seed));
            } else if constexpr (std::is_same_v<T, IdxSource>) {
                return load_idx_images(src.images, src.labels);
            } else {
                return load_csv(src.path, src.label_column);
            }
        },
        m.dataset);

    PreparedRun run;
    run.model.input_dim = full.dim();
    run.model.hidden_dims = m.hidden_dims;
    run.model.num_classes = static_cast<std::size_t>(num_classes_of(full));
    run.model.activation = m.activation;
    run.clients = pathological_partition(full, {m.num_clients, m.classes_per_client, m.partition_seed.value_or(seed)});
    run.federation = m.federation;
    return run;
}

ExperimentLog execute(const RunManifest& m) {
    PreparedRun run = prepare(m);
    ExperimentLog log;
    log.config_snapshot = to_json(m);
    for (const auto& c : run.clients) {
        log.client_train_sizes.push_back(c.train.size());
    }
    log.records = run_experiment(run.federation, run.model, run.clients);

    std::error_code ec;
    std::filesystem::create_directories(m.output_dir, ec);
    if (ec) {
        throw IoError(fmt::format("{}: cannot create output directory: {}", m.output_dir.string(), ec.message()));
    }
    write_csv(log, m.output_dir / "metrics.csv");
    write_summary(log, m.output_dir / "summary.json");
    return log;
}

} // namespace fedcome
