#include "fedcome/cli.hpp"

#include "fedcome/error.hpp"
#include "fedcome/manifest.hpp"
#include "fedcome/verify.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <ostream>

namespace fedcome::cli {

namespace {

template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }
}

void print_summary(const ExperimentLog& log, const std::filesystem::path& dir, std::ostream& out) {
    const auto s = summary_json(log);
    out << fmt::format("{} rounds, final weighted accuracy {:.4f}, mean {:.4f} (sd {:.4f}), loss rises {}; wrote {}\n",
                       log.records.size(), s["final_weighted_acc"].get<double>(), s["mean_final_acc"].get<double>(),
                       s["acc_std"].get<double>(), s["total_violations"].get<std::size_t>(), dir.string());
}

std::vector<std::string> sweep_assignments(const std::string& param, const std::string& value) {
    if (param == "alpha") return {"federation.sampler.alpha=" + value};
    if (param == "mu") return {"federation.sampler.mu=" + value};
    if (param == "classes_per_client") return {"partition.classes_per_client=" + value};
    return {"federation.participation.mode=partial", "federation.participation.ratio=" + value};
}

} // namespace

const std::vector<std::string>& sweep_params() {
    static const std::vector<std::string> params{"alpha", "mu", "participation_ratio", "classes_per_client"};
    return params;
}

int cmd_run(const std::filesystem::path& manifest, const std::vector<std::string>& overrides, std::ostream& out,
            std::ostream& err) {
    RunManifest m;
    if (int rc = guarded(err, [&] {
            m = load_manifest(manifest, overrides);
            return kOk;
        });
        rc != kOk) {
        return rc;
    }
    return guarded(err, [&] {
        const ExperimentLog log = execute(m);
        print_summary(log, m.output_dir, out);
        return kOk;
    });
}

int cmd_verify(const std::string& suite, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const verify::SuiteResult results = verify::run_suite(suite);
        bool all = true;
        for (const auto& r : results) {
            out << (r.passed ? "PASS " : "FAIL ") << r.name;
            if (!r.detail.empty()) {
                out << " (" << r.detail << ")";
            }
            out << '\n';
            all = all && r.passed;
        }
        return all ? kOk : kRuntimeFailure;
    });
}

int cmd_sweep(const std::filesystem::path& manifest, const std::string& param, const std::vector<std::string>& values,
              const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err) {
    if (std::find(sweep_params().begin(), sweep_params().end(), param) == sweep_params().end()) {
        err << fmt::format("error: --param: unknown parameter '{}' (expected {})\n", param,
                           fmt::join(sweep_params(), ", "));
        return kUsageError;
    }
    if (values.empty()) {
        err << "error: --values: at least one value is required\n";
        return kUsageError;
    }
    RunManifest base;
    if (int rc = guarded(err, [&] {
            base = load_manifest(manifest, overrides);
            return kOk;
        });
        rc != kOk) {
        return rc;
    }

    std::vector<std::string> rows;
    bool any_failed = false;
    for (const std::string& value : values) {
        std::vector<std::string> sub = overrides;
        for (auto& a : sweep_assignments(param, value)) {
            sub.push_back(std::move(a));
        }
        const std::filesystem::path dir = base.output_dir / fmt::format("{}_{}", param, value);
        sub.push_back("output_dir=\"" + dir.generic_string() + "\"");
        std::optional<ExperimentLog> log;
        const int rc = guarded(err, [&] {
            nlohmann::json doc = load_manifest_json(manifest, sub);
            if (param == "participation_ratio" && doc["federation"]["participation"].contains("subset_size")) {
                doc["federation"]["participation"].erase("subset_size");
            }
            const RunManifest m = parse_manifest(doc, manifest.parent_path());
            log = execute(m);
            out << param << '=' << value << ": ";
            print_summary(*log, m.output_dir, out);
            return kOk;
        });
        if (rc != kOk || !log) {
            any_failed = true;
            rows.push_back(fmt::format("{},failed,,,,", value));
            continue;
        }
        const auto s = summary_json(*log);
        rows.push_back(fmt::format("{},ok,{:.17g},{:.17g},{:.17g},{}", value, s["final_weighted_acc"].get<double>(),
                                   s["mean_final_acc"].get<double>(), s["acc_std"].get<double>(),
                                   s["total_violations"].get<std::size_t>()));
    }

    return guarded(err, [&] {
        std::filesystem::create_directories(base.output_dir);
        const auto path = base.output_dir / "sweep_summary.csv";
        std::ofstream csv(path, std::ios::binary);
        if (!csv) {
            throw IoError(fmt::format("cannot write '{}'", path.string()));
        }
        csv << param << ",status,final_weighted_acc,mean_final_acc,acc_std,total_violations\n";
        for (const auto& r : rows) {
            csv << r << '\n';
        }
        return any_failed ? kRuntimeFailure : kOk;
    });
}

int main(int argc, char** argv) {
    CLI::App app{"Deterministic federated-learning simulator with per-client consensus"};
    app.require_subcommand(1);

    std::filesystem::path run_manifest;
    std::vector<std::string> run_sets;
    auto* run = app.add_subcommand("run", "Run one experiment from a JSON manifest");
    run->add_option("manifest", run_manifest, "Manifest path")->required();
    run->add_option("--set", run_sets, "Override a manifest field, e.g. federation.eta=0.01");

    std::string suite;
    auto* ver = app.add_subcommand("verify", "Run a property suite: qp, consensus, descent or sampler");
    ver->add_option("suite", suite, "Suite name")->required();

    std::filesystem::path sweep_manifest;
    std::string param;
    std::vector<std::string> values;
    std::vector<std::string> sweep_sets;
    auto* sweep = app.add_subcommand("sweep", "Run one experiment per parameter value");
    sweep->add_option("manifest", sweep_manifest, "Manifest path")->required();
    sweep->add_option("--param", param, "alpha, mu, participation_ratio or classes_per_client")->required();
    sweep->add_option("--values", values, "Comma-separated values")->delimiter(',')->expected(0, -1)->required();
    sweep->add_option("--set", sweep_sets, "Override a manifest field");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsageError;
    }

    if (*run) {
        return cmd_run(run_manifest, run_sets, std::cout, std::cerr);
    }
    if (*ver) {
        return cmd_verify(suite, std::cout, std::cerr);
    }
    return cmd_sweep(sweep_manifest, param, values, sweep_sets, std::cout, std::cerr);
}

} // namespace fedcome::cli
