#include "doctest.h"

#include "fedcome/cli.hpp"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fedcome;
namespace fs = std::filesystem;

namespace {

struct Workspace {
    fs::path dir = fs::temp_directory_path() / "fedcome_cli_test";
    fs::path manifest = dir / "run.json";

    Workspace() {
        fs::remove_all(dir);
        fs::create_directories(dir);
        write(base());
    }
    ~Workspace() { fs::remove_all(dir); }

    nlohmann::json base() const {
        return {{"dataset", {{"synthetic", {{"num_classes", 4}, {"samples_per_class", 28}, {"dim", 5}, {"separation", 3.0}}}}},
                {"partition", {{"num_clients", 4}, {"classes_per_client", 2}}},
                {"model", {{"hidden", {6}}, {"activation", "tanh"}}},
                {"federation", {{"method", "fedcome"}, {"rounds", 2}, {"batch_size", 10}, {"eta", 0.1}, {"seed", 1}}},
                {"output_dir", (dir / "out").string()}};
    }
    void write(const nlohmann::json& doc) const { std::ofstream(manifest) << doc.dump(2); }
    nlohmann::json summary(const fs::path& out) const {
        std::ifstream in(out / "summary.json");
        return nlohmann::json::parse(in);
    }
};

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) {
        ++n;
    }
    return n;
}

int run_main(std::vector<std::string> args) {
    args.insert(args.begin(), "fedcome");
    std::vector<char*> argv;
    for (auto& a : args) {
        argv.push_back(a.data());
    }
    return cli::main(static_cast<int>(argv.size()), argv.data());
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("run writes metrics and summary") {
    Workspace ws;
    std::ostringstream out, err;
    CHECK(cli::cmd_run(ws.manifest, {}, out, err) == cli::kOk);
    CHECK(fs::exists(ws.dir / "out" / "metrics.csv"));
    CHECK(fs::exists(ws.dir / "out" / "summary.json"));
    CHECK(line_count(ws.dir / "out" / "metrics.csv") == 3);
    CHECK(ws.summary(ws.dir / "out").contains("final_weighted_acc"));
}

TEST_CASE("bad configuration is a usage error naming the field") {
    Workspace ws;
    std::ostringstream out, err;
    CHECK(cli::cmd_run(ws.manifest, {"federation.eta=-1"}, out, err) == cli::kUsageError);
    CHECK(err.str().find("η") != std::string::npos);
    CHECK_FALSE(fs::exists(ws.dir / "out" / "metrics.csv"));

    auto doc = ws.base();
    doc["federation"]["learning_rate"] = 0.1;
    ws.write(doc);
    std::ostringstream err2;
    CHECK(cli::cmd_run(ws.manifest, {}, out, err2) == cli::kUsageError);
    CHECK(err2.str().find("learning_rate") != std::string::npos);
}

TEST_CASE("missing manifest and unknown suite are usage errors") {
    std::ostringstream out, err;
    CHECK(cli::cmd_run("/nonexistent/fedcome.json", {}, out, err) == cli::kUsageError);
    CHECK(cli::cmd_verify("bogus", out, err) == cli::kUsageError);
}

TEST_CASE("verify prints one line per property") {
    std::ostringstream out, err;
    CHECK(cli::cmd_verify("qp", out, err) == cli::kOk);
    std::istringstream lines(out.str());
    std::size_t n = 0;
    for (std::string line; std::getline(lines, line);) {
        CHECK(line.rfind("PASS ", 0) == 0);
        ++n;
    }
    CHECK(n >= 8);
}

TEST_CASE("sweep runs one sub-run per value") {
    Workspace ws;
    std::ostringstream out, err;
    CHECK(cli::cmd_sweep(ws.manifest, "alpha", {"0.1", "0.5", "0.9"}, {}, out, err) == cli::kOk);
    for (const char* v : {"alpha_0.1", "alpha_0.5", "alpha_0.9"}) {
        CHECK(fs::exists(ws.dir / "out" / v / "metrics.csv"));
        CHECK(ws.summary(ws.dir / "out" / v)["config_snapshot"]["federation"]["sampler"]["alpha"].get<double>() ==
              std::stod(std::string(v).substr(6)));
    }
    CHECK(line_count(ws.dir / "out" / "sweep_summary.csv") == 4);
    CHECK(cli::cmd_sweep(ws.manifest, "alpha", {}, {}, out, err) == cli::kUsageError);
    CHECK(cli::cmd_sweep(ws.manifest, "gamma", {"1"}, {}, out, err) == cli::kUsageError);
}

TEST_CASE("sweep keeps going past a failing value") {
    Workspace ws;
    std::ostringstream out, err;
    CHECK(cli::cmd_sweep(ws.manifest, "mu", {"0.5", "2"}, {}, out, err) == cli::kRuntimeFailure);
    CHECK(fs::exists(ws.dir / "out" / "mu_0.5" / "metrics.csv"));
    CHECK(line_count(ws.dir / "out" / "sweep_summary.csv") == 3);
}

TEST_CASE("command line overrides and the seed variable") {
    Workspace ws;
    CHECK(run_main({"run", ws.manifest.string(), "--set", "federation.rounds=1"}) == cli::kOk);
    CHECK(line_count(ws.dir / "out" / "metrics.csv") == 2);
    ::setenv("FEDCOME_SEED", "9", 1);
    const int code = run_main({"run", ws.manifest.string()});
    ::unsetenv("FEDCOME_SEED");
    CHECK(code == cli::kOk);
    CHECK(ws.summary(ws.dir / "out")["config_snapshot"]["federation"]["seed"].get<std::uint64_t>() == 9);
    CHECK(run_main({"frobnicate"}) == cli::kUsageError);
    CHECK(run_main({"--help"}) == cli::kOk);
}

}
