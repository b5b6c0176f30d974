#pragma once

#include "fedcome/data.hpp"
#include "fedcome/metrics.hpp"
#include "fedcome/model.hpp"
#include "fedcome/orchestrator.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace fedcome {

struct SyntheticSource {
    int num_classes = 10;
    std::size_t samples_per_class = 300;
    std::size_t dim = 32;
    double separation = 2.5;
    std::optional<std::uint64_t> seed; // defaults to federation.seed
};

struct IdxSource {
    std::filesystem::path images;
    std::filesystem::path labels;
};

struct CsvSource {
    std::filesystem::path path;
    std::string label_column = "label";
};

using DatasetSource = std::variant<SyntheticSource, IdxSource, CsvSource>;

struct RunManifest {
    DatasetSource dataset;
    std::size_t num_clients = 10;
    std::size_t classes_per_client = 2;
    std::optional<std::uint64_t> partition_seed; // defaults to federation.seed
    std::vector<std::size_t> hidden_dims{64};
    Activation activation = Activation::relu;
    FederationConfig federation;
    std::optional<double> participation_ratio; // resolved into subset_size
    std::filesystem::path output_dir = "fedcome_out";
};

/// Sets a dotted path (e.g. "federation.eta=0.01") in a JSON document. The
/// value is parsed as JSON when it is valid JSON, otherwise kept as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Validates and converts. Unknown keys and bad values raise ConfigError
/// naming the field path. Relative data paths resolve against `base_dir`.
RunManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

/// Reads the file, applies overrides in order, then FEDCOME_SEED if set.
RunManifest load_manifest(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Raw JSON of a manifest file after overrides and the seed variable.
nlohmann::json load_manifest_json(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Fully resolved manifest with every default spelled out.
nlohmann::json to_json(const RunManifest& m);

struct PreparedRun {
    MlpSpec model;
    std::vector<ClientDataset> clients;
    FederationConfig federation; // participation ratio resolved
};

/// Loads or synthesizes the data and partitions it.
PreparedRun prepare(const RunManifest& m);

/// Runs the experiment and writes metrics.csv and summary.json into
/// m.output_dir.
ExperimentLog execute(const RunManifest& m);

} // namespace fedcome
