#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace fedcome::cli {

/// Process exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeFailure = 1;
inline constexpr int kUsageError = 2;

int cmd_run(const std::filesystem::path& manifest, const std::vector<std::string>& overrides, std::ostream& out,
            std::ostream& err);

int cmd_verify(const std::string& suite, std::ostream& out, std::ostream& err);

/// One sub-run per value, each writing to <output_dir>/<param>_<value>, plus
/// <output_dir>/sweep_summary.csv.
int cmd_sweep(const std::filesystem::path& manifest, const std::string& param, const std::vector<std::string>& values,
              const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err);

/// The sweepable parameters and the manifest field each one sets.
const std::vector<std::string>& sweep_params();

int main(int argc, char** argv);

} // namespace fedcome::cli
