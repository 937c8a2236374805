#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "mslddmm/config.hpp"
#include "mslddmm/kernel.hpp"

namespace mslddmm {

enum ExitCode : int {
  kExitSuccess = 0,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitThreshold = 4,
};

/// <output_dir>/<name>-<16 hex digits of the config hash>.
std::filesystem::path run_directory(const ExperimentConfig& config);

/// Kernel described by the config. Fitted tables are read from the run
/// directory when present and fitted (and written there) otherwise.
std::unique_ptr<ScaleSpaceKernel> load_or_build_kernel(const ExperimentConfig& config, std::ostream& log);

/// Each command writes into run_directory(config), merges its section into
/// summary.json and refreshes manifest.json. They return an ExitCode and
/// let exceptions escape; run_command maps those to exit codes.
int cmd_fit_kernel(const ExperimentConfig& config, std::ostream& log);
int cmd_register(const ExperimentConfig& config, std::ostream& log);
int cmd_export_fields(const ExperimentConfig& config, const std::optional<std::filesystem::path>& controls,
                      std::ostream& log);
int cmd_check(const ExperimentConfig& config, std::ostream& log);

/// Dispatches by verb and converts failures: ConfigError and missing inputs
/// give 2, numerical failures give 3.
int run_command(const std::string& verb, const std::filesystem::path& config_path,
                const std::vector<std::string>& overrides, const std::optional<std::filesystem::path>& controls,
                std::ostream& log, std::ostream& err);

/// Sorted listing of every file under the run directory with size and
/// FNV-1a digest, excluding the manifest itself.
nlohmann::json build_manifest(const ExperimentConfig& config, const std::filesystem::path& dir);

}  // namespace mslddmm
