#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mslddmm/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multiscale LDDMM landmark registration"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  std::string controls;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "Override a config field: path=value")->take_all();
  };
  CLI::App* fit = app.add_subcommand("fit-kernel", "Fit the multiscale kernel table");
  CLI::App* reg = app.add_subcommand("register", "Optimize controls for the configured landmarks");
  CLI::App* exp = app.add_subcommand("export-fields", "Write deformation, residual and log-Jacobian grids");
  CLI::App* chk = app.add_subcommand("check", "Run the invariant suite on a config");
  for (CLI::App* sub : {fit, reg, exp, chk}) add_common(sub);
  exp->add_option("--controls", controls, "Controls JSON (default: the run directory's)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mslddmm::kExitConfig;
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  std::optional<std::filesystem::path> controls_path;
  if (!controls.empty()) controls_path = controls;
  return mslddmm::run_command(verb, config, overrides, controls_path, std::cout, std::cerr);
}
