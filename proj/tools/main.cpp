#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "fsilab/errors.hpp"

int main(int argc, char** argv) {
  using namespace fsilab::cli;
  CLI::App app{"fsilab: rigid disk in a viscous annulus, linear and nonlinear analysis"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  app.add_option("--config", config_path, "scenario file (key = value with [sections])")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides run.out)");
  app.add_option("--seed", seed, "random seed (overrides run.seed)")->check(CLI::NonNegativeNumber);

  const std::map<std::string, std::string> help = {
      {"mesh", "generate the annulus mesh and its quality report"},
      {"addedmass", "added mass, lifting stiffness and K with symmetry flags"},
      {"spectrum", "rightmost eigenvalues of the coupled pencil"},
      {"scan", "resolvent norm scan over a lambda grid"},
      {"rbound", "Monte Carlo R-bound estimate of the resolvent family"},
      {"evolve", "linear time integration with norm accounting"},
      {"maxreg", "maximal regularity ratio over a seeded forcing ensemble"},
      {"nonlinear", "Picard solve of the transformed nonlinear problem and back transform"},
      {"report", "collect the JSON artifacts of the output directory"},
  };
  for (const auto& name : command_names()) app.add_subcommand(name, help.at(name));

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ScenarioConfig cfg = config_path.empty() ? ScenarioConfig{} : load_config(config_path);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!out_dir.empty()) cfg.out = out_dir;
    const auto files = run_command(command, cfg, cfg.out);
    for (const auto& f : files) std::cout << cfg.out << "/" << f << "\n";
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
