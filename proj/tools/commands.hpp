#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "config.hpp"

namespace fsilab::cli {

const std::vector<std::string>& command_names();

// Runs one subcommand, writing its artifacts and "<command>.manifest.json" into out.
// Returns the list of files written (relative to out).
std::vector<std::string> run_command(const std::string& command, const ScenarioConfig& cfg,
                                     const std::filesystem::path& out);

}  // namespace fsilab::cli
