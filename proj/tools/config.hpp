#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

#include "fsilab/evolution.hpp"
#include "fsilab/spectral.hpp"

namespace fsilab::cli {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& key, const std::string& msg);
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

struct ScenarioConfig {
  // geometry
  double r_inner = 0.5;
  double r_outer = 2.0;
  int n_radial = 8;
  int n_angular = 48;
  // physics
  double nu = 1.0;
  double rho_s = 1.0;
  // exponents
  double p = 2.0;
  double q = 2.0;
  double eta = 1.0;
  // time
  double T = 20.0;
  double dt = 0.05;
  Scheme scheme = Scheme::BDF2;
  double theta = 1.0;
  // spectral
  int k = 10;
  KrylovOptions krylov;
  LambdaGrid grid;
  int rbound_n = 4;
  int rbound_trials = 40;
  int rbound_signs = 256;
  // evolve
  Vec3 xi0 = Vec3(1.0, 0.5, 2.0);
  bool forcing = false;
  // maxreg
  int members = 20;
  // nonlinear
  double gamma = 1e-2;
  double tol = 1e-8;
  int max_iter = 10;
  double amplitude = 0.0;  // 0: scale the data so the linear solution has S-norm gamma/2
  // run
  std::uint64_t seed = 2024;
  std::string out = "out";

  TimeGrid time_grid() const;
  // Canonical "section.key = value" lines, sorted.
  std::map<std::string, std::string> canonical() const;
  std::string hash() const;
};

ScenarioConfig parse_config(std::istream& is, const std::string& source = "<config>");
ScenarioConfig load_config(const std::string& path);
// Cross-field checks; throws ConfigError naming the violated condition.
void validate(const ScenarioConfig& c, const std::string& source = "<config>");

}  // namespace fsilab::cli
