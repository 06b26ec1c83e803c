#include "config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace fsilab::cli {

ConfigError::ConfigError(const std::string& source, int line, const std::string& key, const std::string& msg)
    : std::runtime_error([&] {
        std::ostringstream ss;
        ss << source;
        if (line > 0) ss << ":" << line;
        if (!key.empty()) ss << ": key '" << key << "'";
        ss << ": " << msg;
        return ss.str();
      }()),
      line_(line),
      key_(key) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Ctx {
  const std::string& source;
  int line;
  const std::string& key;
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(source, line, key, msg); }
};

double to_double(const Ctx& c, const std::string& v) {
  double x = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(x)) c.fail("expected a number, got '" + v + "'");
  return x;
}

long long to_int(const Ctx& c, const std::string& v) {
  long long x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) c.fail("expected an integer, got '" + v + "'");
  return x;
}

bool to_bool(const Ctx& c, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  c.fail("expected true or false, got '" + v + "'");
}

void positive(const Ctx& c, double x) {
  if (!(x > 0.0)) c.fail("must be positive");
}

using Setter = std::function<void(ScenarioConfig&, const Ctx&, const std::string&)>;

Setter real(double ScenarioConfig::*m, bool pos = true) {
  return [m, pos](ScenarioConfig& s, const Ctx& c, const std::string& v) {
    const double x = to_double(c, v);
    if (pos) positive(c, x);
    s.*m = x;
  };
}

Setter integer(int ScenarioConfig::*m, int min) {
  return [m, min](ScenarioConfig& s, const Ctx& c, const std::string& v) {
    const long long x = to_int(c, v);
    if (x < min || x > 1000000) c.fail("must be an integer in [" + std::to_string(min) + ", 1000000]");
    s.*m = static_cast<int>(x);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> t = {
      {"geometry.r_inner", real(&ScenarioConfig::r_inner)},
      {"geometry.r_outer", real(&ScenarioConfig::r_outer)},
      {"geometry.n_radial", integer(&ScenarioConfig::n_radial, 1)},
      {"geometry.n_angular", integer(&ScenarioConfig::n_angular, 8)},
      {"physics.nu", real(&ScenarioConfig::nu)},
      {"physics.rho_s", real(&ScenarioConfig::rho_s)},
      {"exponents.p", real(&ScenarioConfig::p)},
      {"exponents.q", real(&ScenarioConfig::q)},
      {"exponents.eta", real(&ScenarioConfig::eta)},
      {"time.T", real(&ScenarioConfig::T)},
      {"time.dt", real(&ScenarioConfig::dt)},
      {"time.scheme",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         try {
           s.scheme = parse_scheme(v);
         } catch (const std::exception&) {
           c.fail("unknown scheme '" + v + "' (expected bdf2 or theta)");
         }
       }},
      {"time.theta",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         const double x = to_double(c, v);
         if (x < 0.5 || x > 1.0) c.fail("theta must lie in [0.5, 1]");
         s.theta = x;
       }},
      {"spectral.k", integer(&ScenarioConfig::k, 1)},
      {"spectral.block",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         const long long x = to_int(c, v);
         if (x < 1 || x > 64) c.fail("must be in [1, 64]");
         s.krylov.block = static_cast<int>(x);
       }},
      {"spectral.max_dim",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         const long long x = to_int(c, v);
         if (x < 8) c.fail("must be at least 8");
         s.krylov.max_dim = static_cast<int>(x);
       }},
      {"spectral.tol",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         s.krylov.tol = to_double(c, v);
         positive(c, s.krylov.tol);
       }},
      {"spectral.r_min",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         s.grid.r_min = to_double(c, v);
         positive(c, s.grid.r_min);
       }},
      {"spectral.r_max",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         s.grid.r_max = to_double(c, v);
         positive(c, s.grid.r_max);
       }},
      {"spectral.n_radii",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         const long long x = to_int(c, v);
         if (x < 1) c.fail("must be at least 1");
         s.grid.n_radii = static_cast<int>(x);
       }},
      {"spectral.n_angles",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         const long long x = to_int(c, v);
         if (x < 1) c.fail("must be at least 1");
         s.grid.n_angles = static_cast<int>(x);
       }},
      {"spectral.sector_angle",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         const double x = to_double(c, v);
         if (!(x > M_PI / 2 && x < M_PI)) c.fail("sector angle must lie in (pi/2, pi)");
         s.grid.sector_angle = x;
       }},
      {"spectral.include_sector",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) { s.grid.include_sector = to_bool(c, v); }},
      {"spectral.rbound_n", integer(&ScenarioConfig::rbound_n, 1)},
      {"spectral.rbound_trials", integer(&ScenarioConfig::rbound_trials, 2)},
      {"spectral.rbound_signs", integer(&ScenarioConfig::rbound_signs, 1)},
      {"evolve.ell0_x", [](ScenarioConfig& s, const Ctx& c, const std::string& v) { s.xi0[0] = to_double(c, v); }},
      {"evolve.ell0_y", [](ScenarioConfig& s, const Ctx& c, const std::string& v) { s.xi0[1] = to_double(c, v); }},
      {"evolve.omega0", [](ScenarioConfig& s, const Ctx& c, const std::string& v) { s.xi0[2] = to_double(c, v); }},
      {"evolve.forcing", [](ScenarioConfig& s, const Ctx& c, const std::string& v) { s.forcing = to_bool(c, v); }},
      {"maxreg.members", integer(&ScenarioConfig::members, 1)},
      {"nonlinear.gamma", real(&ScenarioConfig::gamma)},
      {"nonlinear.tol", real(&ScenarioConfig::tol)},
      {"nonlinear.max_iter", integer(&ScenarioConfig::max_iter, 1)},
      {"nonlinear.amplitude",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         const double x = to_double(c, v);
         if (x < 0.0) c.fail("must be non-negative (0 selects automatic scaling)");
         s.amplitude = x;
       }},
      {"run.seed",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         const long long x = to_int(c, v);
         if (x < 0) c.fail("must be non-negative");
         s.seed = static_cast<std::uint64_t>(x);
       }},
      {"run.out",
       [](ScenarioConfig& s, const Ctx& c, const std::string& v) {
         if (v.empty()) c.fail("must not be empty");
         s.out = v;
       }},
  };
  return t;
}

std::string fmt(double x) {
  std::ostringstream ss;
  ss << std::setprecision(17) << x;
  return ss.str();
}

}  // namespace

TimeGrid ScenarioConfig::time_grid() const {
  const int steps = std::max(1, static_cast<int>(std::lround(T / dt)));
  return TimeGrid{dt, steps};
}

std::map<std::string, std::string> ScenarioConfig::canonical() const {
  return {
      {"geometry.r_inner", fmt(r_inner)},
      {"geometry.r_outer", fmt(r_outer)},
      {"geometry.n_radial", std::to_string(n_radial)},
      {"geometry.n_angular", std::to_string(n_angular)},
      {"physics.nu", fmt(nu)},
      {"physics.rho_s", fmt(rho_s)},
      {"exponents.p", fmt(p)},
      {"exponents.q", fmt(q)},
      {"exponents.eta", fmt(eta)},
      {"time.T", fmt(T)},
      {"time.dt", fmt(dt)},
      {"time.scheme", scheme_name(scheme)},
      {"time.theta", fmt(theta)},
      {"spectral.k", std::to_string(k)},
      {"spectral.block", std::to_string(krylov.block)},
      {"spectral.max_dim", std::to_string(krylov.max_dim)},
      {"spectral.tol", fmt(krylov.tol)},
      {"spectral.r_min", fmt(grid.r_min)},
      {"spectral.r_max", fmt(grid.r_max)},
      {"spectral.n_radii", std::to_string(grid.n_radii)},
      {"spectral.n_angles", std::to_string(grid.n_angles)},
      {"spectral.sector_angle", fmt(grid.sector_angle)},
      {"spectral.include_sector", grid.include_sector ? "true" : "false"},
      {"spectral.rbound_n", std::to_string(rbound_n)},
      {"spectral.rbound_trials", std::to_string(rbound_trials)},
      {"spectral.rbound_signs", std::to_string(rbound_signs)},
      {"evolve.ell0_x", fmt(xi0[0])},
      {"evolve.ell0_y", fmt(xi0[1])},
      {"evolve.omega0", fmt(xi0[2])},
      {"evolve.forcing", forcing ? "true" : "false"},
      {"maxreg.members", std::to_string(members)},
      {"nonlinear.gamma", fmt(gamma)},
      {"nonlinear.tol", fmt(tol)},
      {"nonlinear.max_iter", std::to_string(max_iter)},
      {"nonlinear.amplitude", fmt(amplitude)},
      {"run.seed", std::to_string(seed)},
  };
}

std::string ScenarioConfig::hash() const {
  // FNV-1a over the canonical form
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [k, v] : canonical()) {
    for (char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

ScenarioConfig parse_config(std::istream& is, const std::string& source) {
  ScenarioConfig cfg;
  std::string section, raw;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find_first_of("#;");
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, lineno, "", "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& [k, s] : setters()) known = known || k.rfind(section + ".", 0) == 0;
      if (!known) throw ConfigError(source, lineno, "", "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, lineno, "", "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    const Ctx c{source, lineno, full};
    const auto it = setters().find(full);
    if (it == setters().end()) c.fail("unknown key");
    if (auto s = seen.find(full); s != seen.end()) c.fail("duplicate key (first set on line " + std::to_string(s->second) + ")");
    seen[full] = lineno;
    it->second(cfg, c, value);
  }
  validate(cfg, source);
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path, 0, "", "cannot open file");
  return parse_config(f, path);
}

void validate(const ScenarioConfig& c, const std::string& source) {
  auto fail = [&](const std::string& key, const std::string& msg) { throw ConfigError(source, 0, key, msg); };
  if (!(c.r_inner < c.r_outer)) fail("geometry.r_inner", "r_inner < r_outer violated");
  if (!(c.p > 1.0)) fail("exponents.p", "p > 1 violated");
  if (!(c.q > 1.0)) fail("exponents.q", "q > 1 violated");
  const double s = 1.0 / c.p + 1.0 / (2.0 * c.q);
  if (std::abs(s - 1.0) < 1e-12) fail("exponents", "1/p + 1/(2q) != 1 violated (trace condition undefined)");
  if (s > 1.5) fail("exponents", "1/p + 1/(2q) <= 3/2 violated");
  if (c.dt > c.T) fail("time.dt", "dt <= T violated");
  if (!(c.grid.r_min < c.grid.r_max)) fail("spectral.r_min", "r_min < r_max violated");
  if (c.krylov.max_dim < 2 * c.krylov.block) fail("spectral.max_dim", "max_dim >= 2 block violated");
}

}  // namespace fsilab::cli
