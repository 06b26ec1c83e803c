#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "fsilab/errors.hpp"

using namespace fsilab;
using namespace fsilab::cli;
namespace fs = std::filesystem;

namespace {

ScenarioConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is, "test.cfg");
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, DefaultsAndSections) {
  const auto c = parse("# comment\n[geometry]\nn_radial = 6 ; trailing\n\n[time]\nscheme = theta\nT = 2\ndt = 0.1\n");
  EXPECT_EQ(c.n_radial, 6);
  EXPECT_EQ(c.n_angular, 48);
  EXPECT_EQ(c.scheme, Scheme::Theta);
  EXPECT_EQ(c.time_grid().steps, 20);
  EXPECT_DOUBLE_EQ(c.gamma, 1e-2);
}

TEST(Config, DiagnosticsNameLineAndKey) {
  try {
    parse("[geometry]\nr_inner = 0.5\nr_outer = -1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.key(), "geometry.r_outer");
  }
  EXPECT_THROW(parse("[nowhere]\n"), ConfigError);
  EXPECT_THROW(parse("[geometry]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(parse("[geometry]\nn_radial = 4\nn_radial = 5\n"), ConfigError);
  EXPECT_THROW(parse("[geometry]\nn_radial\n"), ConfigError);
  EXPECT_THROW(parse("[time]\nscheme = rk4\n"), ConfigError);
  EXPECT_THROW(parse("[geometry]\nr_inner = 3\n"), ConfigError);
}

TEST(Config, ExponentConditions) {
  try {
    parse("[exponents]\np = 1.3333333333333333\nq = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("1/p + 1/(2q) != 1"), std::string::npos);
  }
  EXPECT_THROW(parse("[exponents]\np = 1\n"), ConfigError);
  EXPECT_NO_THROW(parse("[exponents]\np = 3\nq = 1.5\n"));
}

TEST(Config, HashIgnoresFormatting) {
  const auto a = parse("[geometry]\nn_radial = 6\n");
  const auto b = parse("# same thing\n[geometry]\n   n_radial=6   \n");
  const auto c = parse("[geometry]\nn_radial = 7\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash().size(), 16u);
}

TEST(Cli, DeterministicArtifactsAndManifest) {
  const auto c = parse("[geometry]\nn_radial = 2\nn_angular = 16\n[time]\nT = 0.5\ndt = 0.05\n[spectral]\nk = 2\n");
  const fs::path base = fs::temp_directory_path() / "fsilab_cli_test";
  fs::remove_all(base);
  for (const char* run : {"a", "b"}) {
    run_command("mesh", c, base / run);
    run_command("evolve", c, base / run);
  }
  for (const char* f : {"mesh.json", "mesh.txt", "norms.json", "series.csv", "evolve.manifest.json"}) {
    EXPECT_EQ(slurp(base / "a" / f), slurp(base / "b" / f)) << f;
  }
  const auto m = nlohmann::json::parse(slurp(base / "a" / "evolve.manifest.json"));
  EXPECT_EQ(m["config_hash"], c.hash());
  EXPECT_EQ(m["files"].size(), 2u);
  const std::string csv = slurp(base / "a" / "series.csv");
  EXPECT_EQ(csv.rfind("t,l1,l2,omega,energy,u_lq,u_w2q,p_w1q\n", 0), 0u);
  EXPECT_THROW(run_command("nothing", c, base / "a"), Error);
  fs::remove_all(base);
}
