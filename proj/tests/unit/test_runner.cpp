#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "dicke/runner.hpp"

using namespace dicke;
namespace fs = std::filesystem;

namespace {

const char* kTwa = R"(
[experiment]
kind = twa
seed = 5

[model]
n_spins = 10
g_khz = 0.66
delta_khz = 0.5
field_ratio = 0.2

[time]
t_end = 1
points = 21

[twa]
trajectories = 256
blocks = 8
)";

const char* kFotoc = R"(
[experiment]
kind = fotoc

[model]
n_spins = 4
g_khz = 0.66
delta_khz = 0.5
b_khz = 0.7
n_max = 64

[time]
t_end = 2
points = 41

[fotoc]
generators = X Sr(1.5707963267948966,0)
)";

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto at = s.find(from);
  REQUIRE(at != std::string::npos);
  return s.replace(at, from.size(), to);
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("dicke_unit_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config parses and exposes section settings") {
  const ExperimentConfig c = parse_config(kFotoc);
  CHECK(c.kind == ExperimentKind::Fotoc);
  CHECK(c.params.n_max == 64);
  CHECK(c.params.b_khz == 0.7);
  CHECK(c.points == 41u);
  CHECK(c.get_string("fotoc.generators", "") == "X Sr(1.5707963267948966,0)");
  CHECK(c.echo.at("model.n_spins") == "4");
}

TEST_CASE("config validation names the offending key") {
  CHECK(error_of(replace(kFotoc, "n_max = 64\n", "")).find("model.n_max") != std::string::npos);
  CHECK(error_of(replace(kFotoc, "b_khz = 0.7", "b_khz = 0.7\nfield_ratio = 0.2")).find("model.b_khz") !=
        std::string::npos);
  CHECK(error_of(replace(kFotoc, "points = 41", "points = 41\ncolour = red")).find("time.colour") !=
        std::string::npos);
  CHECK(error_of(replace(kFotoc, "n_spins = 4", "n_spins = four")).find("model.n_spins") != std::string::npos);
  CHECK(error_of(replace(kTwa, "blocks = 8", "blocks = 8\n[renyi]\naxis = min_residual")).find("renyi.axis") !=
        std::string::npos);
  CHECK(error_of(replace(kFotoc, "kind = fotoc", "kind = movie")).find("experiment.kind") != std::string::npos);
  CHECK(error_of(replace(kFotoc, "generators = X", "generators = Q")).find("fotoc.generators") !=
        std::string::npos);
  CHECK_FALSE(error_of(replace(kFotoc, "t_end = 2", "t_end = 2\nt_end = 3")).empty());
  CHECK_FALSE(error_of(replace(kFotoc, "n_spins = 4", "n_spins = 0")).empty());
  // twa needs no cutoff
  CHECK(error_of(kTwa).empty());
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(ParameterError("x")) == 2);
  CHECK(exit_code_for(CutoffError("x")) == 3);
  CHECK(exit_code_for(ContractViolation("x")) == 3);
}

TEST_CASE("dephasing decay") {
  const std::vector<double> i0{1.0, 0.5, 0.25}, t{0.0, 1.0, 2.0};
  CHECK(apply_dephasing_decay(i0, t, 0.0, 40) == i0);
  const auto d = apply_dephasing_decay(i0, t, 60.0, 40);
  CHECK(d[1] / i0[1] == doctest::Approx(std::exp(-2.4)).epsilon(1e-14));
  CHECK(d[2] / i0[2] == doctest::Approx(std::exp(-4.8)).epsilon(1e-14));
  CHECK_THROWS_AS(apply_dephasing_decay(i0, t, -1.0, 40), ParameterError);
}

TEST_CASE("shortest round-trip formatting") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1e-300) == "1e-300");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng) * std::pow(10.0, i % 20 - 10);
    CHECK(std::stod(format_double(x)) == x);
  }
}

TEST_CASE("sha256 of a known file") {
  const fs::path d = scratch("sha");
  fs::create_directories(d);
  std::ofstream(d / "abc") << "abc";
  CHECK(sha256_file(d / "abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("reruns are byte-identical and the manifest lists every output") {
  for (const char* text : {kTwa, kFotoc}) {
    const ExperimentConfig c = parse_config(text);
    RunOptions o1, o2;
    o1.output = scratch("run1");
    o2.output = scratch("run2");
    o2.threads = 2;
    const RunResult a = run(c, o1);
    const RunResult b = run(c, o2);
    REQUIRE(a.files.size() == b.files.size());
    REQUIRE_FALSE(a.files.empty());
    for (std::size_t i = 0; i < a.files.size(); ++i) {
      CHECK(a.files[i].sha256 == b.files[i].sha256);
      CHECK(slurp(a.files[i].path) == slurp(b.files[i].path));
      CHECK(slurp(a.manifest).find(a.files[i].sha256) != std::string::npos);
    }
  }
}

TEST_CASE("resource ceilings and kind mismatch are refused") {
  ExperimentConfig c = parse_config(kFotoc);
  RunOptions o;
  o.output = scratch("ceiling");
  c.max_dim = 10;
  CHECK_THROWS_AS(run(c, o), ConfigError);
  o.allow_large = true;
  CHECK_NOTHROW(run(c, o));
  o.expected_kind = ExperimentKind::Twa;
  CHECK_THROWS_AS(run(c, o), ConfigError);
}

TEST_CASE("a cutoff too small for the dynamics is a contract violation") {
  ExperimentConfig c = parse_config(replace(replace(kFotoc, "n_max = 64", "n_max = 4"), "t_end = 2", "t_end = 6"));
  RunOptions o;
  o.output = scratch("tail");
  CHECK_THROWS_AS(run(c, o), CutoffError);
}
