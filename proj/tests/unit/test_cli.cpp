#include "ergodic/experiments.hpp"

#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

namespace ex = ergodic::experiments;
namespace fs = std::filesystem;
using ex::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result cli(const std::string& args) {
  const std::string cmd = std::string(ERGODIC_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("ergodic_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json small_branching(std::uint64_t seed, int n_runs = 300) {
  return {{"experiment", "branching"},
          {"seed", seed},
          {"branching",
           {{"cases", json::array({{{"label", "constant"}, {"rate", {{"kind", "constant"}, {"b", 1.0}}},
                                    {"t", 2.0}, {"n_runs", n_runs}}})},
            {"ks_samples", 500}}}};
}

}  // namespace

TEST_CASE("config validation names the offending key") {
  CHECK_THROWS_WITH_AS(ex::parse_config({{"experiment", "renewal"}, {"renewal", {{"rate", {{"b", 1}, {"bee", 2}}}}}}),
                       "renewal.rate.bee: unknown key", ergodic::ConfigError);
  CHECK_THROWS_WITH_AS(ex::parse_config({{"experiment", "nope"}}), doctest::Contains("experiment: must be one of"),
                       ergodic::ConfigError);
  CHECK_THROWS_WITH_AS(ex::parse_config({{"experiment", "maxage"}, {"maxage", {{"spacing", -1.0}}}}),
                       "maxage.spacing: must be positive", ergodic::ConfigError);
  CHECK_THROWS_WITH_AS(ex::parse_config({{"experiment", "renewal"}, {"tolerances", {{"lambda", "x"}}}}),
                       "tolerances.lambda: expected a number", ergodic::ConfigError);
  CHECK_THROWS_AS(ex::parse_config({{"experiment", "branching"},
                                    {"branching", {{"cases", json::array({{{"n_runs", 0}}})}}}}),
                  ergodic::ConfigError);
  CHECK_THROWS_AS(ex::parse_config({{"experiment", "diffusion"}, {"seed", -3}}), ergodic::ConfigError);

  const ex::ExperimentConfig cfg = ex::parse_config({{"experiment", "renewal"}});
  CHECK(cfg.params["spacing"] == 1.0 / 256);
  CHECK(cfg.params["rate"]["kind"] == "constant");
  CHECK(cfg.tolerances.at("lambda") == 1e-8);
}

TEST_CASE("every preset parses and every criterion is reachable from a preset") {
  const auto files = ex::preset_files(ERGODIC_PRESET_DIR);
  REQUIRE(files.size() >= 7);
  std::set<std::string> kinds;
  for (const auto& f : files) kinds.insert(ex::load_config(f).experiment);
  for (const auto& k : ex::experiment_kinds()) CHECK(kinds.count(k) == 1);

  const Result r = cli("presets list");
  CHECK(r.code == 0);
  for (const auto& f : files) CHECK(r.out.find(fs::path(f).filename().string()) != std::string::npos);
}

TEST_CASE("run: verify-core with the default seed passes") {
  const fs::path d = scratch("core");
  const fs::path cfg = write_config(d, "core.json", {{"experiment", "verify-core"}});
  const Result r = cli("run " + cfg.string() + " --out " + (d / "out").string());
  CHECK(r.code == 0);
  CHECK(r.out.find("[criterion 3]") != std::string::npos);
  const json rep = json::parse(slurp(d / "out" / "report.json"));
  CHECK(rep["pass"] == true);
  CHECK(rep["seed"] == 1);
}

TEST_CASE("run: renewal constant-b preset writes decay.csv and the fitted slope") {
  const fs::path d = scratch("renewal");
  const Result r = cli("run " + std::string(ERGODIC_PRESET_DIR) + "/renewal-constant.json --out " + d.string());
  CHECK(r.code == 0);
  const std::string decay = slurp(d / "decay.csv");
  CHECK(decay.rfind("t,tv_error,bound,mu_age\n", 0) == 0);
  CHECK(slurp(d / "eigen.csv").rfind("a,gamma_density,h,", 0) == 0);
  const json rep = json::parse(slurp(d / "report.json"));
  CHECK(rep["metrics"]["fitted_slope"].get<double>() == doctest::Approx(-2.0).epsilon(0.15));
  CHECK(rep["files"].size() == 2);
}

TEST_CASE("run: exit codes and the output-directory variable") {
  const fs::path d = scratch("codes");
  json bad = small_branching(1);
  bad["branching"]["cases"][0]["n_runs"] = 0;
  const Result zero = cli("run " + write_config(d, "zero.json", bad).string());
  CHECK(zero.code == 2);
  CHECK(zero.out.find("branching.cases[0].n_runs") != std::string::npos);

  CHECK(cli("run " + (d / "missing.json").string()).code == 2);
  CHECK(cli("frobnicate").code == 2);

  // A tolerance nobody can meet turns into a check failure.
  json strict = {{"experiment", "renewal"}, {"tolerances", {{"gamma_sup", 1e-30}}}};
  CHECK(cli("run " + write_config(d, "strict.json", strict).string() + " --out " + (d / "strict").string()).code == 1);

  const fs::path cfg = write_config(d, "named.json", {{"experiment", "maxage"}, {"name", "env-out"}});
  const std::string cmd = "ERGODIC_OUT_DIR=" + (d / "env").string() + " " + ERGODIC_CLI_PATH + " run " +
                          cfg.string() + " >/dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(d / "env" / "env-out" / "report.json"));
}

TEST_CASE("compare: identical, perturbed tolerance, seed change on a Monte Carlo run") {
  const fs::path d = scratch("compare");
  const fs::path a = write_config(d, "a.json", small_branching(1));
  CHECK(cli("run " + a.string() + " --out " + (d / "a1").string()).code == 0);
  CHECK(cli("run " + a.string() + " --out " + (d / "a2").string()).code == 0);
  const Result same = cli("compare " + (d / "a1").string() + " " + (d / "a2").string());
  CHECK(same.code == 0);
  CHECK(same.out.find("0 differing field(s)") != std::string::npos);
  CHECK(slurp(d / "a1" / "mc.csv") == slurp(d / "a2" / "mc.csv"));

  json tol = small_branching(1);
  tol["tolerances"] = {{"sigmas", 4.0}};
  cli("run " + write_config(d, "tol.json", tol).string() + " --out " + (d / "tol").string());
  const auto diff_tol = ex::compare(json::parse(slurp(d / "a1" / "report.json")),
                                    json::parse(slurp(d / "tol" / "report.json")));
  std::set<std::string> fields;
  for (const auto& e : diff_tol) fields.insert(e.field);
  CHECK(fields.count("tolerances.sigmas") == 1);

  cli("run " + a.string() + " --seed 2 --out " + (d / "seed2").string());
  const json r1 = json::parse(slurp(d / "a1" / "report.json"));
  const json r2 = json::parse(slurp(d / "seed2" / "report.json"));
  fields.clear();
  for (const auto& e : ex::compare(r1, r2)) fields.insert(e.field);
  CHECK(fields.count("metrics.constant.mean") == 1);
  CHECK(fields.count("seed") == 1);
  CHECK(fields.count("metrics.constant.deterministic") == 0);
  CHECK(fields.count("config.cases[0].t") == 0);

  const json other = {{"experiment", "renewal"}};
  CHECK_THROWS_AS(ex::compare(r1, other), ergodic::ConfigError);
}

TEST_CASE("write_outputs replaces files atomically and leaves no temporaries") {
  const fs::path d = scratch("atomic");
  ex::RunReport rep;
  rep.config = ex::parse_config({{"experiment", "verify-core"}});
  rep.files.push_back({"x.csv", "a,b\n1,2\n"});
  ex::write_outputs(rep, d.string());
  rep.files[0].contents = "a,b\n3,4\n";
  const auto written = ex::write_outputs(rep, d.string());
  CHECK(written.size() == 2);
  CHECK(slurp(d / "x.csv") == "a,b\n3,4\n");
  for (const auto& e : fs::directory_iterator(d)) CHECK(e.path().extension() != ".tmp");
}
