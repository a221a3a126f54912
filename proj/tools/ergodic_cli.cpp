#include "ergodic/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace ex = ergodic::experiments;
namespace fs = std::filesystem;

namespace {

constexpr int kPass = 0, kCheckFailure = 1, kConfigError = 2;

#ifndef ERGODIC_DEFAULT_PRESET_DIR
#define ERGODIC_DEFAULT_PRESET_DIR "presets"
#endif

std::string preset_dir() {
  if (const char* d = std::getenv("ERGODIC_PRESET_DIR")) return d;
  return ERGODIC_DEFAULT_PRESET_DIR;
}

std::string default_out(const ex::ExperimentConfig& cfg) {
  if (!cfg.output.empty()) return cfg.output;
  const char* base = std::getenv("ERGODIC_OUT_DIR");
  return (fs::path(base ? base : "out") / cfg.name).string();
}

ex::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ergodic::ConfigError("", "cannot open " + path);
  try {
    return ex::json::parse(is, nullptr, true, true);
  } catch (const ex::json::parse_error& e) {
    throw ergodic::ConfigError("", "parse error in " + path + ": " + e.what());
  }
}

// A directory stands for its report.json.
std::string report_path(const std::string& p) {
  return fs::is_directory(p) ? (fs::path(p) / "report.json").string() : p;
}

int cmd_run(const std::string& config, const std::string& out, const std::optional<std::uint64_t>& seed,
            const std::optional<int>& jobs) {
  ex::ExperimentConfig cfg = ex::load_config(config);
  if (seed) {
    // Re-parse so that seed-dependent blocks (e.g. a random σ schedule) pick up the override.
    ex::json doc = read_json(config);
    doc["seed"] = *seed;
    cfg = ex::parse_config(doc);
  }
  if (jobs) {
    if (*jobs < 1) throw ergodic::ConfigError("jobs", "must be at least 1");
    cfg.jobs = *jobs;
  }
  const std::string dir = out.empty() ? default_out(cfg) : out;
  const ex::RunReport rep = ex::run(cfg);
  for (const auto& p : ex::write_outputs(rep, dir)) std::printf("wrote %s\n", p.c_str());
  for (const auto& c : rep.checks)
    std::printf("%s %-44s %.6g %s %.6g%s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value, c.relation.c_str(),
                c.threshold, c.criterion ? ("  [criterion " + std::to_string(c.criterion) + "]").c_str() : "");
  std::printf("%s: %s (%.2f s)\n", cfg.name.c_str(), rep.pass() ? "pass" : "FAIL", rep.timings.at("total"));
  return rep.pass() ? kPass : kCheckFailure;
}

int cmd_compare(const std::string& a, const std::string& b, double threshold) {
  const auto diff = ex::compare(read_json(report_path(a)), read_json(report_path(b)), threshold);
  for (const auto& d : diff)
    std::printf("%s: %s -> %s%s\n", d.field.c_str(), d.a.c_str(), d.b.c_str(),
                std::isnan(d.relative) ? "" : (" (rel " + std::to_string(d.relative) + ")").c_str());
  std::printf("%zu differing field(s)\n", diff.size());
  return diff.empty() ? kPass : kCheckFailure;
}

int cmd_presets() {
  const auto files = ex::preset_files(preset_dir());
  for (const auto& f : files) {
    const ex::ExperimentConfig cfg = ex::load_config(f);
    std::printf("%-28s %-12s %s\n", fs::path(f).filename().string().c_str(), cfg.experiment.c_str(), f.c_str());
  }
  if (files.empty()) std::fprintf(stderr, "no presets in %s\n", preset_dir().c_str());
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantitative ergodicity experiments for non-conservative semigroups"};
  app.require_subcommand(1);

  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  auto* run = app.add_subcommand("run", "Run one experiment config and write CSV/JSON artifacts");
  run->add_option("config", config, "Experiment config (JSON)")->required();
  run->add_option("--out", out, "Output directory (default: $ERGODIC_OUT_DIR/<name>, else out/<name>)");
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--jobs", jobs, "Worker threads for Monte Carlo runs");

  std::string a, b;
  double threshold = 1e-9;
  auto* cmp = app.add_subcommand("compare", "Field-wise diff of two run reports (files or output directories)");
  cmp->add_option("a", a)->required();
  cmp->add_option("b", b)->required();
  cmp->add_option("--rel", threshold, "Relative threshold below which numbers count as equal");

  auto* presets = app.add_subcommand("presets", "Shipped preset configs");
  presets->add_subcommand("list", "List presets ($ERGODIC_PRESET_DIR overrides the location)");
  presets->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigError;
  }

  try {
    if (*run) return cmd_run(config, out, seed, jobs);
    if (*cmp) return cmd_compare(a, b, threshold);
    return cmd_presets();
  } catch (const ergodic::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    // Domain and lattice violations raised while building the experiment.
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kCheckFailure;
  }
}
