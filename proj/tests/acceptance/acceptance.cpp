// One PASS/FAIL line per acceptance criterion. Configurations and tolerances are pinned here,
// independently of the preset files, so a preset edit cannot loosen a criterion.

#include "ergodic/experiments.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace ex = ergodic::experiments;
using ex::json;

namespace {

struct Criterion {
  int id;
  std::string title;
  double time_limit;  // seconds
  std::function<json()> config;
};

const json kCrenel = {{"kind", "crenel"}, {"a0", 1.0}, {"p", 1.0}, {"l", 0.75}, {"b_lower", 1.0}};

std::vector<Criterion> criteria() {
  return {
      {1, "constant b: lambda, h, gamma, TV slope", 60,
       [] {
         return json{{"experiment", "renewal"},
                     {"renewal", {{"rate", {{"kind", "constant"}, {"b", 1.0}}}, {"spacing", 1.0 / 256}, {"horizon", 12}}},
                     {"tolerances", {{"lambda", 1e-8}, {"h_sup", 2e-3}, {"gamma_sup", 2e-3}, {"slope_rel", 0.15}}}};
       }},
      {2, "crenel b: C e^{-rho t} envelope, monotonicity, factor 2", 300,
       [] {
         json rate = kCrenel;
         rate["b_on"] = 1.0;
         rate["b_off"] = 0.0;
         return json{{"experiment", "renewal"},
                     {"renewal", {{"rate", rate}, {"spacing", 1.0 / 256}, {"horizon", 12}, {"mu_ages", {0.0, 0.5, 1.5}}}},
                     {"tolerances", {{"bound_slack", 1e-9}}}};
       }},
      {3, "1000 random kernels: coupling contraction, conservativity", 120,
       [] {
         return json{{"experiment", "verify-core"},
                     {"verify-core", {{"kernels", 1000}}},
                     {"tolerances", {{"slack", 1e-6}, {"conservation", 1e-12}}}};
       }},
      {4, "diffusion: row sums, density sandwich, dominating bound", 300,
       [] {
         return json{{"experiment", "diffusion"},
                     {"diffusion",
                      {{"sigma", {{"kind", "constant"}, {"value", 2.0}}},
                       {"r", {{"kind", "constant"}, {"value", 0.3}}},
                       {"cells", 128},
                       {"dt", 1.0 / 64},
                       {"tau", 4},
                       {"horizon", 60},
                       {"sandwich_sigmas", {5.0, 10.0, 20.0}},
                       {"sandwich_cells", 256}}},
                     {"tolerances", {{"row_sum", 1e-10}, {"sandwich_slack", 1e-12}, {"bound_slack", 1e-9}}}};
       }},
      {5, "periodic: Floquet lambda, sharp slope, residuals", 300,
       [] {
         return json{{"experiment", "periodic"},
                     {"periodic",
                      {{"rate", {{"kind", "time_sin"}, {"mean", 1.0}, {"amplitude", 1.0}, {"period", 1.0}}},
                       {"spacing", 1.0 / 256},
                       {"horizon", 12}}},
                     {"tolerances", {{"lambda", 1e-6}, {"slope", 0.3}, {"residual_factor", 10}}}};
       }},
      {6, "max-age: Groenwall, (H'0) distance, profile gap", 300,
       [] {
         return json{{"experiment", "maxage"},
                     {"maxage",
                      {{"schedule", {{"kind", "saturating"}, {"a0", 1.0}, {"a_inf", 2.0}, {"k", 1.0}}},
                       {"rate", {{"kind", "constant"}, {"b", 1.0}}},
                       {"gronwall_samples", 100}}},
                     {"tolerances", {{"floor", 0.05}, {"gronwall", 1e-12}}}};
       }},
      {7, "branching, 10^4 runs: first moments and many-to-one", 300,
       [] {
         return json{
             {"experiment", "branching"},
             {"seed", 2024},
             {"branching",
              {{"cases",
                json::array({{{"label", "constant"}, {"rate", {{"kind", "constant"}, {"b", 1.0}}}, {"t", 5}, {"n_runs", 10000}},
                             {{"label", "crenel"}, {"rate", kCrenel}, {"t", 5}, {"n_runs", 10000}},
                             {{"label", "many_to_one"},
                              {"rate", {{"kind", "constant"}, {"b", 1.0}}},
                              {"t", 10},
                              {"n_runs", 10000},
                              {"observable", "many_to_one"},
                              {"f", {{"kind", "indicator"}, {"lo", 0.0}, {"hi", 1.0}}},
                              {"reference", "gamma"}}})}}},
             {"tolerances", {{"sigmas", 3}}}};
       }},
  };
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool line(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  return pass;
}

bool run_criterion(const Criterion& c) {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const ex::RunReport rep = ex::run(ex::parse_config(c.config()));
    const double elapsed = seconds_since(t0);
    const ex::Check* crit = nullptr;
    for (const auto& ch : rep.checks)
      if (ch.criterion == c.id) crit = &ch;
    std::string failing;
    for (const auto& ch : rep.checks)
      if (!ch.pass) failing += " " + ch.name;
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s (%.2f s, limit %.0f s)%s%s", c.title.c_str(), elapsed, c.time_limit,
                  failing.empty() ? "" : "; failing:", failing.c_str());
    return line(c.id, crit && crit->pass && rep.pass() && elapsed < c.time_limit, buf);
  } catch (const std::exception& e) {
    return line(c.id, false, c.title + ": " + e.what());
  }
}

bool reproducible_presets() {
  try {
    const auto files = ex::preset_files(ERGODIC_PRESET_DIR);
    std::string mismatched;
    std::size_t csvs = 0;
    for (const auto& f : files) {
      const ex::ExperimentConfig cfg = ex::load_config(f);
      const ex::RunReport a = ex::run(cfg);
      const ex::RunReport b = ex::run(cfg);
      bool same = a.files.size() == b.files.size();
      for (std::size_t i = 0; same && i < a.files.size(); ++i)
        same = a.files[i].name == b.files[i].name && a.files[i].contents == b.files[i].contents;
      if (!same) mismatched += " " + cfg.name;
      csvs += a.files.size();
    }
    const std::string detail = std::to_string(files.size()) + " presets, " + std::to_string(csvs) +
                               " output files byte-identical on rerun" + (mismatched.empty() ? "" : "; differs:" + mismatched);
    return line(8, !files.empty() && mismatched.empty(), detail);
  } catch (const std::exception& e) {
    return line(8, false, std::string("preset rerun: ") + e.what());
  }
}

}  // namespace

int main() {
  bool ok = true;
  for (const auto& c : criteria()) ok = run_criterion(c) && ok;
  ok = reproducible_presets() && ok;
  return ok ? 0 : 1;
}
