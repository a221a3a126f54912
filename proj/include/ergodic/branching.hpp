#pragma once

#include "ergodic/renewal.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace ergodic {

// SplitMix64: a splittable stream; particle k of run r draws from stream_key(seed, r, k).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) : state_(state) {}
  std::uint64_t next();
  double uniform_open();  // in (0, 1)

 private:
  std::uint64_t state_;
};

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t run, std::uint64_t particle);

struct SimulationRun {
  std::uint64_t seed = 0;
  std::uint64_t run_index = 0;
  DivisionRate rate = DivisionRate::constant(1.0);
  std::vector<double> initial{0.0};
  double horizon = 1.0;
  double majorant = 0.0;  // b*; 0 means sup of b on [0, max initial age + horizon]
  std::uint64_t population_cap = 10'000'000;
};

struct RunSummary {
  std::uint64_t population = 0;
  double f_sum = 0.0;  // Σ f(age) over the final population
  std::uint64_t divisions = 0;
  std::uint64_t candidates = 0;
  bool exploded = false;  // cap exceeded: statistics are partial
};

// Binary splitting at rate b(age) by thinning a Poisson(b*) clock; ages advance between events.
RunSummary simulate_summary(const SimulationRun& run, const std::function<double(double)>& f);
// Final ages, in depth-first birth order.
std::vector<double> simulate(const SimulationRun& run, bool* exploded = nullptr);

double rate_majorant(const SimulationRun& run);

struct McRecord {
  std::uint64_t run = 0;
  std::uint64_t population = 0;
  double estimate = 0.0;  // Σ f(age) in that run
};

struct McBatch {
  std::vector<McRecord> records;
  std::uint64_t exploded_runs = 0;
};

// n_runs independent runs from one particle of age x0; runs are spread over `jobs` threads and
// gathered in run order, so the output does not depend on `jobs`.
McBatch run_batch(const DivisionRate& rate, double x0, double t, int n_runs, std::uint64_t seed,
                  const std::function<double(double)>& f, int jobs = 1);

struct MeanReport {
  double mean = 0, se = 0, deterministic = 0, z = 0;
  int n_runs = 0;
  bool pass() const { return std::abs(mean - deterministic) <= 3.0 * se; }
};

// Mean population against m_t(x0) from the deterministic renewal semigroup.
MeanReport population_check(const McBatch& batch, double deterministic);

struct RatioReport {
  double ratio = 0, se = 0, deterministic = 0, z = 0;
  int n_runs = 0;
  bool inconclusive = false;  // no particle survived in any run
  bool pass() const { return !inconclusive && std::abs(ratio - deterministic) <= 3.0 * se; }
};

// Σ f / Σ 1 across runs with a delta-method standard error.
RatioReport many_to_one_check(const McBatch& batch, double deterministic);

// δ_x M_{0,t} f and m_t(x) from the renewal semigroup on `spacing`.
struct DeterministicMoments {
  double m = 0;
  double mf = 0;
};
DeterministicMoments deterministic_moments(const DivisionRate& rate, double x0, double t,
                                           const std::function<double(double)>& f, double spacing = 1.0 / 256);

// First candidate-accepted division time of a fresh particle, n samples.
std::vector<double> first_division_times(const DivisionRate& rate, double majorant, int n, std::uint64_t seed);

struct KsReport {
  double statistic = 0;
  double p_value = 0;
  bool pass(double level = 0.01) const { return p_value > level; }
};

// One-sample Kolmogorov–Smirnov against Exp(rate), asymptotic Kolmogorov p-value.
KsReport ks_exponential(std::vector<double> samples, double rate);

}  // namespace ergodic
