#include "ergodic/branching.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace ergodic {

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform_open() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t run, std::uint64_t particle) {
  SplitMix64 a(seed);
  SplitMix64 b(a.next() ^ run);
  SplitMix64 c(b.next() ^ particle);
  return c.next();
}

double rate_majorant(const SimulationRun& run) {
  if (run.majorant > 0.0) return run.majorant;
  const double oldest = run.initial.empty() ? 0.0 : *std::max_element(run.initial.begin(), run.initial.end());
  return run.rate.sup_on(oldest + run.horizon);
}

namespace {

struct Pending {
  double age, time;
  std::uint64_t id;
};

template <typename Emit>
RunSummary walk(const SimulationRun& run, Emit&& emit) {
  if (!std::isfinite(run.horizon) || run.horizon < 0.0) throw DomainError("simulate: horizon must be finite");
  const double bstar = rate_majorant(run);
  if (!std::isfinite(bstar) || bstar < 0.0) throw DomainError("simulate: majorant must be finite");
  RunSummary out;
  std::vector<Pending> stack;
  // Ids follow birth order: initial particles first, in the order given; the stack pops the first one first.
  for (std::size_t i = run.initial.size(); i-- > 0;) {
    if (run.initial[i] < 0.0) throw DomainError("simulate: negative initial age");
    stack.push_back({run.initial[i], 0.0, static_cast<std::uint64_t>(i)});
  }
  std::uint64_t next_id = run.initial.size();

  while (!stack.empty()) {
    Pending p = stack.back();
    stack.pop_back();
    SplitMix64 rng(stream_key(run.seed, run.run_index, p.id));
    for (;;) {
      const double wait = bstar > 0.0 ? -std::log(rng.uniform_open()) / bstar : INFINITY;
      if (p.time + wait >= run.horizon) {
        emit(p.age + (run.horizon - p.time));
        ++out.population;
        break;
      }
      p.time += wait;
      p.age += wait;
      ++out.candidates;
      if (rng.uniform_open() * bstar < run.rate(p.age)) {
        ++out.divisions;
        stack.push_back({0.0, p.time, next_id + 1});
        stack.push_back({0.0, p.time, next_id});
        next_id += 2;
        break;
      }
    }
    if (out.population + stack.size() > run.population_cap) {
      out.exploded = true;
      break;
    }
  }
  return out;
}

}  // namespace

RunSummary simulate_summary(const SimulationRun& run, const std::function<double(double)>& f) {
  double sum = 0.0;
  RunSummary s = walk(run, [&](double age) { sum += f(age); });
  s.f_sum = sum;
  return s;
}

std::vector<double> simulate(const SimulationRun& run, bool* exploded) {
  std::vector<double> ages;
  const RunSummary s = walk(run, [&](double age) { ages.push_back(age); });
  if (exploded) *exploded = s.exploded;
  return ages;
}

McBatch run_batch(const DivisionRate& rate, double x0, double t, int n_runs, std::uint64_t seed,
                  const std::function<double(double)>& f, int jobs) {
  if (n_runs < 1) throw DomainError("run_batch: need at least one run");
  McBatch batch;
  batch.records.resize(static_cast<std::size_t>(n_runs));
  std::vector<char> exploded(static_cast<std::size_t>(n_runs), 0);
  auto work = [&](int lo, int hi) {
    SimulationRun run;
    run.seed = seed;
    run.rate = rate;
    run.initial = {x0};
    run.horizon = t;
    for (int i = lo; i < hi; ++i) {
      run.run_index = static_cast<std::uint64_t>(i);
      const RunSummary s = simulate_summary(run, f);
      batch.records[static_cast<std::size_t>(i)] = {run.run_index, s.population, s.f_sum};
      exploded[static_cast<std::size_t>(i)] = s.exploded;
    }
  };
  jobs = std::clamp(jobs, 1, n_runs);
  if (jobs == 1) {
    work(0, n_runs);
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(work, n_runs * j / jobs, n_runs * (j + 1) / jobs);
    for (auto& th : pool) th.join();
  }
  for (char e : exploded) batch.exploded_runs += e ? 1 : 0;
  return batch;
}

MeanReport population_check(const McBatch& batch, double deterministic) {
  MeanReport rep;
  rep.n_runs = static_cast<int>(batch.records.size());
  const double n = rep.n_runs;
  double sum = 0, sq = 0;
  for (const auto& r : batch.records) sum += static_cast<double>(r.population);
  rep.mean = sum / n;
  for (const auto& r : batch.records) sq += std::pow(static_cast<double>(r.population) - rep.mean, 2);
  rep.se = n > 1 ? std::sqrt(sq / (n - 1) / n) : INFINITY;
  rep.deterministic = deterministic;
  rep.z = (rep.mean - deterministic) / rep.se;
  return rep;
}

RatioReport many_to_one_check(const McBatch& batch, double deterministic) {
  RatioReport rep;
  rep.n_runs = static_cast<int>(batch.records.size());
  rep.deterministic = deterministic;
  const double n = rep.n_runs;
  double sx = 0, sy = 0;
  for (const auto& r : batch.records) {
    sx += r.estimate;
    sy += static_cast<double>(r.population);
  }
  if (sy == 0.0) {
    rep.inconclusive = true;
    return rep;
  }
  const double xb = sx / n, yb = sy / n;
  rep.ratio = sx / sy;
  double vxx = 0, vyy = 0, vxy = 0;
  for (const auto& r : batch.records) {
    const double dx = r.estimate - xb, dy = static_cast<double>(r.population) - yb;
    vxx += dx * dx;
    vyy += dy * dy;
    vxy += dx * dy;
  }
  vxx /= n - 1;
  vyy /= n - 1;
  vxy /= n - 1;
  const double R = rep.ratio;
  rep.se = std::sqrt(std::max(0.0, vxx - 2 * R * vxy + R * R * vyy) / n) / yb;
  rep.z = (rep.ratio - deterministic) / rep.se;
  return rep;
}

DeterministicMoments deterministic_moments(const DivisionRate& rate, double x0, double t,
                                           const std::function<double(double)>& f, double spacing) {
  const RenewalSemigroup R(rate, spacing);
  const Grid& g = R.grid();
  if (x0 >= g.upper) throw DomainError("deterministic_moments: x0 beyond the truncated age domain");
  const Eigen::Index cell = g.cell_of(x0);
  VectorXd fv(g.n_cells);
  for (Eigen::Index j = 0; j < g.n_cells; ++j) fv[j] = f(g.midpoint(j));
  const double tt = std::round(t / spacing) * spacing;
  DeterministicMoments out;
  out.m = R.apply(0.0, tt, VectorXd::Ones(g.n_cells))[cell];
  out.mf = R.apply(0.0, tt, fv)[cell];
  return out;
}

std::vector<double> first_division_times(const DivisionRate& rate, double majorant, int n, std::uint64_t seed) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SplitMix64 rng(stream_key(seed, static_cast<std::uint64_t>(i), 0));
    double age = 0.0;
    for (;;) {
      age += -std::log(rng.uniform_open()) / majorant;
      if (rng.uniform_open() * majorant < rate(age)) break;
    }
    out.push_back(age);
  }
  return out;
}

KsReport ks_exponential(std::vector<double> samples, double rate) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  KsReport rep;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double F = -std::expm1(-rate * samples[i]);
    rep.statistic = std::max({rep.statistic, (static_cast<double>(i) + 1) / n - F, F - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  const double lam = (sn + 0.12 + 0.11 / sn) * rep.statistic;
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) q += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
  rep.p_value = std::clamp(q, 0.0, 1.0);
  if (lam < 0.2) rep.p_value = 1.0;
  return rep;
}

}  // namespace ergodic
