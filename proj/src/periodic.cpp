#include "ergodic/periodic.hpp"

#include <algorithm>
#include <cmath>

namespace ergodic {

namespace {

long period_steps_of(double period, double dt) {
  const double ratio = period / dt;
  const double k = std::round(ratio);
  if (k < 1 || std::abs(ratio - k) > 1e-9 * k) throw DomainError("periodic semigroup: T/dt must be a positive integer");
  return static_cast<long>(k);
}

Grid age_grid(double spacing, double a_max) {
  if (!(spacing > 0.0) || !(a_max > spacing)) throw std::invalid_argument("periodic semigroup: need 0 < spacing < a_max");
  const auto n = static_cast<Eigen::Index>(std::ceil(a_max / spacing - 1e-9));
  return Grid(0.0, static_cast<double>(n) * spacing, n);
}

}  // namespace

PeriodicRate PeriodicRate::time_only_rate(std::function<double(double)> b_of_t, double period, double b_upper) {
  PeriodicRate r;
  r.b_of_t = std::move(b_of_t);
  r.b = [f = r.b_of_t](double t, double) { return f(t); };
  r.period = period;
  r.b_upper = b_upper;
  r.time_only = true;
  return r;
}

PeriodicRate PeriodicRate::general(std::function<double(double, double)> b, double period, double b_upper, double A,
                                   double b_lower) {
  PeriodicRate r;
  r.b = std::move(b);
  r.period = period;
  r.b_upper = b_upper;
  r.A = A;
  r.b_lower = b_lower;
  return r;
}

PeriodicRenewalSemigroup::PeriodicRenewalSemigroup(PeriodicRate rate, double spacing, double a_max)
    : AgeStructuredSemigroup(age_grid(spacing, a_max), spacing), rate_(std::move(rate)) {
  if (!(rate_.period > 0.0)) throw std::invalid_argument("periodic semigroup: period must be positive");
  const long L = period_steps_of(rate_.period, dt_);
  const Eigen::Index n = grid_.n_cells;
  steps_.reserve(static_cast<std::size_t>(L));
  for (long k = 0; k < L; ++k) {
    StepRates r;
    for (int half = 0; half < 2; ++half) {
      const double tau = (static_cast<double>(k) + (half + 0.5) / 2.0) * dt_;
      VectorXd b(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        b[j] = rate_.b(tau, grid_.midpoint(j));
        if (!(b[j] >= 0.0) || b[j] > rate_.b_upper * (1 + 1e-12))
          throw DomainError("periodic semigroup: rate outside [0, b_upper]");
      }
      r.birth.push_back(2.0 * b);
      r.death.push_back(b);
    }
    steps_.push_back(build_age_step(r, dt_, n, n));
  }
}

const AgeStep& PeriodicRenewalSemigroup::step(long n, AgeStep&) const {
  const long L = period_steps();
  return steps_[static_cast<std::size_t>(((n % L) + L) % L)];
}

double floquet_lambda_time_only(const std::function<double(double)>& b_of_t, double period, int samples) {
  // Trapezoid on a periodic integrand: endpoints coincide, so it is a plain mean.
  double sum = 0.0;
  for (int k = 0; k < samples; ++k) sum += b_of_t(period * k / samples);
  return sum / samples;
}

double integrate_rate(const std::function<double(double)>& b_of_t, double s, double t, double period) {
  if (t <= s) return 0.0;
  const long n = 2 * std::max<long>(64, static_cast<long>(std::ceil((t - s) / period * 512.0)));
  const double h = (t - s) / static_cast<double>(n);
  double sum = b_of_t(s) + b_of_t(t);
  for (long k = 1; k < n; ++k) sum += (k % 2 ? 4.0 : 2.0) * b_of_t(s + static_cast<double>(k) * h);
  return sum * h / 3.0;
}

MonodromyResult monodromy_eigen(const KernelSemigroup& M, double period, double s, const HybridMeasure<double>& nu,
                                int k_max, double tol) {
  const PowerResult p = power_iterate_left(M, s, period, nu.projected(), tol, k_max);
  MonodromyResult out;
  out.Lambda = p.Lambda;
  out.lambda_F = std::log(p.Lambda) / period;
  out.period = period;
  out.gamma_ss = HybridMeasure<double>(M.grid(), p.vector);
  out.iterations = p.iterations;
  out.increment = p.increment;
  return out;
}

const VectorXd& FloquetFamily::gamma_at(double t, double dt) const {
  const long L = static_cast<long>(gamma.size());
  const long k = std::lround((t - s) / dt);
  if (k < 0) throw std::invalid_argument("FloquetFamily: t before s");
  return gamma[static_cast<std::size_t>(k % L)];
}

FloquetFamily floquet_family_build(const KernelSemigroup& M, const MonodromyResult& mono, double s, int h_periods,
                                   int probes) {
  const double dt = M.time_step();
  FloquetFamily F;
  F.lambda_F = mono.lambda_F;
  F.period = mono.period;
  F.s = s;
  const long L = std::lround(F.period / dt);
  if (L < 1) throw std::invalid_argument("floquet_family_build: bad period");
  F.period = static_cast<double>(L) * dt;

  VectorXd g = mono.gamma_ss.projected();
  for (long j = 0; j < L; ++j) {
    const double t = s + static_cast<double>(j) * dt;
    F.times.push_back(t);
    F.gamma.push_back(g);
    g = M.propagate(t, t + dt, g) * std::exp(-F.lambda_F * dt);
  }
  // g is now γ_{s,s+T}; compare the whole next period against the first.
  for (long j = 0; j < L; ++j) {
    const double t = s + F.period + static_cast<double>(j) * dt;
    F.periodicity_residual = std::max(F.periodicity_residual, tv_distance(g, F.gamma[static_cast<std::size_t>(j)]));
    g = M.propagate(t, t + dt, g) * std::exp(-F.lambda_F * dt);
  }

  for (int p = 1; p <= probes; ++p) {
    const long j = L * p / (probes + 1);
    const double t = s + static_cast<double>(j) * dt;
    const MonodromyResult own = monodromy_eigen(M, F.period, t, mono.gamma_ss);
    const VectorXd& gst = F.gamma[static_cast<std::size_t>(j)];
    F.eigen_residual = std::max(F.eigen_residual, tv_distance(VectorXd(gst / gst.sum()), own.gamma_ss.projected()));
  }

  const HarmonicProfile h = harmonic_extract(M, s, mono.gamma_ss, F.period * h_periods, 1e-8, h_periods);
  F.h_ss = h.h;
  F.normalization = mono.gamma_ss.projected().dot(F.h_ss.values);
  const VectorXd back = M.apply(s, s + F.period, F.h_ss.values) * std::exp(-F.lambda_F * F.period);
  F.h_periodicity_residual = (back - F.h_ss.values).cwiseAbs().maxCoeff();
  return F;
}

double rate_general(double A, double period, double b_lower, double b_upper) {
  if (!(period > 0.0) || !(b_lower > 0.0) || !(b_upper > 0.0) || A < 0.0)
    throw DomainError("rate_general: need T, b_lower, b_upper > 0 and A ≥ 0");
  const double T = period;
  const double denom = 1.0 / (2.0 * b_upper * T) + A / T + 3.0 + 1.0 / (-std::expm1(-b_lower * T));
  const double x = 2.0 * b_lower * T * std::exp(-b_upper * (3.0 * A + 8.0 * T)) / denom;
  return -std::log1p(-x) / (A + 2.0 * T);
}

double rate_sharp_time_only(const std::function<double(double)>& b_of_t, double s, double t, double period) {
  return 2.0 * integrate_rate(b_of_t, s, t, period);
}

GeneralNu general_nu_construct(const PeriodicRenewalSemigroup& M, double s) {
  const PeriodicRate& r = M.rate();
  const double dt = M.time_step(), T = r.period;
  const long L = M.period_steps();
  const Eigen::Index n = M.grid().n_cells;
  VectorXd acc = VectorXd::Zero(n);
  VectorXd e0 = VectorXd::Zero(n);
  e0[0] = 1.0;
  // Left-Riemann sum over τ = s + j dt.
  for (long j = 0; j < L; ++j) acc += dt * M.propagate(s + static_cast<double>(j) * dt, s + T, e0);
  GeneralNu out;
  out.mass = acc.sum();
  out.nu = HybridMeasure<double>(M.grid(), acc / out.mass);
  out.c = 2.0 * r.b_lower * T * std::exp(-3.0 * r.b_upper * (r.A + 2.0 * T));
  out.d = std::exp(-2.0 * r.b_upper * T) /
          (1.0 / (2.0 * r.b_upper * T) + r.A / T + 3.0 + 1.0 / (-std::expm1(-r.b_lower * T)));
  return out;
}

PeriodicMonotoneReport periodic_mass_monotone_check(const PeriodicRenewalSemigroup& M, double s, double horizon) {
  const double dt = M.time_step(), T = M.rate().period;
  const Eigen::Index n = M.grid().n_cells;
  const long K = std::lround(horizon / dt);
  PeriodicMonotoneReport rep;
  rep.worst_monotone = std::numeric_limits<double>::infinity();
  rep.worst_shift = -std::numeric_limits<double>::infinity();
  std::vector<VectorXd> m(static_cast<std::size_t>(K + 1));
  for (long k = 0; k <= K; ++k) {
    const double t = s + static_cast<double>(k) * dt;
    m[static_cast<std::size_t>(k)] = M.apply(s, t, VectorXd::Ones(n));
    ++rep.lattice_points;
    if (k > 0) {
      const VectorXd rel = (m[static_cast<std::size_t>(k)] - m[static_cast<std::size_t>(k - 1)]).cwiseQuotient(
          m[static_cast<std::size_t>(k - 1)]);
      rep.worst_monotone = std::min(rep.worst_monotone, rel.minCoeff());
    }
  }
  // m_{s+T,t} = m_{s,t−T} by periodicity of the steps.
  const long P = std::lround(T / dt);
  for (long k = P; k <= K; ++k) {
    const VectorXd ratio = m[static_cast<std::size_t>(k - P)].cwiseQuotient(m[static_cast<std::size_t>(k)]);
    rep.worst_shift = std::max(rep.worst_shift, ratio.maxCoeff() - 1.0);
  }
  rep.monotone = rep.worst_monotone >= -1e-12;
  rep.shift = rep.worst_shift <= 1e-12;
  return rep;
}

std::vector<double> floquet_decay_series(const KernelSemigroup& M, const FloquetFamily& F,
                                         const HybridMeasure<double>& mu, const std::vector<double>& times) {
  const double dt = M.time_step();
  const VectorXd a = mu.projected();
  const double mu_h = a.dot(F.h_ss.values);
  std::vector<double> out;
  VectorXd v = a;
  double now = F.s;
  for (double t : times) {
    v = M.propagate(now, t, v);
    now = t;
    const VectorXd scaled = v * std::exp(-F.lambda_F * (t - F.s));
    out.push_back(tv_distance(scaled, VectorXd(mu_h * F.gamma_at(t, dt))));
  }
  return out;
}

}  // namespace ergodic
