#include "ergodic/diffusion.hpp"

#include "ergodic/age_structured.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace ergodic {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double gaussian(double u, double variance) {
  return std::exp(-u * u / (2.0 * variance)) / std::sqrt(2.0 * std::numbers::pi * variance);
}

// Uniform in (0,1) from the top 53 bits; portable across standard libraries.
double open_uniform(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

// Second antiderivative of the standard normal density: zΦ(z) + ϕ(z).
double psi(double z) { return 0.5 * z * std::erfc(-z / std::numbers::sqrt2) + kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// psi minus its affine part at 0, accurate near the origin.
double psi_centered(double z) {
  return 0.5 * z * std::erf(z / std::numbers::sqrt2) + kInvSqrt2Pi * std::expm1(-0.5 * z * z);
}

// ∫_{[0,h]}∫_{[c,c+h]} φ(y − x) dy dx for the centred Gaussian with standard deviation sd.
double cell_pair_mass(double c, double h, double sd) {
  const double a = std::abs(c);
  if (a >= h) {
    // Symmetric in c; evaluate where the antiderivative is small.
    return sd * (psi((h - a) / sd) - 2.0 * psi(-a / sd) + psi((-a - h) / sd));
  }
  return sd * (psi_centered((c + h) / sd) - 2.0 * psi_centered(c / sd) + psi_centered((c - h) / sd));
}

}  // namespace

SigmaSchedule SigmaSchedule::constant(double sigma) { return steps({0.0}, {sigma}); }

SigmaSchedule SigmaSchedule::steps(std::vector<double> knots, std::vector<double> values) {
  if (knots.empty() || knots.size() != values.size())
    throw std::invalid_argument("sigma schedule: knots and values must be non-empty and of equal length");
  if (knots.front() != 0.0) throw std::invalid_argument("sigma schedule: first knot must be 0");
  for (std::size_t k = 0; k < knots.size(); ++k) {
    if (!(values[k] >= 0.0) || !std::isfinite(values[k]))
      throw std::invalid_argument("sigma schedule: values must be finite and nonnegative");
    if (k && !(knots[k] > knots[k - 1])) throw std::invalid_argument("sigma schedule: knots must increase");
  }
  SigmaSchedule s;
  s.knots_ = std::move(knots);
  s.values_ = std::move(values);
  return s;
}

SigmaSchedule SigmaSchedule::on_off(std::uint64_t seed, double sigma_on, double mean_on, double mean_off,
                                    double horizon) {
  if (!(mean_on > 0.0) || !(mean_off > 0.0)) throw std::invalid_argument("sigma schedule: mean lengths must be positive");
  std::mt19937_64 rng(seed);
  std::vector<double> knots{0.0}, values{sigma_on};
  double t = 0.0;
  bool on = true;
  while (t < horizon) {
    t += -(on ? mean_on : mean_off) * std::log(open_uniform(rng));
    on = !on;
    knots.push_back(t);
    values.push_back(on ? sigma_on : 0.0);
  }
  return steps(std::move(knots), std::move(values));
}

double SigmaSchedule::operator()(double t) const {
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  if (it == knots_.begin()) return values_.front();
  return values_[static_cast<std::size_t>(it - knots_.begin()) - 1];
}

SigmaAccumulator::SigmaAccumulator(const SigmaSchedule& sigma) : knots_(sigma.knots()) {
  for (double v : sigma.values()) rates_.push_back(v * v);
  cum_.assign(knots_.size(), 0.0);
  for (std::size_t k = 1; k < knots_.size(); ++k) cum_[k] = cum_[k - 1] + rates_[k - 1] * (knots_[k] - knots_[k - 1]);
}

double SigmaAccumulator::cumulative(double t) const {
  if (t <= 0.0) return 0.0;
  const auto k = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), t) - knots_.begin()) - 1;
  return cum_[k] + rates_[k] * (t - knots_[k]);
}

double SigmaAccumulator::sigma_st(double s, double t) const {
  return std::sqrt(2.0 * std::numbers::pi * std::max(0.0, variance(s, t)));
}

double SigmaAccumulator::reach(double s, double v) const {
  if (v <= 0.0) return s;
  const double target = cumulative(s) + v;
  auto k = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), std::max(s, 0.0)) - knots_.begin()) - 1;
  for (; k < knots_.size(); ++k) {
    const bool last = k + 1 == knots_.size();
    if (!last && cum_[k + 1] < target) continue;
    if (rates_[k] <= 0.0) {
      if (last) return kInf;
      continue;
    }
    return std::max(s, knots_[k] + (target - cum_[k]) / rates_[k]);
  }
  return kInf;
}

double SigmaAccumulator::window_reach(double from, double window, double v, double until) const {
  if (from > until) return kInf;
  auto F = [&](double u) { return cumulative(u + window) - cumulative(u); };
  std::vector<double> breaks{from, until};
  for (double k : knots_) {
    for (double b : {k, k - window})
      if (b > from && b < until) breaks.push_back(b);
  }
  std::sort(breaks.begin(), breaks.end());
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i], b = breaks[i + 1];
    const double fa = F(a), fb = F(b);
    if (fa >= v) return a;
    if (fb >= v) return a + (v - fa) / (fb - fa) * (b - a);
  }
  return F(until) >= v ? until : kInf;
}

GrowthRate GrowthRate::constant(double r) { return tabulated({r}); }

GrowthRate GrowthRate::tabulated(std::vector<double> nodes) {
  if (nodes.empty()) throw std::invalid_argument("growth rate: no nodes");
  for (double v : nodes)
    if (!std::isfinite(v)) throw std::invalid_argument("growth rate: nodes must be finite");
  GrowthRate g;
  g.nodes_ = std::move(nodes);
  g.lower_ = *std::min_element(g.nodes_.begin(), g.nodes_.end());
  g.upper_ = *std::max_element(g.nodes_.begin(), g.nodes_.end());
  return g;
}

double GrowthRate::operator()(double x) const {
  if (nodes_.size() == 1) return nodes_[0];
  const double u = std::clamp(x, 0.0, 1.0) * static_cast<double>(nodes_.size() - 1);
  const auto k = std::min(static_cast<std::size_t>(u), nodes_.size() - 2);
  const double w = u - static_cast<double>(k);
  return (1.0 - w) * nodes_[k] + w * nodes_[k + 1];
}

double DiffusionEnv::kernel_variance(double ito_variance) const {
  if (convention == VarianceConvention::ito) return ito_variance;
  return std::sqrt(2.0 * std::numbers::pi * std::max(0.0, ito_variance));
}

int wrap_count(double variance) { return std::max(3, static_cast<int>(std::ceil(4.0 * std::sqrt(variance))) + 2); }

double reflected_density(double x, double y, double variance) {
  if (!(variance > 0.0)) throw DomainError("reflected_density: degenerate window (σ_{s,t} = 0), use the identity kernel");
  const int N = wrap_count(variance);
  double sum = 0.0;
  for (int n = -N; n <= N; ++n) sum += gaussian(y - x + 2.0 * n, variance) + gaussian(2.0 * n - y - x, variance);
  return sum;
}

double reflected_density(const DiffusionEnv& env, double x, double s, double t, double y) {
  const SigmaAccumulator acc(env.sigma);
  return reflected_density(x, y, env.kernel_variance(acc.variance(s, t)));
}

MatrixXd reflected_kernel(double variance, Eigen::Index n_cells) {
  if (variance <= 0.0) return MatrixXd::Identity(n_cells, n_cells);
  const double h = 1.0 / static_cast<double>(n_cells), sd = std::sqrt(variance);
  const int N = wrap_count(variance);
  // Direct images depend on j − i, mirrored ones on i + j.
  VectorXd direct(n_cells), mirrored(2 * n_cells - 1);
  for (Eigen::Index k = 0; k < n_cells; ++k) {
    double sum = 0.0;
    for (int n = -N; n <= N; ++n) sum += cell_pair_mass(static_cast<double>(k) * h + 2.0 * n, h, sd);
    direct[k] = sum / h;
  }
  for (Eigen::Index q = 0; q < 2 * n_cells - 1; ++q) {
    double sum = 0.0;
    for (int n = -N; n <= N; ++n) sum += cell_pair_mass(2.0 * n - static_cast<double>(q + 1) * h, h, sd);
    mirrored[q] = sum / h;
  }
  MatrixXd P(n_cells, n_cells);
  for (Eigen::Index i = 0; i < n_cells; ++i)
    for (Eigen::Index j = 0; j < n_cells; ++j) P(i, j) = std::max(0.0, direct[std::abs(j - i)] + mirrored[i + j]);
  return P;
}

double density_sup(double variance) {
  const int N = 2 * wrap_count(variance);
  double sum = gaussian(0.0, variance);
  for (int n = -N; n <= N; ++n) sum += gaussian(static_cast<double>(n), variance);
  return sum;
}

SandwichReport density_sandwich(double sigma_st, Eigen::Index n_cells, VarianceConvention convention) {
  if (!(sigma_st > 0.0)) throw DomainError("density_sandwich: need σ_{s,t} > 0");
  DiffusionEnv env;
  env.convention = convention;
  const double kvar = env.kernel_variance(sigma_st * sigma_st / (2.0 * std::numbers::pi));
  SandwichReport rep;
  rep.c = density_sup(kvar);
  rep.lower = std::max(0.0, rep.c - 4.0 / sigma_st);
  const MatrixXd P = reflected_kernel(kvar, n_cells);
  const double h = 1.0 / static_cast<double>(n_cells);
  rep.row_sum_error = (P.rowwise().sum().array() - 1.0).abs().maxCoeff();
  rep.lower_margin = P.minCoeff() / h - rep.lower;
  rep.upper_margin = rep.c - P.maxCoeff() / h;
  return rep;
}

DiffusionSemigroup::DiffusionSemigroup(DiffusionEnv env, Eigen::Index n_cells, double dt)
    : env_(std::move(env)), acc_(env_.sigma), grid_(0.0, 1.0, n_cells), dt_(dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("diffusion semigroup: dt must be positive");
  half_.resize(n_cells);
  for (Eigen::Index i = 0; i < n_cells; ++i) half_[i] = std::exp(env_.r(grid_.midpoint(i)) * dt_ / 2.0);
}

const MatrixXd& DiffusionSemigroup::kernel(long n) const {
  const double a = static_cast<double>(n) * dt_, b = a + dt_;
  // Inside one schedule piece the step variance is exactly σ²·dt, so equal steps share a kernel.
  double ito;
  const auto& knots = env_.sigma.knots();
  const auto ka = std::upper_bound(knots.begin(), knots.end(), a) - knots.begin();
  const auto kb = std::lower_bound(knots.begin(), knots.end(), b) - knots.begin();
  if (ka == kb) {
    const double s = env_.sigma(a);
    ito = s * s * dt_;
  } else {
    ito = acc_.variance(a, b);
  }
  const double key = env_.kernel_variance(ito);
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    if (cache_.size() > 256) cache_.clear();
    it = cache_.emplace(key, std::make_shared<const MatrixXd>(reflected_kernel(key, grid_.n_cells))).first;
  }
  return *it->second;
}

VectorXd DiffusionSemigroup::apply(double s, double t, const VectorXd& f) const {
  const long a = step_index(s), n = steps(s, t);
  VectorXd out = f;
  for (long k = a + n - 1; k >= a; --k) {
    out = half_.cwiseProduct(out);
    out = half_.cwiseProduct(kernel(k) * out);
  }
  return out;
}

VectorXd DiffusionSemigroup::propagate(double s, double t, const VectorXd& mu) const {
  const long a = step_index(s), n = steps(s, t);
  VectorXd out = mu;
  for (long k = a; k < a + n; ++k) {
    out = half_.cwiseProduct(out);
    out = half_.cwiseProduct(kernel(k).transpose() * out);
  }
  return out;
}

MatrixXd DiffusionSemigroup::matrix(double s, double t) const {
  const long a = step_index(s), n = steps(s, t);
  const Eigen::Index m = grid_.n_cells;
  auto step = [&](long k) -> MatrixXd { return half_.asDiagonal() * kernel(k) * half_.asDiagonal(); };
  MatrixXd out = MatrixXd::Identity(m, m);
  if (homogeneous()) {
    MatrixXd base = step(0);
    for (long e = n; e > 0; e >>= 1) {
      if (e & 1) out = out * base;
      if (e > 1) base = base * base;
    }
    return out;
  }
  for (long k = a; k < a + n; ++k) out = out * step(k);
  return out;
}

HybridMeasure<double> fk_propagate(const DiffusionEnv& env, const HybridMeasure<double>& mu, double s, double t,
                                   double dt) {
  if (mu.grid.lower != 0.0 || mu.grid.upper != 1.0) throw std::invalid_argument("fk_propagate: grid must be [0,1]");
  const DiffusionSemigroup D(env, mu.grid.n_cells, dt);
  return HybridMeasure<double>(mu.grid, D.propagate(s, t, mu.projected()));
}

double sigma_bar(const SigmaAccumulator& acc, double u, double v) {
  const double s = acc.sigma_st(u, v);
  return s > 4.0 ? 1.0 - 4.0 / s : 0.0;
}

double capacity_g(const DiffusionEnv& env, const SigmaAccumulator& acc, double u, double v) {
  const double sb = sigma_bar(acc, u, v);
  if (sb <= 0.0) return kInf;
  return (env.r.upper() - env.r.lower()) * (v - u) - std::log(sb);
}

CouplingCertificate coupling_constants_diffusion(const DiffusionEnv& env, const Grid& grid,
                                                 const std::vector<double>& times) {
  if (times.size() < 3) throw DomainError("coupling constants: need t_0 ≤ … ≤ t_{N+1} with N ≥ 1");
  const SigmaAccumulator acc(env.sigma);
  const std::size_t N = times.size() - 2;
  const double spread = env.r.upper() - env.r.lower();
  auto gap_ok = [&](std::size_t i) { return acc.sigma_st(times[i], times[i + 1]) > 4.0; };
  if (!gap_ok(0) || !gap_ok(N - 1) || !gap_ok(N))
    throw DomainError("coupling constants: σ ≤ 4 on the first or one of the last two gaps");

  auto c_of = [&](std::size_t i) {  // gap (t_{i-1}, t_i)
    return sigma_bar(acc, times[i - 1], times[i]) * std::exp(-spread * (times[i] - times[i - 1]));
  };
  CouplingCertificate cert;
  cert.times.assign(times.begin(), times.begin() + static_cast<long>(N + 1));
  const auto lebesgue = HybridMeasure<double>::uniform(grid);
  for (std::size_t i = 1; i <= N; ++i) {
    cert.c.push_back(c_of(i));
    cert.d.push_back(c_of(i + 1));
    cert.nu_i.push_back(lebesgue);
  }
  cert.alpha = std::exp(spread * (times[N + 1] - times[N - 1])) /
               (sigma_bar(acc, times[N - 1], times[N]) * sigma_bar(acc, times[N], times[N + 1]));
  cert.beta = std::exp(spread * (times[1] - times[0])) / sigma_bar(acc, times[0], times[1]);
  cert.nu = lebesgue;
  cert.s0 = times.front();
  return cert;
}

namespace {

constexpr double kWindowVariance = 100.0 / (2.0 * std::numbers::pi);  // σ_{u,v} = 10

double ceil_to(double t, double lattice) { return std::ceil(t / lattice - 1e-9) * lattice; }

}  // namespace

Subdivision subdivision_build(const DiffusionEnv& env, double s, double tau, double until, double lattice) {
  if (!(tau > 0.0)) throw std::invalid_argument("subdivision: tau must be positive");
  if (lattice > 0.0 && std::abs(tau / lattice - std::round(tau / lattice)) > 1e-9)
    throw DomainError("subdivision: tau must be a multiple of the lattice");
  const SigmaAccumulator acc(env.sigma);
  const double last_knot = env.sigma.knots().back();
  const double half_min = env.window_threshold * env.window_threshold / (2.0 * std::numbers::pi);
  Subdivision out;
  out.times.push_back(s);

  double t1 = acc.reach(s, kWindowVariance);
  if (lattice > 0.0 && std::isfinite(t1)) t1 = ceil_to(t1, lattice);
  out.t1 = t1;
  if (!std::isfinite(t1)) {
    out.exhausted = true;
    return out;
  }
  if (t1 > until) return out;
  out.times.push_back(t1);

  double prev = t1;
  while (true) {
    double u;
    if (lattice > 0.0) {
      u = kInf;
      for (double v = ceil_to(prev + tau, lattice); v + tau <= until + 1e-12; v += lattice) {
        if (acc.variance(v, v + tau) >= kWindowVariance) {
          // Split near half the window variance, keeping both halves above the threshold.
          const double mid = acc.reach(v, acc.variance(v, v + tau) / 2.0);
          double best = kInf, best_score = -kInf;
          for (double w : {std::floor(mid / lattice) * lattice, ceil_to(mid, lattice)}) {
            if (w <= v || w >= v + tau) continue;
            const double score = std::min(acc.variance(v, w), acc.variance(w, v + tau));
            if (score > best_score) best = w, best_score = score;
          }
          if (best_score >= half_min) {
            u = v;
            out.window_at.push_back(u);
            out.times.insert(out.times.end(), {u, best, u + tau});
            break;
          }
        }
        v = std::round(v / lattice) * lattice;
      }
    } else {
      u = acc.window_reach(prev + tau, tau, kWindowVariance, until - tau);
      if (std::isfinite(u)) {
        out.window_at.push_back(u);
        out.times.insert(out.times.end(), {u, acc.reach(u, acc.variance(u, u + tau) / 2.0), u + tau});
      }
    }
    if (!std::isfinite(u)) {
      out.exhausted = until - tau >= last_knot && acc.variance(last_knot, last_knot + tau) < kWindowVariance;
      return out;
    }
    prev = u;
  }
}

CapacityScore capacity_diffusion(const DiffusionEnv& env, const Subdivision& sub, double s, double t, double tau,
                                 double rho_window) {
  const SigmaAccumulator acc(env.sigma);
  const double spread = env.r.upper() - env.r.lower();
  CapacityScore score;
  score.tau = tau;
  score.gamma_tau = 5.0 * std::exp(spread * tau);
  score.rho_window = rho_window > 0.0 ? rho_window : sub.t1 - s;
  score.gamma_rho = 5.0 * std::exp(spread * score.rho_window);

  // Prefix s, t_1, then whole windows ending by t.
  std::vector<double> T;
  if (sub.times.size() >= 2 && sub.t1 - s <= score.rho_window + 1e-12) {
    T = {sub.times[0], sub.times[1]};
    for (std::size_t k = 2; k + 2 < sub.times.size() && sub.times[k + 2] <= t + 1e-12; k += 3)
      T.insert(T.end(), {sub.times[k], sub.times[k + 1], sub.times[k + 2]});
  }
  // Back-to-back windows share an endpoint; merging it keeps the subdivision admissible.
  T.erase(std::unique(T.begin(), T.end(), [](double x, double y) { return std::abs(x - y) < 1e-12; }), T.end());
  if (T.size() < 5) return score;

  auto constrained = [&](std::size_t i) { return acc.sigma_st(T[i], T[i + 1]) >= env.window_threshold * (1 - 1e-12); };
  const std::size_t N = T.size() - 2;
  if (!constrained(0) || !constrained(N - 1) || !constrained(N)) return score;

  double value = 0.0;
  for (std::size_t i = 1; i <= N; ++i) {
    const double g = capacity_g(env, acc, T[i - 1], T[i]) + capacity_g(env, acc, T[i], T[i + 1]);
    if (std::isfinite(g)) value -= std::log1p(-std::exp(-g));
  }
  score.subdivision = T;
  score.value = value;
  score.applicable = value >= 2.0 * std::log(2.0) + 2.0 * std::log(score.gamma_tau);
  return score;
}

CapacityScore capacity_diffusion(const DiffusionEnv& env, double s, double t, double tau, double rho_window,
                                 double lattice) {
  return capacity_diffusion(env, subdivision_build(env, s, tau, t, lattice), s, t, tau, rho_window);
}

std::vector<DiffusionGapRow> diffusion_gap_series(const DiffusionSemigroup& D, const HybridMeasure<double>& mu,
                                                  double s, double tau, const std::vector<double>& times,
                                                  double h_horizon, double s0) {
  std::vector<DiffusionGapRow> rows;
  if (times.empty()) return rows;
  const Grid& g = D.grid();
  const Eigen::Index n = g.n_cells;
  const Subdivision sub = subdivision_build(D.env(), s, tau, times.back());
  const auto lebesgue = HybridMeasure<double>::uniform(g);
  const HarmonicProfile h = harmonic_extract(D, s, lebesgue, h_horizon);

  const VectorXd a = mu.projected();
  const double mu_h = a.dot(h.h.values), abs_mu_h = a.cwiseAbs().dot(h.h.values);
  VectorXd muM = a, lamM = lebesgue.projected();
  VectorXd ref;
  double ref_time = s0;
  const bool perron = D.homogeneous();
  if (perron) {
    const double block = std::max(1.0, std::round(1.0 / D.time_step())) * D.time_step();
    ref = power_iterate_left(D, 0.0, block, VectorXd::Ones(n), 1e-14, 100000).vector;
  } else {
    ref = lebesgue.projected();
  }

  double now = s;
  for (double t : times) {
    muM = D.propagate(now, t, muM);
    lamM = D.propagate(now, t, lamM);
    now = t;
    if (!perron) {
      ref = D.propagate(ref_time, t, ref);
      ref_time = t;
    }
    const double lam_m = lamM.sum();
    const VectorXd pi = ref / ref.sum();
    DiffusionGapRow row;
    row.t = t;
    row.tv_gap = tv_distance(muM, VectorXd(mu_h * lam_m * pi));
    const CapacityScore score = capacity_diffusion(D.env(), sub, s, t, tau);
    row.capacity = score.value;
    row.applicable = score.applicable;
    if (score.applicable)
      row.bound = 8.0 * (2.0 + score.gamma_tau * score.gamma_tau) * abs_mu_h * lam_m * std::exp(-score.value);
    rows.push_back(row);
  }
  return rows;
}

double capacity_slope(const std::vector<double>& times, const std::vector<double>& capacities) {
  if (times.size() != capacities.size() || times.size() < 2) throw std::invalid_argument("capacity_slope: need ≥ 2 samples");
  const Eigen::Index k = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd A(k, 2);
  VectorXd y(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    A(i, 0) = times[static_cast<std::size_t>(i)];
    A(i, 1) = 1.0;
    y[i] = capacities[static_cast<std::size_t>(i)];
  }
  return A.colPivHouseholderQr().solve(y)[0];
}

}  // namespace ergodic
