#include "ergodic/maxage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace ergodic {

namespace {

Grid maxage_grid(double a_inf, double spacing) {
  if (!(spacing > 0.0) || !(a_inf >= spacing)) throw ConfigError("maxage.spacing", "need 0 < spacing ≤ a_inf");
  const double ratio = a_inf / spacing;
  const auto n = static_cast<Eigen::Index>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(n)) > 1e-9 * ratio)
    throw ConfigError("maxage.spacing", "a_inf must be a whole number of cells");
  return Grid(0.0, static_cast<double>(n + 1) * spacing, n + 1);
}

// ∫_lo^hi e^{−λa} da
double exp_integral(double lambda, double lo, double hi) {
  const double L = hi - lo;
  if (std::abs(lambda * L) < 1e-300) return L;
  return std::exp(-lambda * lo) * -std::expm1(-lambda * L) / lambda;
}

}  // namespace

MaxAgeSchedule MaxAgeSchedule::saturating(double a0, double a_inf, double k) {
  if (!(a0 > 0.0) || !(a_inf > a0) || !(k > 0.0))
    throw ConfigError("maxage.schedule", "saturating schedule needs 0 < a0 < a_inf and k > 0");
  if (k * (a_inf - a0) > 1.0)
    throw ConfigError("maxage.schedule", "t − a_t must be strictly increasing: need k (a_inf − a0) ≤ 1");
  MaxAgeSchedule s;
  s.kind_ = "saturating";
  s.a0_ = a0;
  s.a_inf_ = a_inf;
  s.k_ = k;
  return s;
}

MaxAgeSchedule MaxAgeSchedule::linear_then_flat(double a0, double a_inf, double v) {
  if (!(a0 > 0.0) || !(a_inf > a0) || !(v > 0.0))
    throw ConfigError("maxage.schedule", "linear schedule needs 0 < a0 < a_inf and v > 0");
  if (!(v < 1.0)) throw ConfigError("maxage.schedule", "t − a_t must be strictly increasing: need v < 1");
  MaxAgeSchedule s;
  s.kind_ = "linear_then_flat";
  s.a0_ = a0;
  s.a_inf_ = a_inf;
  s.k_ = v;
  return s;
}

MaxAgeSchedule MaxAgeSchedule::constant(double a_inf) {
  if (!(a_inf > 0.0)) throw ConfigError("maxage.schedule", "a_inf must be positive");
  MaxAgeSchedule s;
  s.kind_ = "constant";
  s.a0_ = s.a_inf_ = a_inf;
  return s;
}

double MaxAgeSchedule::operator()(double t) const {
  if (kind_ == "saturating") return a_inf_ - (a_inf_ - a0_) * std::exp(-k_ * t);
  if (kind_ == "linear_then_flat") return std::min(a0_ + k_ * t, a_inf_);
  return a_inf_;
}

void MaxAgeSchedule::validate_lattice(double dt, double horizon) const {
  const long K = static_cast<long>(std::ceil(horizon / dt));
  double prev = (*this)(0.0);
  for (long k = 1; k <= K; ++k) {
    const double t = static_cast<double>(k) * dt, a = (*this)(t);
    if (a > a_inf_ * (1 + 1e-15) || a < prev || !(a - prev < dt))
      throw ConfigError("maxage.schedule", "t − a_t not strictly increasing at lattice resolution near t = " +
                                               std::to_string(t));
    prev = a;
  }
}

MaxAgeSemigroup::MaxAgeSemigroup(MaxAgeSchedule schedule, DivisionRate rate, double spacing)
    : AgeStructuredSemigroup(maxage_grid(schedule.a_inf(), spacing), spacing),
      schedule_(std::move(schedule)),
      rate_(std::move(rate)) {
  n_inf_ = grid_.n_cells - 1;
  b_lower_ = std::numeric_limits<double>::infinity();
  rate_.for_each_piece(0.0, schedule_.a_inf(), [&](const DivisionRate::Piece& p) {
    b_lower_ = std::min(b_lower_, p.value);
    return true;
  });
  b_upper_ = rate_.sup_on(schedule_.a_inf());
  if (!(b_lower_ > 0.0)) throw ConfigError("maxage.rate", "b must be bounded below by a positive constant");

  const Eigen::Index n = grid_.n_cells;
  VectorXd b(n);
  for (Eigen::Index j = 0; j < n; ++j) b[j] = j < n_inf_ ? rate_(grid_.midpoint(j)) : 0.0;
  const StepRates r{{b, b}, {VectorXd::Zero(n), VectorXd::Zero(n)}};
  for (Eigen::Index k = 1; k <= n_inf_; ++k) {
    hold_.push_back(build_age_step(r, dt_, k, k));
    if (k < n_inf_) grow_.push_back(build_age_step(r, dt_, k, k + 1));
  }
}

Eigen::Index MaxAgeSemigroup::active_cells(double t) const {
  const auto k = static_cast<Eigen::Index>(std::floor(schedule_(t) / dt_ + 0.5));
  return std::clamp<Eigen::Index>(k, 1, n_inf_);
}

Eigen::Index MaxAgeSemigroup::active_at_step(long n) const { return active_cells(static_cast<double>(n) * dt_); }

const AgeStep& MaxAgeSemigroup::step(long n, AgeStep&) const {
  const Eigen::Index now = active_at_step(n), next = active_at_step(n + 1);
  if (next == now) return hold_[static_cast<std::size_t>(now - 1)];
  if (next == now + 1) return grow_[static_cast<std::size_t>(now - 1)];
  throw ConfigError("maxage.schedule", "a_t moved by more than one cell in a step near t = " +
                                           std::to_string(static_cast<double>(n) * dt_));
}

MaxAgeSemigroup limit_semigroup(const MaxAgeSemigroup& M) {
  return MaxAgeSemigroup(MaxAgeSchedule::constant(M.schedule().a_inf()), M.rate(), M.time_step());
}

VectorXd duhamel_maxage(const MaxAgeSemigroup& M, const VectorXd& f, double s, double t) {
  VectorXd g = f;
  g.tail(g.size() - M.active_cells(t)).setZero();
  VectorXd out = duhamel_march(M, g, s, t);
  out.tail(out.size() - M.active_cells(s)).setZero();
  return out;
}

VectorXd duhamel_maxage_picard(const MaxAgeSemigroup& M, const VectorXd& f, double s, double t) {
  VectorXd g = f;
  g.tail(g.size() - M.active_cells(t)).setZero();
  VectorXd out = duhamel_picard(M, g, s, t);
  out.tail(out.size() - M.active_cells(s)).setZero();
  return out;
}

GronwallReport gronwall_check(const MaxAgeSemigroup& M, double s, double t, const std::vector<VectorXd>& f_samples) {
  GronwallReport rep;
  const double growth = std::exp(M.b_upper() * (t - s));
  const Eigen::Index active = M.active_cells(t);
  for (const VectorXd& f : f_samples) {
    ++rep.samples;
    const double norm = f.head(active).cwiseAbs().maxCoeff();
    if (norm == 0.0) continue;
    const VectorXd g = duhamel_maxage(M, f, s, t);
    rep.worst_ratio = std::max(rep.worst_ratio, g.cwiseAbs().maxCoeff() / (growth * norm));
  }
  return rep;
}

std::vector<VectorXd> random_unit_functions(const MaxAgeSemigroup& M, double t, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::Index n = M.grid().n_cells, active = M.active_cells(t);
  std::vector<VectorXd> out;
  for (int i = 0; i < count; ++i) {
    VectorXd f = VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < active; ++j) f[j] = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
    const double norm = f.cwiseAbs().maxCoeff();
    if (norm > 0.0) f /= norm;
    out.push_back(std::move(f));
  }
  return out;
}

H0Row h0_distance(const MaxAgeSemigroup& M, const MaxAgeSemigroup& N, double t, double r) {
  const double a_inf = M.schedule().a_inf();
  if (r < a_inf - 1e-12) throw DomainError("h0_distance: need r ≥ a_inf");
  H0Row row;
  row.t = t;
  row.r = r;
  row.gap = a_inf - M.schedule()(t);
  const double be = M.b_upper() * std::exp(M.b_upper() * r);
  row.bound = std::max(be, be * be * r) * row.gap;
  const Eigen::Index n = M.grid().n_cells, active = M.active_cells(t);
  for (Eigen::Index x = 0; x < active; ++x) {
    VectorXd e = VectorXd::Zero(n);
    e[x] = 1.0;
    row.distance = std::max(row.distance, tv_distance(M.propagate(t, t + r, e), N.propagate(0.0, r, e)));
  }
  return row;
}

LimitTriplet limit_triplet(const MaxAgeSemigroup& N, double tol) {
  if (!N.homogeneous()) throw std::invalid_argument("limit_triplet: needs the homogeneous limit semigroup");
  const Grid& g = N.grid();
  const Eigen::Index n = g.n_cells, m = N.cells_inf();
  const double a_inf = N.schedule().a_inf(), h = N.time_step();
  LimitTriplet out;

  auto F = [&](double lambda) {
    double acc = 0.0;
    N.rate().for_each_piece(0.0, a_inf, [&](const DivisionRate::Piece& p) {
      acc += p.value * exp_integral(lambda, p.lo, std::min(p.hi, a_inf));
      return true;
    });
    return acc - 1.0;
  };
  double lo = -1.0, hi = 1.0;
  while (F(lo) < 0.0) lo *= 2.0;
  while (F(hi) > 0.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (F(mid) > 0.0 ? lo : hi) = mid;
  }
  out.lambda_explicit = 0.5 * (lo + hi);
  VectorXd w = VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < m; ++j) w[j] = exp_integral(out.lambda_explicit, g.left(j), g.left(j) + h);
  out.gamma_explicit = HybridMeasure<double>(g, w / w.sum());

  // Power iteration over blocks of unit length, started from the closed form.
  const double block = std::max(1.0, h);
  const double snapped = static_cast<double>(std::lround(block / h)) * h;
  const PowerResult p = power_iterate_left(N, 0.0, snapped, out.gamma_explicit.projected(), tol, 200000);
  out.lambda = std::log(p.Lambda) / snapped;
  out.gamma = HybridMeasure<double>(g, p.vector);
  return out;
}

CouplingCertificate MaxAgeCertificate::coupling(int steps) const {
  if (!applicable) throw DomainError("maxage certificate not applicable: " + reason);
  CouplingCertificate cert;
  for (int i = 0; i <= steps; ++i) cert.times.push_back(s + step * i);
  cert.c.assign(static_cast<std::size_t>(steps), c);
  cert.d.assign(static_cast<std::size_t>(steps), d);
  cert.nu_i.assign(static_cast<std::size_t>(steps), nu);
  cert.alpha = 1.0 / (c * d);
  cert.beta = 1.0 / d;
  cert.nu = nu;
  cert.s0 = s;
  return cert;
}

MaxAgeCertificate maxage_certificate(const MaxAgeSemigroup& M, double s, double fallback_alpha) {
  MaxAgeCertificate out;
  out.s = s;
  const double a_s = M.schedule()(s), bl = M.b_lower(), bu = M.b_upper();
  out.delta = M.schedule().a_inf() - a_s;
  if (out.delta > a_s / 2.0) {
    out.reason = "s too small: a_inf − a_s > a_s/2";
    out.alpha = out.delta / 2.0;
  } else if (out.delta <= 0.0) {
    out.reason = "ceiling saturated: a_inf − a_s = 0, window falls back";
    out.alpha = fallback_alpha;
  } else {
    // The step 2Δ is rounded up to the lattice; any Δ' ∈ [a_inf − a_s, a_s/2] serves the proof.
    const double dt = M.time_step();
    const double widened = std::ceil(2.0 * out.delta / dt - 1e-9) * dt / 2.0;
    if (widened > a_s / 2.0) {
      out.reason = "s too small: lattice-rounded Δ exceeds a_s/2";
      out.alpha = out.delta / 2.0;
    } else {
      out.applicable = true;
      out.delta = widened;
    }
  }
  if (out.applicable) {
    out.alpha = out.delta / 2.0;
    out.step = 2.0 * out.delta;
    const double x = out.alpha * bl * std::exp(-bu * out.delta);
    out.c = std::min(x, x * x);
    const double e = std::exp(-out.alpha * bu);
    out.d = std::min(bl / bu * e, out.alpha * bl * bl * bl / (bu * bu) * e);
  }
  // ν uniform on [0, α], by overlap with each cell.
  const Grid& g = M.grid();
  const double h = g.spacing(), alpha = std::max(out.alpha, h);
  VectorXd w = VectorXd::Zero(g.n_cells);
  for (Eigen::Index j = 0; j < M.cells_inf(); ++j) w[j] = std::clamp(alpha - g.left(j), 0.0, h) / alpha;
  out.nu = HybridMeasure<double>(g, w / w.sum());
  return out;
}

ProfileReport profile_convergence(const MaxAgeSemigroup& M, double s, const std::vector<double>& horizons,
                                  double h_horizon, const HybridMeasure<double>& gamma) {
  ProfileReport rep;
  rep.cert = maxage_certificate(M, s);
  rep.h = harmonic_extract(M, s, rep.cert.nu, h_horizon, 1e-8, 8);
  rep.h_sup = rep.h.h.sup_norm();
  const Eigen::Index n = M.grid().n_cells, active = M.active_cells(s);
  const VectorXd nu = rep.cert.nu.projected(), g = gamma.projected();

  // Row x holds δ_x M_{s,now}.
  MatrixXd rows = MatrixXd::Identity(n, n).topRows(active);
  double now = s;
  for (double t : horizons) {
    for (Eigen::Index x = 0; x < active; ++x) rows.row(x) = M.propagate(now, t, rows.row(x).transpose()).transpose();
    now = t;
    const VectorXd m = rows.rowwise().sum();
    const double nu_m = nu.head(active).dot(m);
    ProfileRow row{t, 0.0};
    for (Eigen::Index x = 0; x < active; ++x)
      row.tv_gap = std::max(row.tv_gap, tv_distance(VectorXd(rows.row(x).transpose() / nu_m), VectorXd(rep.h.h.values[x] * g)));
    if (!rep.rows.empty() && !(row.tv_gap < rep.rows.back().tv_gap)) rep.strictly_decreasing = false;
    rep.rows.push_back(row);
  }
  rep.final_gap = rep.rows.empty() ? 0.0 : rep.rows.back().tv_gap;
  return rep;
}

}  // namespace ergodic
