#include "ergodic/semigroup.hpp"

#include <algorithm>
#include <cmath>

namespace ergodic {

namespace {

VectorXd ones(Eigen::Index n) { return VectorXd::Ones(n); }

VectorXd unit(Eigen::Index n, Eigen::Index i) {
  VectorXd e = VectorXd::Zero(n);
  e[i] = 1.0;
  return e;
}

double active_max(const VectorXd& v, Eigen::Index active) { return v.head(active).maxCoeff(); }

void require_positive(const VectorXd& m, Eigen::Index active, double s, double t) {
  for (Eigen::Index i = 0; i < active; ++i) {
    if (!(m[i] > 0.0)) {
      throw StrongPositivityError("m_{s,t} not positive at cell " + std::to_string(i) + " (s=" + std::to_string(s) +
                                  ", t=" + std::to_string(t) + ")");
    }
  }
}

// Snap a horizon to the lattice, never below `floor`.
double snap(const KernelSemigroup& M, double tau, double floor) {
  const double dt = M.time_step();
  double k = std::round(tau / dt);
  double snapped = k * dt;
  if (snapped < floor) snapped = floor;
  return snapped;
}

}  // namespace

long KernelSemigroup::step_index(double t) const {
  const double x = t / time_step();
  const double k = std::round(x);
  if (std::abs(x - k) > 1e-7 * std::max(1.0, std::abs(k))) {
    throw LatticeError("time " + std::to_string(t) + " is not a multiple of dt=" + std::to_string(time_step()));
  }
  return static_cast<long>(k);
}

long KernelSemigroup::steps(double s, double t) const {
  if (t < s) throw std::invalid_argument("semigroup: need t >= s");
  return step_index(t) - step_index(s);
}

MatrixXd KernelSemigroup::matrix(double s, double t) const {
  const Eigen::Index n = grid().n_cells;
  MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = propagate(s, t, unit(n, i)).transpose();
  return out;
}

StepMatrixSemigroup::StepMatrixSemigroup(Grid grid, std::vector<MatrixXd> step_matrices, double dt)
    : grid_(grid), steps_(std::move(step_matrices)), dt_(dt) {
  if (steps_.empty()) throw std::invalid_argument("StepMatrixSemigroup: no step matrices");
  for (const auto& K : steps_) {
    if (K.rows() != grid_.n_cells || K.cols() != grid_.n_cells)
      throw std::invalid_argument("StepMatrixSemigroup: matrix size does not match grid");
    if ((K.array() < 0.0).any()) throw std::invalid_argument("StepMatrixSemigroup: negative entry");
  }
}

VectorXd StepMatrixSemigroup::apply(double s, double t, const VectorXd& f) const {
  const long a = step_index(s), n = steps(s, t);
  const long L = static_cast<long>(steps_.size());
  VectorXd out = f;
  for (long k = a + n - 1; k >= a; --k) out = steps_[static_cast<std::size_t>(k % L)] * out;
  return out;
}

VectorXd StepMatrixSemigroup::propagate(double s, double t, const VectorXd& mu) const {
  const long a = step_index(s), n = steps(s, t);
  const long L = static_cast<long>(steps_.size());
  VectorXd out = mu;
  for (long k = a; k < a + n; ++k) out = steps_[static_cast<std::size_t>(k % L)].transpose() * out;
  return out;
}

MatrixXd StepMatrixSemigroup::matrix(double s, double t) const {
  const long a = step_index(s), n = steps(s, t);
  const long L = static_cast<long>(steps_.size());
  MatrixXd out = MatrixXd::Identity(grid_.n_cells, grid_.n_cells);
  for (long k = a; k < a + n; ++k) out = out * steps_[static_cast<std::size_t>(k % L)];
  return out;
}

GridFunction<double> mass(const KernelSemigroup& M, double s, double t) {
  VectorXd m = M.apply(s, t, ones(M.grid().n_cells));
  require_positive(m, M.active_cells(s), s, t);
  return GridFunction<double>(M.grid(), std::move(m));
}

GridFunction<double> auxiliary_apply(const KernelSemigroup& M, double t_final, double s, double u,
                                     const GridFunction<double>& f) {
  if (!(s <= u && u <= t_final)) throw std::invalid_argument("auxiliary_apply: need s <= u <= t_final");
  if (f.grid != M.grid()) throw GridMismatch();
  const Eigen::Index n = M.grid().n_cells;
  const VectorXd m_ut = M.apply(u, t_final, ones(n));
  const VectorXd m_st = M.apply(s, t_final, ones(n));
  const Eigen::Index active = M.active_cells(s);
  require_positive(m_st, active, s, t_final);
  VectorXd out = M.apply(s, u, f.values.cwiseProduct(m_ut));
  for (Eigen::Index i = 0; i < n; ++i) out[i] = i < active ? out[i] / m_st[i] : 0.0;
  return GridFunction<double>(M.grid(), std::move(out));
}

HybridMeasure<double> auxiliary_propagate(const KernelSemigroup& M, double t_final, double s, double u,
                                          const HybridMeasure<double>& mu) {
  if (!(s <= u && u <= t_final)) throw std::invalid_argument("auxiliary_propagate: need s <= u <= t_final");
  if (mu.grid != M.grid()) throw GridMismatch();
  const Eigen::Index n = M.grid().n_cells;
  const VectorXd m_ut = M.apply(u, t_final, ones(n));
  const VectorXd m_st = M.apply(s, t_final, ones(n));
  const Eigen::Index active = M.active_cells(s);
  require_positive(m_st, active, s, t_final);
  VectorXd w = mu.projected();
  for (Eigen::Index i = 0; i < n; ++i) w[i] = i < active ? w[i] / m_st[i] : 0.0;
  return HybridMeasure<double>(M.grid(), M.propagate(s, u, w).cwiseProduct(m_ut));
}

double doeblin_constant(const KernelSemigroup& M, double s, double t, const HybridMeasure<double>& nu) {
  if (nu.grid != M.grid()) throw GridMismatch();
  const Eigen::Index n = M.grid().n_cells;
  const Eigen::Index active = M.active_cells(s);
  const VectorXd w = nu.projected();
  std::vector<Eigen::Index> support;
  for (Eigen::Index j = 0; j < n; ++j)
    if (w[j] > 0.0) support.push_back(j);
  if (support.empty()) return 0.0;

  const VectorXd m = M.apply(s, t, ones(n));
  double c = 1.0;
  auto visit = [&](Eigen::Index j, const VectorXd& column) {
    for (Eigen::Index x = 0; x < active; ++x) {
      if (!(m[x] > 0.0)) return void(c = 0.0);
      c = std::min(c, column[x] / (m[x] * w[j]));
    }
  };
  if (static_cast<Eigen::Index>(support.size()) * 4 > n) {
    const MatrixXd K = M.matrix(s, t);
    for (Eigen::Index j : support) visit(j, K.col(j));
  } else {
    for (Eigen::Index j : support) visit(j, M.apply(s, t, unit(n, j)));
  }
  return std::clamp(c, 0.0, 1.0);
}

double mass_domination(const KernelSemigroup& M, const HybridMeasure<double>& nu, double s,
                       const std::vector<double>& horizons) {
  if (horizons.empty()) throw std::invalid_argument("mass_domination: no horizons");
  if (nu.grid != M.grid()) throw GridMismatch();
  const Eigen::Index n = M.grid().n_cells;
  const Eigen::Index active = M.active_cells(s);
  const VectorXd w = nu.projected();
  double d = 1.0;
  for (double tau : horizons) {
    if (tau < s) throw std::invalid_argument("mass_domination: horizon before s");
    const VectorXd m = M.apply(s, tau, ones(n));
    d = std::min(d, w.dot(m) / active_max(m, active));
  }
  return std::clamp(d, 0.0, 1.0);
}

void ConditionCheck::record(double margin, double slack) {
  worst_margin = std::min(worst_margin, margin);
  if (margin < -slack) pass = false;
}

AdmissibilityReport certify_admissible(const KernelSemigroup& M, const CouplingCertificate& cert, double s,
                                       double t, std::vector<double> horizons, double slack) {
  AdmissibilityReport rep;
  const std::size_t N = cert.steps();
  rep.alpha_ok = cert.alpha >= 1.0;
  rep.beta_ok = cert.beta >= 1.0;
  rep.shape_ok = N >= 1 && cert.times.size() == N + 1 && cert.d.size() == N && cert.nu_i.size() == N;
  if (rep.shape_ok) {
    rep.shape_ok = cert.times.front() >= s - 1e-12 && cert.times.back() <= t + 1e-12;
    for (std::size_t i = 1; i <= N; ++i) {
      rep.shape_ok = rep.shape_ok && cert.times[i - 1] <= cert.times[i];
      rep.shape_ok = rep.shape_ok && cert.c[i - 1] >= 0 && cert.c[i - 1] <= 1 && cert.d[i - 1] >= 0 && cert.d[i - 1] <= 1;
    }
  }
  if (!rep.shape_ok) return rep;

  const double tN = cert.times.back();
  if (horizons.empty()) {
    for (int k = 0; k <= 4; ++k) horizons.push_back(snap(M, tN + (t - tN) * k / 4.0, tN));
    std::sort(horizons.begin(), horizons.end());
    horizons.erase(std::unique(horizons.begin(), horizons.end()), horizons.end());
  }
  rep.horizons = horizons;
  const Eigen::Index n = M.grid().n_cells;

  for (std::size_t i = 1; i <= N; ++i) {
    const double c_hat = doeblin_constant(M, cert.times[i - 1], cert.times[i], cert.nu_i[i - 1]);
    rep.a1.record(c_hat - cert.c[i - 1], slack);
  }
  for (double tau : horizons) {
    for (std::size_t i = 1; i <= N; ++i) {
      const VectorXd m = M.apply(cert.times[i], tau, ones(n));
      const double sup = active_max(m, M.active_cells(cert.times[i]));
      rep.a2.record(cert.nu_i[i - 1].projected().dot(m) / sup - cert.d[i - 1], slack);
      if (i == N) rep.a3.record((cert.alpha * cert.c[N - 1] * cert.nu_i[N - 1].projected().dot(m) - sup) / sup, slack);
    }
    const VectorXd m = M.apply(s, tau, ones(n));
    const double sup = active_max(m, M.active_cells(s));
    rep.a4.record((cert.beta * cert.nu.projected().dot(m) - sup) / sup, slack);
  }
  return rep;
}

double capacity(const std::vector<double>& c, const std::vector<double>& d) {
  if (c.size() != d.size()) throw std::invalid_argument("capacity: c and d differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double cd = c[i] * d[i];
    if (cd >= 1.0) return std::numeric_limits<double>::infinity();
    sum -= std::log1p(-cd);
  }
  return sum;
}

double capacity(const CouplingCertificate& cert) { return capacity(cert.c, cert.d); }

ContractionReport contraction_check(const KernelSemigroup& M, const CouplingCertificate& cert,
                                    const HybridMeasure<double>& mu, const HybridMeasure<double>& mu_tilde,
                                    double tau, double slack) {
  if (cert.times.empty()) throw std::invalid_argument("contraction_check: empty certificate");
  if (tau < cert.times.back()) throw std::invalid_argument("contraction_check: need tau >= t_N");
  const double s = cert.times.front();
  const Eigen::Index n = M.grid().n_cells;
  double prod = 1.0;
  for (std::size_t i = 0; i < cert.steps(); ++i) prod *= 1.0 - cert.c[i] * cert.d[i];

  const VectorXd a = mu.projected(), b = mu_tilde.projected();
  const double scale = a.cwiseAbs().sum() + b.cwiseAbs().sum();
  if (std::abs(a.sum() - b.sum()) > 1e-12 * std::max(1.0, scale))
    throw DomainError("contraction_check: part (ii) needs measures of equal total mass");

  const VectorXd m = M.apply(s, tau, ones(n));
  require_positive(m, M.active_cells(s), s, tau);
  ContractionReport rep;
  const VectorXd pa = M.propagate(s, tau, a.cwiseQuotient(m));
  const VectorXd pb = M.propagate(s, tau, b.cwiseQuotient(m));
  rep.lhs_ii = tv_distance(pa, pb);
  rep.rhs_ii = prod * tv_distance(a, b);
  rep.pass_ii = rep.lhs_ii <= rep.rhs_ii * (1 + slack) + 1e-13 * scale;

  rep.iii_applicable = !(a.array() < 0).any() && !(b.array() < 0).any() && a.sum() > 0 && b.sum() > 0;
  if (!rep.iii_applicable) return rep;
  const VectorXd na = M.propagate(s, tau, a), nb = M.propagate(s, tau, b);
  rep.lhs_iii = tv_distance(VectorXd(na / na.sum()), VectorXd(nb / nb.sum()));
  rep.rhs_iii = 2.0 * prod;
  rep.pass_iii = rep.lhs_iii <= rep.rhs_iii * (1 + slack) + 1e-13;
  return rep;
}

double mass_lower_bound(const KernelSemigroup& M, const CouplingCertificate& cert, double s,
                        const HybridMeasure<double>& mu, double tau) {
  const double tN = cert.times.back();
  const Eigen::Index n = M.grid().n_cells;
  const VectorXd muM = M.propagate(s, tN, mu.projected());
  const VectorXd m = M.apply(tN, tau, ones(n));
  return muM.dot(m) / (muM.sum() * active_max(m, M.active_cells(tN)));
}

HarmonicProfile harmonic_extract(const KernelSemigroup& M, double s, const HybridMeasure<double>& nu,
                                 double horizon, double tol, int samples) {
  if (samples < 2) throw std::invalid_argument("harmonic_extract: need at least two samples");
  const Eigen::Index n = M.grid().n_cells;
  const VectorXd w = nu.projected();
  HarmonicProfile out;
  out.s = s;
  out.nu = nu;
  VectorXd prev, ratio;
  const Eigen::Index active = M.active_cells(s);
  for (int k = 1; k <= samples; ++k) {
    const double tau = snap(M, s + horizon * k / samples, s);
    const VectorXd m = M.apply(s, tau, ones(n));
    ratio = m / w.dot(m);
    if (k > 1) out.increments.push_back((ratio - prev).head(active).cwiseAbs().maxCoeff());
    prev = ratio;
    out.horizon = tau - s;
  }
  if (out.increments.back() > tol)
    throw NotConvergedError("harmonic_extract: capacity not diverged at the horizon", out.increments.back());
  for (Eigen::Index i = active; i < n; ++i) ratio[i] = 0.0;
  out.h = GridFunction<double>(M.grid(), ratio);
  return out;
}

GapReport ergodic_gap(const KernelSemigroup& M, double s, double t, const HybridMeasure<double>& mu,
                      const CouplingCertificate& cert, const HarmonicProfile& h,
                      const HybridMeasure<double>& gamma_ref, double s0) {
  const Eigen::Index n = M.grid().n_cells;
  const VectorXd a = mu.projected();
  const VectorXd muM = M.propagate(s, t, a);
  const VectorXd m = M.apply(s, t, ones(n));
  const double nu_m = cert.nu.projected().dot(m);
  const VectorXd gM = M.propagate(s0, t, gamma_ref.projected());
  const double mu_h = a.dot(h.h.values);

  GapReport rep;
  rep.lhs = tv_distance(muM, VectorXd(mu_h * nu_m * gM / gM.sum()));
  rep.capacity = capacity(cert);
  const double decay = std::exp(-rep.capacity);
  rep.sharp = rep.capacity >= std::log(4.0 * cert.alpha);
  if (rep.sharp) {
    rep.rhs = 8.0 * (2.0 + cert.alpha) * a.cwiseAbs().dot(h.h.values) * nu_m * decay;
  } else {
    rep.rhs = 2.0 * (2.0 + cert.alpha) * cert.beta * a.cwiseAbs().sum() * nu_m * decay;
  }
  return rep;
}

RateFit rate_fit(const std::vector<double>& times, const std::vector<double>& errors, double transient_fraction) {
  if (times.size() != errors.size()) throw std::invalid_argument("rate_fit: size mismatch");
  if (times.size() < 5) throw std::invalid_argument("rate_fit: need at least 5 samples");
  RateFit fit;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (errors[i] > 0.0 && std::isfinite(errors[i])) {
      x.push_back(times[i]);
      y.push_back(std::log(errors[i]));
    } else {
      ++fit.dropped_nonpositive;
    }
  }
  if (fit.dropped_nonpositive)
    fit.warnings.push_back("dropped " + std::to_string(fit.dropped_nonpositive) + " nonpositive error samples");
  const auto skip = static_cast<std::size_t>(std::floor(transient_fraction * static_cast<double>(x.size())));
  x.erase(x.begin(), x.begin() + static_cast<long>(skip));
  y.erase(y.begin(), y.begin() + static_cast<long>(skip));
  if (x.size() < 2) throw std::invalid_argument("rate_fit: too few positive samples after the transient");

  const Eigen::Index k = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd A(k, 2);
  Eigen::VectorXd rhs(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    A(i, 0) = x[static_cast<std::size_t>(i)];
    A(i, 1) = 1.0;
    rhs[i] = y[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector2d coef = A.colPivHouseholderQr().solve(rhs);
  fit.slope = coef[0];
  fit.intercept = coef[1];
  fit.residual = std::sqrt((A * coef - rhs).squaredNorm() / static_cast<double>(k));
  fit.used = x.size();
  return fit;
}

}  // namespace ergodic
