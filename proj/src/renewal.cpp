#include "ergodic/renewal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ergodic {

namespace {

double expint(double k, double L) {
  const double x = k * L;
  if (std::abs(x) < 1e-300) return L;
  return -std::expm1(-x) / k;
}

// ∫_a^{to} w(a') e^{-λ(a'-a) - ∫_a^{a'} b}, with w = b (with_b) or 1; stops once the
// discount factor falls below e^{-60}.
double discounted(const DivisionRate& rate, double lambda, double a, double to, bool with_b) {
  double acc = 0.0, expo = 0.0;
  rate.for_each_piece(a, to, [&](const DivisionRate::Piece& pc) {
    const double k = lambda + pc.value, L = pc.hi - pc.lo;
    const double w = with_b ? pc.value : 1.0;
    if (w != 0.0) acc += w * std::exp(-expo) * expint(k, L);
    expo += k * L;
    return expo < 60.0;
  });
  return acc;
}

constexpr double kFar = 1e4;

Grid renewal_grid(const DivisionRate& rate, double spacing, double a_max) {
  if (!(spacing > 0)) throw std::invalid_argument("renewal: spacing must be positive");
  if (a_max <= 0) a_max = default_a_max(rate);
  const auto n = static_cast<Eigen::Index>(std::ceil(a_max / spacing - 1e-9));
  return Grid(0.0, static_cast<double>(n) * spacing, n);
}

}  // namespace

DivisionRate DivisionRate::constant(double b) {
  if (!(b >= 0)) throw DomainError("division rate must be nonnegative");
  DivisionRate r;
  r.kind_ = "constant";
  r.b_on_ = r.b_off_ = b;
  r.crenel_ = {0.0, 1.0, 1.0, b};
  return r;
}

DivisionRate DivisionRate::crenel(const CrenelParams& c, double b_on, double b_off) {
  if (!(b_on >= 0 && b_off >= 0)) throw DomainError("division rate must be nonnegative");
  if (!(c.p > 0 && c.l > 0 && c.l <= c.p && c.a0 >= 0)) throw DomainError("crenel: need 0 < l <= p, a0 >= 0");
  DivisionRate r;
  r.kind_ = "crenel";
  r.crenel_ = c;
  r.b_on_ = b_on;
  r.b_off_ = b_off;
  return r;
}

DivisionRate DivisionRate::tabulated(std::vector<double> values, double step, const CrenelParams& c) {
  if (values.empty() || !(step > 0)) throw DomainError("tabulated rate: need values and a positive step");
  for (double v : values)
    if (!(v >= 0) || !std::isfinite(v)) throw DomainError("division rate must be finite and nonnegative");
  DivisionRate r;
  r.kind_ = "tabulated";
  r.crenel_ = c;
  r.table_ = std::move(values);
  r.step_ = step;
  return r;
}

DivisionRate DivisionRate::custom(const std::function<double(double)>& b, double extent, double step,
                                  const CrenelParams& c) {
  const auto n = static_cast<std::size_t>(std::ceil(extent / step));
  std::vector<double> v(std::max<std::size_t>(n, 1));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = b((static_cast<double>(i) + 0.5) * step);
  DivisionRate r = tabulated(std::move(v), step, c);
  r.kind_ = "custom";
  return r;
}

void DivisionRate::for_each_piece(double lo, double hi, const std::function<bool(const Piece&)>& fn) const {
  if (kind_ == "constant") {
    if (lo < hi) fn({lo, hi, b_on_});
    return;
  }
  double x = lo;
  while (x < hi) {
    double value, end;
    if (kind_ == "crenel") {
      const auto& c = crenel_;
      if (x < c.a0) {
        value = b_off_;
        end = c.a0;
      } else {
        double k = std::floor((x - c.a0) / c.p);
        double base = c.a0 + k * c.p;
        if (x >= base + c.p) base += c.p;  // rounding in floor
        if (x < base + c.l) {
          value = b_on_;
          end = base + c.l;
        } else {
          value = b_off_;
          end = base + c.p;
        }
      }
    } else {
      const auto i = static_cast<std::size_t>(std::floor(x / step_ + 1e-12));
      if (i + 1 >= table_.size()) {
        value = table_.back();
        end = hi;
      } else {
        value = table_[i];
        end = static_cast<double>(i + 1) * step_;
      }
    }
    if (!(end > x)) end = std::nextafter(x, std::numeric_limits<double>::infinity());
    end = std::min(end, hi);
    if (!fn({x, end, value})) return;
    x = end;
  }
}

double DivisionRate::operator()(double a) const {
  double v = 0.0;
  for_each_piece(a, a + 1e-9, [&](const Piece& pc) {
    v = pc.value;
    return false;
  });
  return v;
}

double DivisionRate::integral(double a) const {
  double s = 0.0;
  for_each_piece(0.0, a, [&](const Piece& pc) {
    s += pc.value * (pc.hi - pc.lo);
    return true;
  });
  return s;
}

double DivisionRate::sup_on(double a) const {
  double s = (*this)(0.0);
  for_each_piece(0.0, a, [&](const Piece& pc) {
    s = std::max(s, pc.value);
    return true;
  });
  return s;
}

bool DivisionRate::satisfies_crenel(double up_to) const {
  const auto& c = crenel_;
  if (!(c.b_lower > 0 && c.l > c.p / 2 && c.l <= c.p)) return false;
  for (double base = c.a0; base <= up_to; base += c.p) {
    bool ok = true;
    for_each_piece(base, base + c.l, [&](const Piece& pc) {
      ok = ok && pc.value >= c.b_lower * (1 - 1e-12);
      return ok;
    });
    if (!ok) return false;
  }
  return true;
}

double default_a_max(const DivisionRate& rate) {
  const auto& c = rate.crenel_params();
  if (!(c.b_lower > 0 && c.p > 0)) throw DomainError("a_max rule needs b_lower > 0 and p > 0");
  double a = c.a0 + c.p * std::ceil((12.0 / c.b_lower + c.l) / c.p);
  // End on a crenel so the saturating last cell keeps dividing.
  a += c.l - c.p;
  const double target = 13.0 * std::log(10.0);
  for (int guard = 0; rate.integral(a) < target; ++guard) {
    if (guard > 100000) throw DomainError("a_max rule: survival does not decay");
    a += c.p;
  }
  return a;
}

RenewalSemigroup::RenewalSemigroup(DivisionRate rate, double spacing, double a_max)
    : AgeStructuredSemigroup(renewal_grid(rate, spacing, a_max), spacing), rate_(std::move(rate)) {
  const Eigen::Index n = grid_.n_cells;
  VectorXd b(n);
  for (Eigen::Index j = 0; j < n; ++j) b[j] = rate_(grid_.midpoint(j));
  StepRates r{{2.0 * b, 2.0 * b}, {b, b}};
  step_ = build_age_step(r, spacing, n, n);
}

GridFunction<double> duhamel_apply(const RenewalSemigroup& R, const GridFunction<double>& f, double t) {
  if (f.grid != R.grid()) throw GridMismatch();
  VectorXd v = duhamel_march(R, f.values, 0.0, t);
  return GridFunction<double>(R.grid(), std::move(v));
}

double malthus_lambda(const DivisionRate& rate, double a_max, double tol) {
  if (a_max <= 0) a_max = default_a_max(rate);
  auto F = [&](double lambda) {
    double acc = 0.0, expo = 0.0;
    rate.for_each_piece(0.0, a_max, [&](const DivisionRate::Piece& pc) {
      const double k = lambda + pc.value, L = pc.hi - pc.lo;
      if (pc.value != 0.0) acc += pc.value * std::exp(-expo) * expint(k, L);
      expo += k * L;
      return true;
    });
    return 2.0 * acc - 1.0;
  };
  const double bsup = rate.sup_on(a_max);
  double lo = -bsup, hi = 2.0 * bsup + 1.0;
  for (int widen = 0; !(F(lo) > 0.0 && F(hi) < 0.0); ++widen) {
    if (widen > 60) throw DomainError("malthus_lambda: bracket failure (a_max too small?)");
    const double w = hi - lo;
    if (!(F(lo) > 0.0)) lo -= w;
    if (!(F(hi) < 0.0)) hi += w;
  }
  for (int it = 0; it < 400 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = F(mid);
    if (v > 0.0) lo = mid;
    else hi = mid;
    if (std::abs(v) < tol * 1e-3) return mid;
  }
  const double root = 0.5 * (lo + hi);
  if (std::abs(F(root)) > std::max(tol, 1e-10)) throw DomainError("malthus_lambda: residual above tolerance");
  return root;
}

StationaryProfile stationary_profile(const DivisionRate& rate, double lambda, const Grid& grid) {
  StationaryProfile out;
  VectorXd w(grid.n_cells);
  double expo = 0.0;
  for (Eigen::Index j = 0; j < grid.n_cells; ++j) {
    double cell = 0.0;
    rate.for_each_piece(grid.left(j), grid.left(j) + grid.spacing(), [&](const DivisionRate::Piece& pc) {
      const double k = lambda + pc.value, L = pc.hi - pc.lo;
      cell += std::exp(-expo) * expint(k, L);
      expo += k * L;
      return true;
    });
    w[j] = cell;
  }
  const double tail = std::exp(-expo) * discounted(rate, lambda, grid.upper, grid.upper + kFar, false);
  const double total = w.sum() + tail;
  out.kappa = 1.0 / total;
  out.tail_mass = tail / total;
  out.gamma = HybridMeasure<double>(grid, w / w.sum());
  return out;
}

GridFunction<double> harmonic_h(const DivisionRate& rate, double lambda, const Grid& grid,
                                const HybridMeasure<double>& gamma) {
  VectorXd h(grid.n_cells);
  for (Eigen::Index j = 0; j < grid.n_cells; ++j) {
    const double a = grid.midpoint(j);
    h[j] = 2.0 * discounted(rate, lambda, a, a + kFar, true);
  }
  const double h0 = 2.0 * discounted(rate, lambda, 0.0, kFar, true);
  const double scale = gamma.projected().dot(h);
  return GridFunction<double>(grid, h / scale, h0 / scale);
}

EigenTriplet explicit_triplet(const RenewalSemigroup& R) {
  EigenTriplet t;
  t.lambda = malthus_lambda(R.rate(), R.a_max());
  t.gamma = stationary_profile(R.rate(), t.lambda, R.grid()).gamma;
  t.h = harmonic_h(R.rate(), t.lambda, R.grid(), t.gamma);
  return t;
}

EigenTriplet perron_triplet(const RenewalSemigroup& R, double tol) {
  const EigenTriplet seed = explicit_triplet(R);
  const double dt = R.time_step();
  const double block = std::max(1.0, std::round(1.0 / dt)) * dt;
  const PowerResult left = power_iterate_left(R, 0.0, block, seed.gamma.projected(), tol, 20000);
  const PowerResult right = power_iterate_right(R, 0.0, block, seed.h.values, tol, 20000);
  EigenTriplet t;
  t.lambda = std::log(left.Lambda) / block;
  t.gamma = HybridMeasure<double>(R.grid(), left.vector);
  const double scale = left.vector.dot(right.vector);
  t.h = GridFunction<double>(R.grid(), right.vector / scale);
  return t;
}

double spectral_gap_rho(const DivisionRate& rate) {
  const auto& c = rate.crenel_params();
  const double alpha = c.l - c.p / 2.0;
  const double gap = 2.0 * c.l - c.p - alpha;
  if (!(gap > 0)) throw DomainError("spectral_gap_rho: need l > p/2");
  if (!(c.b_lower > 0)) throw DomainError("spectral_gap_rho: need b_lower > 0");
  const double L = 2.0 * c.a0 + c.p + c.l;
  const double x = alpha * c.b_lower * (-std::expm1(-c.b_lower * gap)) *
                   std::exp(-2.0 * rate.integral(L) - 2.0 * L * rate.sup_on(L));
  return -std::log1p(-x) / L;
}

StructuralReport structural_checks(const RenewalSemigroup& R, double horizon) {
  StructuralReport rep;
  const long n = R.steps(0.0, horizon);
  const double dt = R.time_step();
  AgeStep scratch;
  const AgeStep& K = R.step(0, scratch);
  VectorXd m = VectorXd::Ones(R.grid().n_cells);
  rep.worst_monotone = std::numeric_limits<double>::infinity();
  for (long k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * dt;
    rep.worst_factor_two = std::max(rep.worst_factor_two, m.maxCoeff() / (2.0 * m[0]));
    const double bound = 2.0 * std::exp(2.0 * R.rate().sup_on(t) * t);
    rep.worst_growth = std::max(rep.worst_growth, m.maxCoeff() / bound);
    rep.lattice_points += m.size();
    if (k == n) break;
    VectorXd next = age_apply_step(K, m);
    rep.worst_monotone = std::min(rep.worst_monotone, ((next - m).array() / m.array()).minCoeff());
    m.swap(next);
  }
  if (n == 0) rep.worst_monotone = 0.0;
  rep.monotone = rep.worst_monotone >= -1e-12;
  rep.factor_two = rep.worst_factor_two <= 1.0 + 1e-12;
  rep.growth_bound = rep.worst_growth <= 1.0 + 1e-12;
  return rep;
}

H1Construction h1_nu_construct(const RenewalSemigroup& R, double alpha_window) {
  const auto& c = R.rate().crenel_params();
  if (!(alpha_window > 0 && alpha_window < 2.0 * c.l - c.p))
    throw DomainError("h1_nu_construct: window must lie in (0, 2l - p)");
  H1Construction out;
  out.alpha = alpha_window;
  out.n = static_cast<long>(std::floor(c.a0 / c.p)) + 1;
  out.t0 = c.a0 + static_cast<double>(out.n) * c.p + c.l;
  R.step_index(out.t0);

  const double dt = R.time_step();
  const long K = std::max(1L, std::lround(alpha_window / dt));
  AgeStep scratch;
  const AgeStep& step = R.step(0, scratch);
  VectorXd v = VectorXd::Zero(R.grid().n_cells);
  v[0] = 1.0;
  VectorXd acc = VectorXd::Zero(v.size());
  double mass_sum = 0.0;
  for (long k = 0; k < K; ++k) {
    acc += v;
    mass_sum += v.sum();
    v = age_propagate_step(step, v);
  }
  out.nu = HybridMeasure<double>(R.grid(), acc / mass_sum);
  out.mass_window = dt * mass_sum;

  const double m_sup = R.apply(0.0, out.t0, VectorXd::Ones(v.size())).maxCoeff();
  out.c = 4.0 * out.mass_window / m_sup * c.b_lower * (-std::expm1(-c.b_lower * (2.0 * c.l - c.p - alpha_window))) *
          std::exp(-2.0 * R.rate().integral(out.t0));
  out.d = alpha_window / (2.0 * out.mass_window);
  return out;
}

CouplingCertificate renewal_certificate(const H1Construction& h1, int steps) {
  CouplingCertificate cert;
  for (int i = 0; i <= steps; ++i) cert.times.push_back(h1.t0 * i);
  cert.c.assign(static_cast<std::size_t>(steps), h1.c);
  cert.d.assign(static_cast<std::size_t>(steps), std::min(1.0, h1.d));
  cert.nu_i.assign(static_cast<std::size_t>(steps), h1.nu);
  cert.alpha = 1.0 / (h1.c * std::min(1.0, h1.d));
  cert.beta = 1.0 / std::min(1.0, h1.d);
  cert.nu = h1.nu;
  cert.s0 = 0.0;
  return cert;
}

std::vector<double> decay_series(const RenewalSemigroup& R, const EigenTriplet& triplet,
                                 const HybridMeasure<double>& mu, const std::vector<double>& times) {
  std::vector<double> out;
  out.reserve(times.size());
  VectorXd v = mu.projected();
  const double mu_h = v.dot(triplet.h.values);
  const VectorXd target = mu_h * triplet.gamma.projected();
  double now = 0.0;
  for (double t : times) {
    v = R.propagate(now, t, v);
    now = t;
    out.push_back(tv_distance(VectorXd(std::exp(-triplet.lambda * t) * v), target));
  }
  return out;
}

}  // namespace ergodic
