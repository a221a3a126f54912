#include "ergodic/age_structured.hpp"

#include <cmath>

namespace ergodic {

namespace {

// ∫_0^L e^{-k u} du
double expint(double k, double L) {
  const double x = k * L;
  if (std::abs(x) < 1e-300) return L;
  return -std::expm1(-x) / k;
}

}  // namespace

AgeStep build_age_step(const StepRates& rates, double h, Eigen::Index active_now, Eigen::Index active_next) {
  const std::size_t K = rates.birth.size();
  if (K == 0 || K % 2 != 0 || rates.death.size() != K)
    throw std::invalid_argument("build_age_step: need an even, positive number of sub-intervals");
  const Eigen::Index n = rates.birth[0].size();
  const double delta = h / static_cast<double>(K);

  // Newborn net growth, and its tail sums over later sub-intervals.
  std::vector<double> g0(K), after(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) g0[k] = rates.birth[k][0] - rates.death[k][0];
  for (std::size_t k = K - 1; k-- > 0;) after[k] = after[k + 1] + g0[k + 1] * delta;

  AgeStep out{VectorXd::Zero(n), VectorXd::Zero(n)};
  for (Eigen::Index j = 0; j < std::min(active_now, n); ++j) {
    const Eigen::Index nj = std::min<Eigen::Index>(j + 1, n - 1);
    const bool killed = nj >= active_next;
    double D = 0.0, N = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const bool second = k >= K / 2;
      if (second && killed) break;
      const Eigen::Index a = second ? nj : j;
      const double beta = rates.birth[k][a], mu = rates.death[k][a];
      if (beta > 0.0) N += beta * std::exp(-D + after[k] + g0[k] * delta) * expint(mu + g0[k], delta);
      D += mu * delta;
    }
    out.survive[j] = killed ? 0.0 : std::exp(-D);
    out.birth[j] = N;
  }
  return out;
}

VectorXd age_apply_step(const AgeStep& K, const VectorXd& f) {
  const Eigen::Index n = f.size();
  VectorXd out(n);
  const double f0 = f[0];
  for (Eigen::Index j = 0; j + 1 < n; ++j) out[j] = K.survive[j] * f[j + 1] + K.birth[j] * f0;
  out[n - 1] = K.survive[n - 1] * f[n - 1] + K.birth[n - 1] * f0;
  return out;
}

VectorXd age_propagate_step(const AgeStep& K, const VectorXd& mu) {
  const Eigen::Index n = mu.size();
  VectorXd out(n);
  out[0] = 0.0;
  for (Eigen::Index j = 0; j + 1 < n; ++j) out[j + 1] = mu[j] * K.survive[j];
  out[n - 1] += mu[n - 1] * K.survive[n - 1];
  out[0] += mu.dot(K.birth);
  return out;
}

AgeStructuredSemigroup::AgeStructuredSemigroup(Grid grid, double dt) : grid_(grid), dt_(dt) {
  if (std::abs(dt - grid.spacing()) > 1e-12 * grid.spacing())
    throw std::invalid_argument("age-structured semigroup: time step must equal the age spacing");
}

VectorXd AgeStructuredSemigroup::apply(double s, double t, const VectorXd& f) const {
  const long a = step_index(s), n = steps(s, t);
  AgeStep scratch;
  VectorXd out = f;
  for (long k = a + n - 1; k >= a; --k) out = age_apply_step(step(k, scratch), out);
  // Cells outside X_s carry no meaning; keep them at zero.
  const Eigen::Index active = active_cells(s);
  out.tail(out.size() - active).setZero();
  return out;
}

VectorXd AgeStructuredSemigroup::propagate(double s, double t, const VectorXd& mu) const {
  const long a = step_index(s), n = steps(s, t);
  AgeStep scratch;
  VectorXd out = mu;
  for (long k = a; k < a + n; ++k) out = age_propagate_step(step(k, scratch), out);
  return out;
}

namespace {

struct StepTable {
  std::vector<AgeStep> storage;
  std::vector<const AgeStep*> at;
  StepTable(const AgeStructuredSemigroup& M, long a, long n) : storage(static_cast<std::size_t>(n)), at(static_cast<std::size_t>(n)) {
    for (long k = 0; k < n; ++k) at[static_cast<std::size_t>(k)] = &M.step(a + k, storage[static_cast<std::size_t>(k)]);
  }
  const AgeStep& operator[](long k) const { return *at[static_cast<std::size_t>(k)]; }
};

// Value at cell j, start step k, given the boundary trace G (indexed by start step, G[n] = f_0).
double along_characteristic(const StepTable& K, const VectorXd& f, const std::vector<double>& G, long k, long n,
                            Eigen::Index j) {
  const Eigen::Index last = f.size() - 1;
  double P = 1.0, value = 0.0;
  for (long i = k; i < n; ++i) {
    value += P * K[i].birth[j] * G[static_cast<std::size_t>(i + 1)];
    P *= K[i].survive[j];
    if (P == 0.0) return value;
    j = std::min(j + 1, last);
  }
  return value + P * f[j];
}

}  // namespace

VectorXd duhamel_march(const AgeStructuredSemigroup& M, const VectorXd& f, double s, double t) {
  const long a = M.step_index(s), n = M.steps(s, t);
  if (n == 0) return f;
  const StepTable K(M, a, n);
  std::vector<double> G(static_cast<std::size_t>(n + 1), 0.0);
  G[static_cast<std::size_t>(n)] = f[0];
  for (long k = n - 1; k >= 0; --k) G[static_cast<std::size_t>(k)] = along_characteristic(K, f, G, k, n, 0);

  VectorXd out = VectorXd::Zero(f.size());
  const Eigen::Index active = M.active_cells(s);
  for (Eigen::Index j = 0; j < active; ++j) out[j] = along_characteristic(K, f, G, 0, n, j);
  return out;
}

VectorXd duhamel_picard(const AgeStructuredSemigroup& M, const VectorXd& f, double s, double t, int max_iterations,
                        double tol) {
  const long a = M.step_index(s), n = M.steps(s, t);
  if (n == 0) return f;
  const StepTable K(M, a, n);
  std::vector<double> G(static_cast<std::size_t>(n + 1), 0.0), next;
  G[static_cast<std::size_t>(n)] = f[0];
  for (int it = 0; it < max_iterations; ++it) {
    next = G;
    for (long k = 0; k < n; ++k) next[static_cast<std::size_t>(k)] = along_characteristic(K, f, G, k, n, 0);
    double change = 0.0;
    for (std::size_t k = 0; k < G.size(); ++k) change = std::max(change, std::abs(next[k] - G[k]));
    G.swap(next);
    if (change <= tol * std::max(1.0, std::abs(G[0]))) break;
  }
  VectorXd out = VectorXd::Zero(f.size());
  const Eigen::Index active = M.active_cells(s);
  for (Eigen::Index j = 0; j < active; ++j) out[j] = along_characteristic(K, f, G, 0, n, j);
  return out;
}

PowerResult power_iterate_left(const KernelSemigroup& M, double s, double block, VectorXd start, double tol,
                               int max_iterations) {
  PowerResult r;
  VectorXd v = start / start.sum();
  for (r.iterations = 1; r.iterations <= max_iterations; ++r.iterations) {
    VectorXd w = M.propagate(s, s + block, v);
    r.Lambda = w.sum();
    w /= r.Lambda;
    r.increment = tv_distance(w, v);
    v.swap(w);
    if (r.increment < tol) break;
  }
  r.vector = v;
  if (r.increment >= tol) throw NotConvergedError("power iteration (left) did not converge", r.increment);
  return r;
}

PowerResult power_iterate_right(const KernelSemigroup& M, double s, double block, VectorXd start, double tol,
                                int max_iterations) {
  PowerResult r;
  VectorXd v = start / start.cwiseAbs().maxCoeff();
  for (r.iterations = 1; r.iterations <= max_iterations; ++r.iterations) {
    VectorXd w = M.apply(s, s + block, v);
    r.Lambda = w.maxCoeff();
    w /= r.Lambda;
    r.increment = (w - v).cwiseAbs().maxCoeff();
    v.swap(w);
    if (r.increment < tol) break;
  }
  r.vector = v;
  if (r.increment >= tol) throw NotConvergedError("power iteration (right) did not converge", r.increment);
  return r;
}

}  // namespace ergodic
