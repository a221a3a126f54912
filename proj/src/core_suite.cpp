#include "ergodic/core_suite.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ergodic {

namespace {

struct Uniform {
  std::mt19937_64 rng;
  double operator()() { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; }
  int integer(int lo, int hi) { return lo + static_cast<int>((*this)() * (hi - lo + 1)); }
};

VectorXd row_minimum_measure(const KernelSemigroup& M, double s, double t) {
  const MatrixXd K = M.matrix(s, t);
  const VectorXd m = K.rowwise().sum();
  VectorXd w = K.row(0).transpose() / m[0];
  for (Eigen::Index x = 1; x < K.rows(); ++x) w = w.cwiseMin(K.row(x).transpose() / m[x]);
  return w / w.sum();
}

double active_sup(const VectorXd& m) { return m.maxCoeff(); }

}  // namespace

CoreSuiteReport core_property_suite(const CoreSuiteConfig& cfg) {
  CoreSuiteReport rep;
  Uniform U{std::mt19937_64(cfg.seed)};
  for (int k = 0; k < cfg.kernels; ++k) {
    CoreCase cs;
    cs.index = k;
    cs.cells = U.integer(2, cfg.max_cells);
    cs.period = U.integer(1, 4);
    cs.blocks = U.integer(1, 4);
    cs.block_steps = U.integer(1, 2);
    const int extra = U.integer(0, 3);
    const Eigen::Index n = cs.cells;

    std::vector<MatrixXd> steps;
    for (int p = 0; p < cs.period; ++p) {
      const double shape = 1.0 + 3.0 * U();
      MatrixXd K(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) K(i, j) = std::pow(U(), shape) + 1e-3;
        K.row(i) *= (0.5 + 1.5 * U()) / K.row(i).sum();
      }
      steps.push_back(std::move(K));
    }
    const Grid grid(0.0, 1.0, n);
    const StepMatrixSemigroup M(grid, steps, 1.0);

    CouplingCertificate cert;
    const double s = 0.0;
    const double tN = static_cast<double>(cs.blocks * cs.block_steps);
    const double tau_max = tN + extra;
    std::vector<double> horizons;
    for (double tau = tN; tau <= tau_max; tau += 1.0) horizons.push_back(tau);
    for (int i = 0; i <= cs.blocks; ++i) cert.times.push_back(static_cast<double>(i * cs.block_steps));
    for (int i = 1; i <= cs.blocks; ++i) {
      const double a = cert.times[static_cast<std::size_t>(i - 1)], b = cert.times[static_cast<std::size_t>(i)];
      const HybridMeasure<double> nu(grid, row_minimum_measure(M, a, b));
      cert.nu_i.push_back(nu);
      cert.c.push_back(doeblin_constant(M, a, b, nu));
      cert.d.push_back(mass_domination(M, nu, b, horizons));
    }
    cert.nu = cert.nu_i.front();
    cert.alpha = 1.0;
    cert.beta = 1.0;
    for (double tau : horizons) {
      const VectorXd mN = M.apply(tN, tau, VectorXd::Ones(n));
      cert.alpha = std::max(cert.alpha, active_sup(mN) / (cert.c.back() * cert.nu_i.back().projected().dot(mN)));
      const VectorXd m0 = M.apply(s, tau, VectorXd::Ones(n));
      cert.beta = std::max(cert.beta, active_sup(m0) / cert.nu.projected().dot(m0));
    }
    cs.capacity = capacity(cert);
    cs.admissible = certify_admissible(M, cert, s, tau_max, horizons, 1e-12).pass();

    // Two random signed measures of equal mass, two nonnegative ones.
    VectorXd a(n), b(n), p(n), q(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      a[i] = 2 * U() - 1;
      b[i] = 2 * U() - 1;
      p[i] = U();
      q[i] = U() * (U() < 0.3 ? 0.0 : 1.0);
    }
    b.array() += (a.sum() - b.sum()) / static_cast<double>(n);
    if (q.sum() == 0.0) q[0] = 1.0;
    q *= p.sum() / q.sum();

    cs.pass_ii = cs.pass_iii = true;
    for (double tau : horizons) {
      const ContractionReport ii = contraction_check(M, cert, HybridMeasure<double>(grid, a),
                                                     HybridMeasure<double>(grid, b), tau, cfg.slack);
      const ContractionReport iii = contraction_check(M, cert, HybridMeasure<double>(grid, p),
                                                      HybridMeasure<double>(grid, q), tau, cfg.slack);
      cs.ii_ratio = std::max(cs.ii_ratio, ii.rhs_ii > 0 ? ii.lhs_ii / ii.rhs_ii : 0.0);
      cs.iii_ratio = std::max(cs.iii_ratio, iii.rhs_iii > 0 ? iii.lhs_iii / iii.rhs_iii : 0.0);
      cs.pass_ii = cs.pass_ii && ii.pass_ii;
      cs.pass_iii = cs.pass_iii && iii.pass_iii;
    }

    cs.borne_margin = INFINITY;
    for (double tau : horizons)
      for (const VectorXd* mu : {&p, &q})
        cs.borne_margin = std::min(
            cs.borne_margin, cert.alpha * mass_lower_bound(M, cert, s, HybridMeasure<double>(grid, *mu), tau) - 1.0);
    cs.pass_borne = cs.borne_margin >= -cfg.slack;

    // Conservativity of P^{(τ)}_{s,u}: total mass and the image of 𝟏.
    for (double tau : horizons) {
      for (double u = s; u <= tau; u += 1.0) {
        const HybridMeasure<double> out = auxiliary_propagate(M, tau, s, u, HybridMeasure<double>(grid, p));
        cs.conservation_error = std::max(cs.conservation_error, std::abs(out.total_mass() / p.sum() - 1.0));
        const GridFunction<double> one = auxiliary_apply(M, tau, s, u, GridFunction<double>::constant(grid, 1.0));
        cs.conservation_error = std::max(cs.conservation_error, (one.values.array() - 1.0).abs().maxCoeff());
      }
    }
    cs.pass_conservation = cs.conservation_error <= cfg.conservation_tol;

    rep.fail_admissible += !cs.admissible;
    rep.fail_ii += !cs.pass_ii;
    rep.fail_iii += !cs.pass_iii;
    rep.fail_borne += !cs.pass_borne;
    rep.fail_conservation += !cs.pass_conservation;
    rep.worst_ii = std::max(rep.worst_ii, cs.ii_ratio);
    rep.worst_iii = std::max(rep.worst_iii, cs.iii_ratio);
    rep.worst_borne = k == 0 ? cs.borne_margin : std::min(rep.worst_borne, cs.borne_margin);
    rep.worst_conservation = std::max(rep.worst_conservation, cs.conservation_error);
    rep.cases.push_back(cs);
  }
  return rep;
}

}  // namespace ergodic
