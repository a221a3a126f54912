#pragma once

#include "ergodic/errors.hpp"
#include "ergodic/measures.hpp"

#include <limits>
#include <string>
#include <vector>

namespace ergodic {

// Two-parameter family of positive operators on a fixed grid, stepped on the lattice dt·ℤ.
// Right action on cell values, left action on cell weights. Time-varying state spaces are
// carried as an active prefix of cells.
class KernelSemigroup {
 public:
  virtual ~KernelSemigroup() = default;

  virtual const Grid& grid() const = 0;
  virtual double time_step() const = 0;
  virtual bool homogeneous() const = 0;
  virtual double composition_tolerance() const = 0;

  // Cells making up X_t; defaults to the whole grid.
  virtual Eigen::Index active_cells(double /*t*/) const { return grid().n_cells; }

  // M_{s,t} f
  virtual VectorXd apply(double s, double t, const VectorXd& f) const = 0;
  // μ M_{s,t}
  virtual VectorXd propagate(double s, double t, const VectorXd& mu) const = 0;

  // Dense matrix whose row x is δ_x M_{s,t}.
  virtual MatrixXd matrix(double s, double t) const;

  // Number of lattice steps between s and t; throws LatticeError off the lattice.
  long steps(double s, double t) const;
  long step_index(double t) const;
};

// Product of per-step matrices K_{n mod L}; homogeneous when L = 1.
class StepMatrixSemigroup final : public KernelSemigroup {
 public:
  StepMatrixSemigroup(Grid grid, std::vector<MatrixXd> step_matrices, double dt = 1.0);

  const Grid& grid() const override { return grid_; }
  double time_step() const override { return dt_; }
  bool homogeneous() const override { return steps_.size() == 1; }
  double composition_tolerance() const override { return 1e-12; }

  VectorXd apply(double s, double t, const VectorXd& f) const override;
  VectorXd propagate(double s, double t, const VectorXd& mu) const override;
  MatrixXd matrix(double s, double t) const override;

 private:
  Grid grid_;
  std::vector<MatrixXd> steps_;
  double dt_;
};

GridFunction<double> mass(const KernelSemigroup& M, double s, double t);

// P^{(t_final)}_{s,u} f = M_{s,u}(f m_{u,t_final}) / m_{s,t_final}
GridFunction<double> auxiliary_apply(const KernelSemigroup& M, double t_final, double s, double u,
                                     const GridFunction<double>& f);
// μ P^{(t_final)}_{s,u} = ((μ / m_{s,t_final}) M_{s,u}) ⊙ m_{u,t_final}
HybridMeasure<double> auxiliary_propagate(const KernelSemigroup& M, double t_final, double s, double u,
                                          const HybridMeasure<double>& mu);

// Largest c with δ_x M_{s,t} ≥ c m_{s,t}(x) ν cellwise, for every active x.
double doeblin_constant(const KernelSemigroup& M, double s, double t, const HybridMeasure<double>& nu);

// Largest d with d ‖m_{s,τ}‖_∞ ≤ ν(m_{s,τ}) over the listed τ.
double mass_domination(const KernelSemigroup& M, const HybridMeasure<double>& nu, double s,
                       const std::vector<double>& horizons);

struct CouplingCertificate {
  std::vector<double> times;  // t_0 ≤ … ≤ t_N
  std::vector<double> c;      // c_1 … c_N
  std::vector<double> d;      // d_1 … d_N
  std::vector<HybridMeasure<double>> nu_i;
  double alpha = 1.0;
  double beta = 1.0;
  HybridMeasure<double> nu;
  double s0 = 0.0;

  std::size_t steps() const { return c.size(); }
};

struct ConditionCheck {
  bool pass = true;
  double worst_margin = std::numeric_limits<double>::infinity();
  void record(double margin, double slack);
};

struct AdmissibilityReport {
  ConditionCheck a1, a2, a3, a4;
  bool alpha_ok = true, beta_ok = true, shape_ok = true;
  bool sampled_tau = true;  // (A2)–(A4) only checked on the declared horizons
  std::vector<double> horizons;
  bool pass() const { return shape_ok && alpha_ok && beta_ok && a1.pass && a2.pass && a3.pass && a4.pass; }
};

// Horizons default to t_N, t and three points in between.
AdmissibilityReport certify_admissible(const KernelSemigroup& M, const CouplingCertificate& cert, double s,
                                       double t, std::vector<double> horizons = {}, double slack = 1e-9);

// −Σ log(1 − c_i d_i); +∞ when some c_i d_i = 1; 0 for an empty certificate.
double capacity(const CouplingCertificate& cert);
double capacity(const std::vector<double>& c, const std::vector<double>& d);

struct ContractionReport {
  double lhs_ii = 0, rhs_ii = 0;
  double lhs_iii = 0, rhs_iii = 0;
  bool pass_ii = true, pass_iii = true;
  bool iii_applicable = true;  // part (iii) is only run on nonzero nonnegative measures
  bool pass() const { return pass_ii && pass_iii; }
};

// Part (ii) needs equal total masses; part (iii) is skipped unless both are nonnegative and nonzero.
ContractionReport contraction_check(const KernelSemigroup& M, const CouplingCertificate& cert,
                                    const HybridMeasure<double>& mu, const HybridMeasure<double>& mu_tilde,
                                    double tau, double slack = 1e-6);

// (μM_{s,t_N}/μ(m_{s,t_N}))(m_{t_N,τ}/‖m_{t_N,τ}‖_∞); admissible certificates give ≥ 1/α.
double mass_lower_bound(const KernelSemigroup& M, const CouplingCertificate& cert, double s,
                        const HybridMeasure<double>& mu, double tau);

struct HarmonicProfile {
  double s = 0;
  GridFunction<double> h;
  HybridMeasure<double> nu;
  double horizon = 0;
  std::vector<double> increments;  // sup-norm Cauchy increments between successive horizons
};

// h_s = lim m_{s,τ}/ν(m_{s,τ}), evaluated on `samples` horizons up to s + horizon.
HarmonicProfile harmonic_extract(const KernelSemigroup& M, double s, const HybridMeasure<double>& nu,
                                 double horizon, double tol = 1e-8, int samples = 6);

struct GapReport {
  double lhs = 0;
  double rhs = 0;
  double capacity = 0;
  bool sharp = false;  // capacity ≥ log(4α): the |μ|(h) bound applies
  bool pass(double tol = 1e-6) const { return lhs <= rhs * (1 + tol); }
};

// ‖μM_{s,t} − μ(h_s)ν(m_{s,t}) γM_{s0,t}/γ(m_{s0,t})‖ against the coupling bound.
GapReport ergodic_gap(const KernelSemigroup& M, double s, double t, const HybridMeasure<double>& mu,
                      const CouplingCertificate& cert, const HarmonicProfile& h,
                      const HybridMeasure<double>& gamma_ref, double s0);

struct RateFit {
  double slope = 0;
  double intercept = 0;
  double residual = 0;  // RMS of log-residuals
  std::size_t used = 0;
  std::size_t dropped_nonpositive = 0;
  std::vector<std::string> warnings;
};

// Least squares of log(error) on time after dropping the first 20% of samples.
RateFit rate_fit(const std::vector<double>& times, const std::vector<double>& errors,
                 double transient_fraction = 0.2);

}  // namespace ergodic
