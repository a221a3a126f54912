#pragma once

#include "ergodic/semigroup.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace ergodic {

// Right-continuous step schedule: value[k] on [knot[k], knot[k+1]), the last value forever.
class SigmaSchedule {
 public:
  static SigmaSchedule constant(double sigma);
  static SigmaSchedule steps(std::vector<double> knots, std::vector<double> values);
  // Alternating on/off windows with exponential lengths, starting "on"; values past the
  // horizon stay at the last drawn state.
  static SigmaSchedule on_off(std::uint64_t seed, double sigma_on, double mean_on, double mean_off,
                              double horizon);

  double operator()(double t) const;
  bool is_constant() const { return values_.size() == 1; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> knots_;  // knots_[0] = 0
  std::vector<double> values_;
};

// Cumulative ∫_0^t σ_u² du, exact for step schedules.
class SigmaAccumulator {
 public:
  explicit SigmaAccumulator(const SigmaSchedule& sigma);

  double cumulative(double t) const;
  double variance(double s, double t) const { return cumulative(t) - cumulative(s); }
  // σ_{s,t} = sqrt(2π ∫_s^t σ²)
  double sigma_st(double s, double t) const;
  // Smallest u ≥ s with ∫_s^u σ² ≥ v; +∞ when never reached.
  double reach(double s, double v) const;
  // Smallest u ≥ from with ∫_u^{u+window} σ² ≥ v, searched up to `until`; +∞ otherwise.
  double window_reach(double from, double window, double v, double until) const;

 private:
  std::vector<double> knots_, rates_, cum_;
};

// Continuous growth rate on [0,1], piecewise linear between equally spaced nodes.
class GrowthRate {
 public:
  static GrowthRate constant(double r);
  static GrowthRate tabulated(std::vector<double> nodes);

  double operator()(double x) const;
  double lower() const { return lower_; }
  double upper() const { return upper_; }

 private:
  std::vector<double> nodes_;
  double lower_ = 0, upper_ = 0;
};

// Which Gaussian variance the reflected kernel uses over [s,t]:
//   ito     — ∫_s^t σ², so φ(0) = 1/σ_{s,t} (default; kernels compose);
//   printed — σ_{s,t} itself, as the density formula is typeset.
enum class VarianceConvention { ito, printed };

struct DiffusionEnv {
  SigmaSchedule sigma = SigmaSchedule::constant(0.0);
  GrowthRate r = GrowthRate::constant(0.0);
  VarianceConvention convention = VarianceConvention::ito;
  double window_threshold = 5.0;  // σ_{t_i,t_{i+1}} ≥ threshold on the constrained gaps

  // Gaussian variance of the kernel over a window carrying ∫σ² = ito_variance.
  double kernel_variance(double ito_variance) const;
};

// Σ_{|n|≤N} φ(y − x + 2n) + φ(2n − y − x) for a centred Gaussian φ of the given variance.
double reflected_density(double x, double y, double variance);
double reflected_density(const DiffusionEnv& env, double x, double s, double t, double y);
int wrap_count(double variance);

// Cell-to-cell reflected kernel: entry (i, j) = P(X ∈ cell j | X_0 uniform on cell i).
// Symmetric and doubly stochastic; identity for variance 0.
MatrixXd reflected_kernel(double variance, Eigen::Index n_cells);

// c_{s,t} = φ(0) + Σ_n φ(n): the density supremum, attained at x = 0.
double density_sup(double variance);

struct SandwichReport {
  double c = 0, lower = 0;  // c_{s,t} and (c_{s,t} − 4/σ_{s,t})₊
  double row_sum_error = 0;
  double lower_margin = 0;  // min over cells of P_ij/h − lower
  double upper_margin = 0;  // min over cells of c − P_ij/h
  bool pass(double slack = 1e-12) const { return lower_margin >= -slack && upper_margin >= -slack; }
};

// Kernel-level check with σ_{s,t} = sigma_st under the env's convention.
SandwichReport density_sandwich(double sigma_st, Eigen::Index n_cells,
                                VarianceConvention convention = VarianceConvention::ito);

// Feynman–Kac semigroup on [0,1]: Strang steps e^{r dt/2} · K(∫σ² over the step) · e^{r dt/2}.
class DiffusionSemigroup final : public KernelSemigroup {
 public:
  DiffusionSemigroup(DiffusionEnv env, Eigen::Index n_cells, double dt);

  const Grid& grid() const override { return grid_; }
  double time_step() const override { return dt_; }
  bool homogeneous() const override { return env_.sigma.is_constant(); }
  double composition_tolerance() const override { return 1e-10; }

  VectorXd apply(double s, double t, const VectorXd& f) const override;
  VectorXd propagate(double s, double t, const VectorXd& mu) const override;
  MatrixXd matrix(double s, double t) const override;

  const DiffusionEnv& env() const { return env_; }
  const SigmaAccumulator& accumulator() const { return acc_; }
  // Diffusion part of step n (without growth factors); cached per distinct variance.
  const MatrixXd& kernel(long n) const;
  const VectorXd& half_growth() const { return half_; }

 private:
  DiffusionEnv env_;
  SigmaAccumulator acc_;
  Grid grid_;
  double dt_;
  VectorXd half_;  // e^{r(x_i) dt/2}
  mutable std::mutex mutex_;
  mutable std::map<double, std::shared_ptr<const MatrixXd>> cache_;
};

HybridMeasure<double> fk_propagate(const DiffusionEnv& env, const HybridMeasure<double>& mu, double s, double t,
                                   double dt);

// σ̄_{u,v} = (1 − 4/σ_{u,v}) 𝟏_{σ_{u,v} > 4}
double sigma_bar(const SigmaAccumulator& acc, double u, double v);
// g(u,v) = (r̄ − r̲)(v − u) − log((1 − 4/σ_{u,v})₊), +∞ when σ_{u,v} ≤ 4
double capacity_g(const DiffusionEnv& env, const SigmaAccumulator& acc, double u, double v);

// Times t_0 ≤ … ≤ t_{N+1}; c_i = σ̄ e^{−(r̄−r̲)Δ} on gap i, d_i = c_{i+1}, ν = Lebesgue.
// Throws DomainError when σ ≤ 4 on the first or on one of the last two gaps.
CouplingCertificate coupling_constants_diffusion(const DiffusionEnv& env, const Grid& grid,
                                                 const std::vector<double>& times);

struct Subdivision {
  std::vector<double> times;      // s, t_1, then t_k, t_k', t_k + τ for k ≥ 2
  std::vector<double> window_at;  // t_k for each complete window
  double t1 = 0;
  bool exhausted = false;  // a later t_k would be +∞
};

// Windows t_{k+1} = inf{u ≥ t_k + τ : σ_{u,u+τ} ≥ 10}, split at half their variance.
// With lattice > 0 every time is restricted to multiples of it. Stops once t_k + τ > until.
Subdivision subdivision_build(const DiffusionEnv& env, double s, double tau, double until, double lattice = 0.0);

struct CapacityScore {
  double tau = 0;
  double rho_window = 0;
  std::vector<double> subdivision;  // the prefix used, ending at t_{N+1}
  double value = 0;
  double gamma_tau = 0, gamma_rho = 0;
  bool applicable = false;  // value ≥ 2 log 2 + 2 log γ_τ
};

// Score on the constructed subdivision (a lower bound of the supremum); 0 with no admissible prefix.
// rho_window ≤ 0 means t_1 − s.
CapacityScore capacity_diffusion(const DiffusionEnv& env, double s, double t, double tau, double rho_window = 0.0,
                                 double lattice = 0.0);
CapacityScore capacity_diffusion(const DiffusionEnv& env, const Subdivision& sub, double s, double t, double tau,
                                 double rho_window = 0.0);

struct DiffusionGapRow {
  double t = 0;
  double capacity = 0;
  double tv_gap = 0;
  double bound = std::numeric_limits<double>::infinity();
  bool applicable = false;
};

// ‖μM_{s,t} − μ(h_s)λ(m_{s,t})π_t‖ against 8(2+γ_τ²)|μ|(h_s)λ(m_{s,t})e^{−𝔠} at lattice times.
// h_s is extracted on [s, s + h_horizon]; π_t is the normalized λM_{s0,t}, or the left Perron
// vector of one step when the environment is homogeneous.
std::vector<DiffusionGapRow> diffusion_gap_series(const DiffusionSemigroup& D, const HybridMeasure<double>& mu,
                                                  double s, double tau, const std::vector<double>& times,
                                                  double h_horizon, double s0 = 0.0);

// Least-squares slope of 𝔠(s,t) against t over the given times.
double capacity_slope(const std::vector<double>& times, const std::vector<double>& capacities);

}  // namespace ergodic
