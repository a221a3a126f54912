#pragma once

#include "ergodic/age_structured.hpp"
#include "ergodic/renewal.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ergodic {

// Maximal age t ↦ a_t, non-decreasing from a0 to a_inf with t − a_t strictly increasing.
class MaxAgeSchedule {
 public:
  // a_t = a_inf − (a_inf − a0) e^{−k t}; needs k (a_inf − a0) ≤ 1.
  static MaxAgeSchedule saturating(double a0, double a_inf, double k = 1.0);
  // a_t = min(a0 + v t, a_inf); needs v < 1.
  static MaxAgeSchedule linear_then_flat(double a0, double a_inf, double v);
  static MaxAgeSchedule constant(double a_inf);

  double operator()(double t) const;
  double a0() const { return a0_; }
  double a_inf() const { return a_inf_; }
  bool is_constant() const { return kind_ == "constant"; }
  const std::string& kind() const { return kind_; }

  // Throws ConfigError unless a_t ≤ a_inf, a non-decreasing and t − a_t strictly increasing
  // at every lattice point of [0, horizon].
  void validate_lattice(double dt, double horizon) const;

 private:
  std::string kind_;
  double a0_ = 0, a_inf_ = 0, k_ = 0;
};

// Fixed grid on [0, a_inf) plus one always-empty buffer cell, so that ageing out of the last
// cell is a kill. X_t is the prefix of cells whose midpoint lies below a_t. Birth b, no death.
class MaxAgeSemigroup final : public AgeStructuredSemigroup {
 public:
  MaxAgeSemigroup(MaxAgeSchedule schedule, DivisionRate rate, double spacing);

  bool homogeneous() const override { return schedule_.is_constant(); }
  Eigen::Index active_cells(double t) const override;
  const AgeStep& step(long n, AgeStep& scratch) const override;

  const MaxAgeSchedule& schedule() const { return schedule_; }
  const DivisionRate& rate() const { return rate_; }
  Eigen::Index cells_inf() const { return n_inf_; }  // cells making up [0, a_inf)
  double b_lower() const { return b_lower_; }        // inf of b on [0, a_inf)
  double b_upper() const { return b_upper_; }        // sup of b on [0, a_inf)

 private:
  Eigen::Index active_at_step(long n) const;

  MaxAgeSchedule schedule_;
  DivisionRate rate_;
  Eigen::Index n_inf_ = 0;
  double b_lower_ = 0, b_upper_ = 0;
  std::vector<AgeStep> hold_;  // hold_[k-1]: k active cells before and after
  std::vector<AgeStep> grow_;  // grow_[k-1]: k active cells, then k + 1
};

// The homogeneous limit N: same rate, constant ceiling a_inf, same grid.
MaxAgeSemigroup limit_semigroup(const MaxAgeSemigroup& M);

// M_{s,t} f with f zero-extended beyond a_t; the result is zero beyond a_s.
VectorXd duhamel_maxage(const MaxAgeSemigroup& M, const VectorXd& f, double s, double t);
// Picard-iteration oracle for the same equation.
VectorXd duhamel_maxage_picard(const MaxAgeSemigroup& M, const VectorXd& f, double s, double t);

struct GronwallReport {
  double worst_ratio = 0;  // max over samples of ‖M_{s,t}f‖_∞ / (e^{b̄(t−s)} ‖f‖_∞)
  int samples = 0;
  bool pass(double tol = 1e-12) const { return worst_ratio <= 1.0 + tol; }
};

GronwallReport gronwall_check(const MaxAgeSemigroup& M, double s, double t, const std::vector<VectorXd>& f_samples);
// `count` seeded functions on X_t, uniform in [−1, 1], rescaled to unit sup norm.
std::vector<VectorXd> random_unit_functions(const MaxAgeSemigroup& M, double t, int count, std::uint64_t seed);

struct H0Row {
  double t = 0, r = 0;
  double gap = 0;       // a_inf − a_t
  double distance = 0;  // sup_x ‖δ_x M_{t,t+r} − δ_x N_r‖_TV over x ∈ X_t
  double bound = 0;     // max(b̄e^{b̄r}, (b̄e^{b̄r})² r)(a_inf − a_t)
  bool pass() const { return distance <= bound * (1 + 1e-9) + 1e-12; }
};

// Requires r ≥ a_inf.
H0Row h0_distance(const MaxAgeSemigroup& M, const MaxAgeSemigroup& N, double t, double r);

struct LimitTriplet {
  double lambda = 0;             // discrete Perron rate of N
  HybridMeasure<double> gamma;   // Perron profile of N
  double lambda_explicit = 0;    // root of ∫_0^{a_inf} b e^{−λa} da = 1
  HybridMeasure<double> gamma_explicit;  // ∝ e^{−λa} on [0, a_inf), integrated per cell
};

LimitTriplet limit_triplet(const MaxAgeSemigroup& N, double tol = 1e-13);

struct MaxAgeCertificate {
  double s = 0;
  bool applicable = false;  // Δ ≤ a_s/2 (and Δ > 0)
  std::string reason;
  double delta = 0;  // a_inf − a_s
  double alpha = 0;  // Δ/2
  double step = 0;   // r = 2Δ
  double c = 0;      // min(αb̲e^{−b̄Δ}, (αb̲e^{−b̄Δ})²)
  double d = 0;      // min((b̲/b̄)e^{−αb̄}, (αb̲³/b̄²)e^{−αb̄})
  HybridMeasure<double> nu;  // uniform on [0, α]

  CouplingCertificate coupling(int steps) const;  // regular subdivision with step r
};

// The proof's constants at time s; with Δ = 0 (saturated ceiling) the window falls back
// to `fallback_alpha` and only ν is produced.
MaxAgeCertificate maxage_certificate(const MaxAgeSemigroup& M, double s, double fallback_alpha = 0.25);

struct ProfileRow {
  double t = 0;
  double tv_gap = 0;  // sup_x ‖δ_x M_{s,t}/ν(m_{s,t}) − h_s(x)γ‖_TV
};

struct ProfileReport {
  MaxAgeCertificate cert;
  HarmonicProfile h;
  double h_sup = 0;
  std::vector<ProfileRow> rows;
  bool strictly_decreasing = true;
  double final_gap = 0;
  bool pass(double floor) const { return strictly_decreasing && final_gap < floor; }
};

// Gap against the Perron profile γ of N. h_s is extracted on [s, s + h_horizon].
ProfileReport profile_convergence(const MaxAgeSemigroup& M, double s, const std::vector<double>& horizons,
                                  double h_horizon, const HybridMeasure<double>& gamma);

}  // namespace ergodic
