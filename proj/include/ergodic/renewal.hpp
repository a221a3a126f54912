#pragma once

#include "ergodic/age_structured.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ergodic {

// b ≥ b_lower on every [a0 + kp, a0 + kp + l], k ≥ 0, with l ∈ (p/2, p].
struct CrenelParams {
  double a0 = 0.0;
  double p = 1.0;
  double l = 1.0;
  double b_lower = 1.0;
};

// Piecewise-constant division rate; integrals and suprema are exact.
class DivisionRate {
 public:
  struct Piece {
    double lo, hi, value;
  };

  static DivisionRate constant(double b);
  static DivisionRate crenel(const CrenelParams& c, double b_on, double b_off = 0.0);
  // values[i] holds on [i·step, (i+1)·step); the last value continues to +∞.
  static DivisionRate tabulated(std::vector<double> values, double step, const CrenelParams& c);
  // Samples b at midpoints of a `step` mesh on [0, extent).
  static DivisionRate custom(const std::function<double(double)>& b, double extent, double step,
                             const CrenelParams& c);

  double operator()(double a) const;
  double integral(double a) const;  // ∫_0^a b
  double sup_on(double a) const;    // sup_{[0,a]} b
  double sup_all(double a_max) const { return sup_on(a_max); }

  // Calls fn(piece) for the constant pieces covering [lo, hi) until fn returns false.
  void for_each_piece(double lo, double hi, const std::function<bool(const Piece&)>& fn) const;

  const CrenelParams& crenel_params() const { return crenel_; }
  const std::string& kind() const { return kind_; }

  // Checks l ∈ (p/2, p], b_lower > 0 and b ≥ b_lower on the crenels up to `up_to`.
  bool satisfies_crenel(double up_to) const;

 private:
  std::string kind_;
  CrenelParams crenel_;
  double b_on_ = 0, b_off_ = 0;
  std::vector<double> table_;
  double step_ = 1.0;
};

// a0 + p⌈(12/b̲ + l)/p⌉ moved back to the end of the preceding crenel, then extended by whole
// periods until e^{-∫_0^{a_max} b} < 1e-13.
double default_a_max(const DivisionRate& rate);

class RenewalSemigroup final : public AgeStructuredSemigroup {
 public:
  RenewalSemigroup(DivisionRate rate, double spacing, double a_max = 0.0);

  bool homogeneous() const override { return true; }
  const AgeStep& step(long, AgeStep&) const override { return step_; }

  const DivisionRate& rate() const { return rate_; }
  double a_max() const { return grid_.upper; }

 private:
  DivisionRate rate_;
  AgeStep step_;
};

GridFunction<double> duhamel_apply(const RenewalSemigroup& R, const GridFunction<double>& f, double t);

// Root of 2∫_0^{a_max} b e^{-∫_0^a (λ+b)} da = 1 by bisection.
double malthus_lambda(const DivisionRate& rate, double a_max = 0.0, double tol = 1e-12);

struct StationaryProfile {
  HybridMeasure<double> gamma;
  double kappa = 0;
  double tail_mass = 0;  // mass of κe^{-∫(λ+b)} beyond the grid
};

// γ(da) = κ e^{-∫_0^a (λ+b)} da, integrated exactly over each cell.
StationaryProfile stationary_profile(const DivisionRate& rate, double lambda, const Grid& grid);

// h(a) = 2h(0)∫_a^∞ b(a') e^{-∫_a^{a'}(λ+b)} da', scaled so that γ(h) = 1.
GridFunction<double> harmonic_h(const DivisionRate& rate, double lambda, const Grid& grid,
                                const HybridMeasure<double>& gamma);

struct EigenTriplet {
  double lambda = 0;
  HybridMeasure<double> gamma;
  GridFunction<double> h;
};

// Closed-form triplet: characteristic root, explicit γ and h.
EigenTriplet explicit_triplet(const RenewalSemigroup& R);
// Perron triplet of the discretized semigroup (power iteration seeded by the closed forms).
EigenTriplet perron_triplet(const RenewalSemigroup& R, double tol = 1e-13);

// ρ with α = l − p/2 and L = 2a0 + p + l:
// −log(1 − αb̲(1 − e^{−b̲(2l−p−α)}) e^{−2∫_0^L b − 2L·sup_{[0,L]} b}) / L
double spectral_gap_rho(const DivisionRate& rate);

struct StructuralReport {
  bool monotone = true;       // t ↦ m_t(a) non-decreasing
  bool factor_two = true;     // m_t(a) ≤ 2 m_t(0)
  bool growth_bound = true;   // ‖m_t‖_∞ ≤ 2 e^{2 sup_{[0,t]} b · t}
  double worst_monotone = 0;  // min of (m_{t+dt}(a) − m_t(a)) / m_t(a)
  double worst_factor_two = 0;  // max of m_t(a) / (2 m_t(0))
  double worst_growth = 0;      // max of ‖m_t‖_∞ / bound
  long lattice_points = 0;
  bool pass() const { return monotone && factor_two && growth_bound; }
};

StructuralReport structural_checks(const RenewalSemigroup& R, double horizon);

struct H1Construction {
  HybridMeasure<double> nu;
  double c = 0;      // analytic Doeblin constant of the proof
  double d = 0;      // α / (2∫_0^α m_s(0) ds)
  double t0 = 0;     // a0 + np + l
  double alpha = 0;  // window
  long n = 0;        // ⌊a0/p⌋ + 1
  double mass_window = 0;  // ∫_0^α m_s(0) ds
};

// ν(f) = ∫_0^α M_s f(0) ds / ∫_0^α m_s(0) ds and the proof's explicit (c, d).
H1Construction h1_nu_construct(const RenewalSemigroup& R, double alpha_window);

// Regular subdivision t_i = i·t0 with c_i = c, d_i = d, α = 1/(cd), β = 1/d, ν_i = ν.
CouplingCertificate renewal_certificate(const H1Construction& h1, int steps);

// ‖e^{−λt} μM_t − μ(h)γ‖_TV at each lattice time.
std::vector<double> decay_series(const RenewalSemigroup& R, const EigenTriplet& triplet,
                                 const HybridMeasure<double>& mu, const std::vector<double>& times);

}  // namespace ergodic
