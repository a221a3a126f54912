#pragma once

#include "ergodic/age_structured.hpp"

#include <functional>
#include <vector>

namespace ergodic {

// T-periodic division rate b(t, a), 0 ≤ b ≤ b̄, with b ≥ b̲ for a ≥ A when b̲ > 0.
struct PeriodicRate {
  std::function<double(double, double)> b;
  double period = 1.0;
  double b_upper = 1.0;
  double A = 0.0;
  double b_lower = 0.0;
  bool time_only = false;
  std::function<double(double)> b_of_t;  // set when time_only

  static PeriodicRate time_only_rate(std::function<double(double)> b_of_t, double period, double b_upper);
  static PeriodicRate general(std::function<double(double, double)> b, double period, double b_upper, double A,
                              double b_lower);
};

// Periodic renewal semigroup (birth 2b, death b) on the shared age stepper; dt = spacing, T/dt ∈ ℕ.
class PeriodicRenewalSemigroup final : public AgeStructuredSemigroup {
 public:
  PeriodicRenewalSemigroup(PeriodicRate rate, double spacing, double a_max);

  bool homogeneous() const override { return false; }
  const AgeStep& step(long n, AgeStep&) const override;

  const PeriodicRate& rate() const { return rate_; }
  long period_steps() const { return static_cast<long>(steps_.size()); }

 private:
  PeriodicRate rate_;
  std::vector<AgeStep> steps_;
};

// (1/T)∫_0^T b by the trapezoid rule (spectrally accurate for smooth periodic b).
double floquet_lambda_time_only(const std::function<double(double)>& b_of_t, double period, int samples = 4096);

// ∫_s^t b by composite Simpson.
double integrate_rate(const std::function<double(double)>& b_of_t, double s, double t, double period);

struct MonodromyResult {
  double Lambda = 0;    // γ_{s,s}(m_{s,s+T})
  double lambda_F = 0;  // log(Λ)/T
  double period = 0;
  HybridMeasure<double> gamma_ss;
  int iterations = 0;
  double increment = 0;
};

// Power iteration of the monodromy operator M_{s,s+T} from ν.
MonodromyResult monodromy_eigen(const KernelSemigroup& M, double period, double s, const HybridMeasure<double>& nu,
                                int k_max = 2000, double tol = 1e-9);

struct FloquetFamily {
  double lambda_F = 0;
  double period = 0;
  double s = 0;
  std::vector<double> times;         // s + j·dt, j = 0 … T/dt − 1
  std::vector<VectorXd> gamma;       // γ_{s,t} at those times
  GridFunction<double> h_ss;
  double normalization = 0;          // γ_{s,s}(h_{s,s})
  double periodicity_residual = 0;   // max_t ‖γ_{s,t+T} − γ_{s,t}‖_TV
  double eigen_residual = 0;         // max over probes of ‖γ_{s,t}/γ_{s,t}(1) − γ_{t,t}‖_TV, γ_{t,t} by its own monodromy
  double h_periodicity_residual = 0; // ‖e^{−λ_F T} M_{s,s+T} h_{s,s} − h_{s,s}‖_∞

  // γ_{s,t} for any lattice t ≥ s, by periodicity.
  const VectorXd& gamma_at(double t, double dt) const;
};

// γ_{s,t} = e^{−λ_F(t−s)} γ_{s,s} M_{s,t}; h_{s,s} = lim m_{s,s+kT}/γ_{s,s}(m_{s,s+kT}).
FloquetFamily floquet_family_build(const KernelSemigroup& M, const MonodromyResult& mono, double s,
                                   int h_periods = 20, int probes = 4);

// ρ = −log(1 − 2b̲T e^{−b̄(3A+8T)} / (1/(2b̄T) + A/T + 3 + 1/(1 − e^{−b̲T}))) / (A + 2T)
double rate_general(double A, double period, double b_lower, double b_upper);

// 2∫_s^t b
double rate_sharp_time_only(const std::function<double(double)>& b_of_t, double s, double t, double period);

struct GeneralNu {
  HybridMeasure<double> nu;  // ∫_s^{s+T} δ_0 M_{τ,s+T} dτ, normalized
  double mass = 0;           // ∫_s^{s+T} m_{τ,s+T}(0) dτ
  double c = 0;              // 2b̲T e^{−3b̄(A+2T)}
  double d = 0;              // e^{−2b̄T} / (1/(2b̄T) + A/T + 3 + 1/(1 − e^{−b̲T}))
};

GeneralNu general_nu_construct(const PeriodicRenewalSemigroup& M, double s);

struct PeriodicMonotoneReport {
  bool monotone = true;      // t ↦ m_{s,t}(a) non-decreasing
  bool shift = true;         // m_{s+T,t}(a) ≤ m_{s,t}(a)
  double worst_monotone = 0; // min relative increment
  double worst_shift = 0;    // max of m_{s+T,t}/m_{s,t} − 1
  long lattice_points = 0;
  bool pass() const { return monotone && shift; }
};

PeriodicMonotoneReport periodic_mass_monotone_check(const PeriodicRenewalSemigroup& M, double s, double horizon);

// ‖e^{−λ_F(t−s)} μM_{s,t} − μ(h_{s,s}) γ_{s,t}‖_TV at lattice times.
std::vector<double> floquet_decay_series(const KernelSemigroup& M, const FloquetFamily& F,
                                         const HybridMeasure<double>& mu, const std::vector<double>& times);

}  // namespace ergodic
