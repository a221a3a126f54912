#pragma once

#include "ergodic/semigroup.hpp"

#include <vector>

namespace ergodic {

// One lattice step of an age-structured semigroup with dt = spacing: a particle in cell j
// moves to next(j) = min(j+1, n-1) and survives with probability survive[j]; births created
// during the step (including their own in-step growth) land in cell 0 with weight birth[j].
//   (K f)_j = survive[j] f_{next(j)} + birth[j] f_0
struct AgeStep {
  VectorXd survive;
  VectorXd birth;
};

// Piecewise-constant rates on K equal sub-intervals of a step. Sub-intervals k < K/2 read the
// particle's own cell, the remaining ones read the next cell; rates of cell 0 drive newborns.
struct StepRates {
  std::vector<VectorXd> birth;  // birth[k][j]
  std::vector<VectorXd> death;  // death[k][j]
};

// Closed-form step coefficients. Cells j >= active_now carry nothing; a particle whose next
// cell is >= active_next is killed at the end of the step and stops reproducing at mid-step.
AgeStep build_age_step(const StepRates& rates, double h, Eigen::Index active_now, Eigen::Index active_next);

VectorXd age_apply_step(const AgeStep& K, const VectorXd& f);
VectorXd age_propagate_step(const AgeStep& K, const VectorXd& mu);

class AgeStructuredSemigroup : public KernelSemigroup {
 public:
  AgeStructuredSemigroup(Grid grid, double dt);

  const Grid& grid() const override { return grid_; }
  double time_step() const override { return dt_; }
  double composition_tolerance() const override { return 1e-6; }

  VectorXd apply(double s, double t, const VectorXd& f) const override;
  VectorXd propagate(double s, double t, const VectorXd& mu) const override;

  // Coefficients of step n (covering [n dt, (n+1) dt]); may return a cached object or fill scratch.
  virtual const AgeStep& step(long n, AgeStep& scratch) const = 0;

 protected:
  Grid grid_;
  double dt_;
};

// M_{s,t} f by marching the boundary trace G_k = (M_{k,t} f)(0) backward in k through the
// discrete Volterra equation, then reconstructing every cell along its characteristic.
VectorXd duhamel_march(const AgeStructuredSemigroup& M, const VectorXd& f, double s, double t);

// Same discrete Duhamel equation solved by Picard iteration on the boundary trace (oracle).
VectorXd duhamel_picard(const AgeStructuredSemigroup& M, const VectorXd& f, double s, double t,
                        int max_iterations = 100000, double tol = 1e-15);

struct PowerResult {
  double Lambda = 0;  // growth factor over one block
  VectorXd vector;    // left: probability weights; right: scaled to sup 1
  double increment = 0;
  int iterations = 0;
};

// Power iteration of M_{s,s+block} acting on measures (left) or functions (right).
PowerResult power_iterate_left(const KernelSemigroup& M, double s, double block, VectorXd start, double tol,
                               int max_iterations);
PowerResult power_iterate_right(const KernelSemigroup& M, double s, double block, VectorXd start, double tol,
                                int max_iterations);

}  // namespace ergodic
