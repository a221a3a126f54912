#pragma once

#include "ergodic/semigroup.hpp"

#include <cstdint>
#include <vector>

namespace ergodic {

struct CoreSuiteConfig {
  int kernels = 1000;
  int max_cells = 20;
  double slack = 1e-6;
  double conservation_tol = 1e-12;
  std::uint64_t seed = 1;
};

struct CoreCase {
  int index = 0;
  int cells = 0, period = 0, blocks = 0, block_steps = 0;
  double capacity = 0;
  double ii_ratio = 0;      // lhs / rhs of the auxiliary contraction
  double iii_ratio = 0;     // lhs / rhs of the normalized contraction
  double borne_margin = 0;  // min over μ, τ of α · mass_lower_bound − 1
  double conservation_error = 0;
  bool admissible = false;
  bool pass_ii = false, pass_iii = false, pass_borne = false, pass_conservation = false;
  bool pass() const { return admissible && pass_ii && pass_iii && pass_borne && pass_conservation; }
};

struct CoreSuiteReport {
  std::vector<CoreCase> cases;
  int fail_admissible = 0, fail_ii = 0, fail_iii = 0, fail_borne = 0, fail_conservation = 0;
  double worst_ii = 0, worst_iii = 0, worst_borne = 0, worst_conservation = 0;
  bool pass() const { return fail_admissible + fail_ii + fail_iii + fail_borne + fail_conservation == 0; }
};

// Random positive step matrices (period ≤ 4, ≤ max_cells cells) with brute-force certificates:
// ν_i the normalized row minimum of each block, c_i its Doeblin constant, d_i, α, β the smallest
// constants valid on every horizon in use.
CoreSuiteReport core_property_suite(const CoreSuiteConfig& cfg);

}  // namespace ergodic
