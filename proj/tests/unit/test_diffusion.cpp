#include "ergodic/diffusion.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace ergodic;

namespace {

DiffusionEnv constant_env(double sigma, double r) {
  DiffusionEnv env;
  env.sigma = SigmaSchedule::constant(sigma);
  env.r = GrowthRate::constant(r);
  return env;
}

}  // namespace

TEST_CASE("reflected_density: unit mass and symmetry") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double var : {1e-3, 0.05, 0.5, 4.0}) {
    for (int k = 0; k < 5; ++k) {
      const double x = u(rng);
      const int n = 20000;
      double integral = 0;
      for (int i = 0; i < n; ++i) integral += reflected_density(x, (i + 0.5) / n, var) / n;
      CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
      const double y = u(rng);
      CHECK(reflected_density(x, y, var) == doctest::Approx(reflected_density(y, x, var)).epsilon(1e-14));
    }
  }
  const MatrixXd K = reflected_kernel(0.3, 64);
  CHECK((K.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
  CHECK((K - K.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("density_sandwich: cellwise bounds") {
  for (double sig : {5.0, 10.0, 20.0}) {
    const SandwichReport r = density_sandwich(sig, 256);
    CHECK(r.row_sum_error <= 1e-10);
    CHECK(r.lower_margin >= -1e-12);
    CHECK(r.upper_margin >= -1e-12);
    CHECK(r.lower == doctest::Approx(std::max(0.0, r.c - 4.0 / sig)));
  }
}

TEST_CASE("DiffusionSemigroup: uniform is invariant without growth, pure growth without noise") {
  const DiffusionSemigroup D(constant_env(1.0, 0.0), 64, 0.01);
  const auto U = HybridMeasure<double>::uniform(D.grid());
  CHECK((D.propagate(0.0, 1.0, U.density_weights) - U.density_weights).cwiseAbs().maxCoeff() < 1e-12);

  DiffusionEnv still;
  still.r = GrowthRate::tabulated({0.1, 0.5, -0.2});
  const DiffusionSemigroup S(still, 32, 0.125);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const VectorXd mu = VectorXd::NullaryExpr(32, [&] { return u(rng); });
  const VectorXd out = S.propagate(0.0, 2.0, mu);
  for (Eigen::Index i = 0; i < 32; ++i)
    CHECK(out[i] == doctest::Approx(mu[i] * std::exp(still.r(S.grid().midpoint(i)) * 2.0)).epsilon(1e-12));
}

TEST_CASE("DiffusionSemigroup: mass between e^{r̲ t} and e^{r̄ t}") {
  DiffusionEnv env;
  env.sigma = SigmaSchedule::steps({0.0, 1.0, 2.5}, {0.8, 0.0, 2.0});
  env.r = GrowthRate::tabulated({0.4, -0.1, 0.3, 0.2});
  const DiffusionSemigroup D(env, 64, 1.0 / 32);
  const double t = 4.0;
  const VectorXd m = D.apply(0.0, t, VectorXd::Ones(64));
  // The Strang step samples r at midpoints, so bound with the sampled extremes.
  double lo = INFINITY, hi = -INFINITY;
  for (Eigen::Index i = 0; i < 64; ++i) {
    lo = std::min(lo, env.r(D.grid().midpoint(i)));
    hi = std::max(hi, env.r(D.grid().midpoint(i)));
  }
  CHECK(m.minCoeff() >= std::exp(lo * t) * (1 - 1e-12));
  CHECK(m.maxCoeff() <= std::exp(hi * t) * (1 + 1e-12));
  CHECK(lo >= env.r.lower());
  CHECK(hi <= env.r.upper());
}

TEST_CASE("coupling_constants_diffusion: c = 0.6 when σ_{u,u+Δ} = 10 and r is constant") {
  const double sigma0 = 1.0;
  const DiffusionEnv env = constant_env(sigma0, 0.2);
  const double gap = 100.0 / (2 * std::numbers::pi * sigma0 * sigma0);
  const Grid g(0.0, 1.0, 32);
  const CouplingCertificate cert = coupling_constants_diffusion(env, g, {0.0, gap, 2 * gap, 3 * gap});
  for (double c : cert.c) CHECK(c == doctest::Approx(0.6).epsilon(1e-12));

  const DiffusionEnv weak = constant_env(0.1, 0.0);
  CHECK_THROWS_AS(coupling_constants_diffusion(weak, g, {0.0, 1.0, 2.0, 3.0}), DomainError);
}

TEST_CASE("coupling_constants_diffusion: certified on the grid") {
  const DiffusionEnv env = constant_env(2.0, 0.3);
  const DiffusionSemigroup D(env, 48, 1.0 / 16);
  const double gap = std::ceil(100.0 / (2 * std::numbers::pi * 4.0) * 16) / 16;
  const std::vector<double> times{0.0, gap, 2 * gap, 3 * gap};
  const CouplingCertificate cert = coupling_constants_diffusion(env, D.grid(), times);
  const AdmissibilityReport r = certify_admissible(D, cert, 0.0, 3 * gap + 2.0);
  CHECK(r.pass());
  CHECK(r.a1.worst_margin >= 0.0);
}

TEST_CASE("subdivision_build: constant σ and dead windows") {
  const double sigma0 = 2.0, tau = 4.0;
  const DiffusionEnv env = constant_env(sigma0, 0.0);
  const Subdivision sub = subdivision_build(env, 0.0, tau, 40.0);
  const double t1 = 100.0 / (2 * std::numbers::pi * sigma0 * sigma0);
  CHECK(sub.t1 == doctest::Approx(t1));
  // σ_{u,u+τ} ≥ 10 immediately (2πσ0²τ ≥ 100), so windows follow back to back.
  REQUIRE(sub.window_at.size() >= 2);
  for (std::size_t k = 1; k < sub.window_at.size(); ++k)
    CHECK(sub.window_at[k] - sub.window_at[k - 1] == doctest::Approx(tau));

  DiffusionEnv dead;
  dead.sigma = SigmaSchedule::steps({0.0, 5.0}, {0.0, 3.0});
  CHECK(subdivision_build(dead, 0.0, tau, 60.0).t1 >= 5.0);

  const DiffusionEnv slow = constant_env(1.0, 0.0);  // 2π·1·4 < 100: no window ever reaches 10
  CHECK(subdivision_build(slow, 0.0, tau, 60.0).exhausted);
}

TEST_CASE("capacity_diffusion: empty, regular subdivision, on/off slope") {
  const DiffusionEnv slow = constant_env(0.5, 0.0);
  CHECK(capacity_diffusion(slow, 0.0, 10.0, 4.0).value == 0.0);

  // Regular subdivision: every gap carries the same g = −log(1 − 4/σ_Δ) when r is constant.
  const DiffusionEnv flat = constant_env(2.0, 0.25);
  const double delta = 2.0;
  Subdivision sub;
  for (int k = 0; k < 8; ++k) sub.times.push_back(k * delta);
  sub.t1 = delta;
  const SigmaAccumulator acc(flat.sigma);
  const double g = -std::log(1 - 4.0 / acc.sigma_st(0.0, delta));
  CHECK(capacity_g(flat, acc, 0.0, delta) == doctest::Approx(g));
  const CapacityScore score = capacity_diffusion(flat, sub, 0.0, 7 * delta, 4.0);
  const double N = static_cast<double>(score.subdivision.size()) - 2.0;
  CHECK(score.subdivision.size() == 8);
  CHECK(score.value == doctest::Approx(-N * std::log(1 - std::exp(-2 * g))));

  DiffusionEnv env;
  env.sigma = SigmaSchedule::on_off(3, 4.0, 6.0, 1.0, 300.0);
  env.r = GrowthRate::constant(0.1);
  std::vector<double> ts, cs;
  for (double t = 50.0; t <= 250.0; t += 25.0) {
    ts.push_back(t);
    cs.push_back(capacity_diffusion(env, 0.0, t, 4.0).value);
  }
  for (std::size_t k = 1; k < cs.size(); ++k) CHECK(cs[k] >= cs[k - 1]);
  CHECK(capacity_slope(ts, cs) > 0.0);
}

TEST_CASE("diffusion_gap_series: the bound dominates wherever it applies") {
  const DiffusionSemigroup D(constant_env(2.0, 0.3), 96, 1.0 / 64);
  std::vector<double> times;
  for (int k = 1; k <= 120; ++k) times.push_back(0.5 * k);
  const auto rows = diffusion_gap_series(D, HybridMeasure<double>::dirac(D.grid(), 0.05), 0.0, 4.0, times, 10.0);
  int applicable = 0;
  for (const auto& r : rows)
    if (r.applicable) {
      ++applicable;
      CHECK(r.tv_gap <= r.bound);
    }
  CHECK(applicable > 0);
}
