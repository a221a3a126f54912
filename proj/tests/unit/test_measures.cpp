#include "ergodic/measures.hpp"

#include <doctest.h>

#include <random>

using namespace ergodic;

namespace {

HybridMeasure<double> random_signed(const Grid& g, std::mt19937_64& rng, int atoms) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  HybridMeasure<double> mu(g);
  for (Eigen::Index i = 0; i < g.n_cells; ++i) mu.density_weights[i] = u(rng);
  std::uniform_real_distribution<double> x(g.lower, g.upper);
  for (int k = 0; k < atoms; ++k) mu.add_atom(x(rng), u(rng));
  return mu;
}

}  // namespace

TEST_CASE("tv_norm: zero, dipole and probabilities") {
  const Grid g(0.0, 1.0, 10);
  CHECK(tv_norm(HybridMeasure<double>(g)) == 0.0);

  const auto dipole = HybridMeasure<double>::dirac(g, 0.15) - HybridMeasure<double>::dirac(g, 0.85);
  CHECK(tv_norm(dipole) == doctest::Approx(2.0));

  CHECK(tv_norm(HybridMeasure<double>::uniform(g)) == doctest::Approx(1.0));
  CHECK(tv_norm(HybridMeasure<double>::dirac(g, 0.3)) == doctest::Approx(1.0));
  auto mixed = HybridMeasure<double>::from_density(g, [](double x) { return 2.0 * x; });
  mixed *= 0.5;
  mixed.add_atom(0.4, 0.5);
  CHECK(is_probability(mixed));
  CHECK(tv_norm(mixed) == doctest::Approx(1.0));
}

TEST_CASE("tv_norm merges atoms at the same location") {
  const Grid g(0.0, 1.0, 4);
  auto mu = HybridMeasure<double>::dirac(g, 0.3, 1.0);
  mu.add_atom(0.3, -1.0);
  CHECK(tv_norm(mu) == 0.0);
}

TEST_CASE("pair: mass and point evaluation") {
  const Grid g(0.0, 1.0, 16);
  const auto one = GridFunction<double>::constant(g, 1.0);
  CHECK(pair(HybridMeasure<double>::uniform(g), one) == doctest::Approx(1.0));

  const auto f = GridFunction<double>::from(g, [](double x) { return std::cos(3.0 * x) + 2.0; });
  CHECK(pair(HybridMeasure<double>::dirac(g, 0.0), f) == doctest::Approx(3.0));
  CHECK(pair(HybridMeasure<double>::dirac(g, 0.5), f) == doctest::Approx(f.values[g.cell_of(0.5)]));

  CHECK_THROWS_AS(pair(HybridMeasure<double>::uniform(Grid(0.0, 2.0, 16)), f), GridMismatch);
}

TEST_CASE("pair: zero-mass measures satisfy the half-TV bound (property)") {
  std::mt19937_64 rng(11);
  const Grid g(0.0, 2.0, 24);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto mu = random_signed(g, rng, trial % 3);
    mu.density_weights.array() -= mu.total_mass() / static_cast<double>(g.n_cells);
    REQUIRE(std::abs(mu.total_mass()) < 1e-12);
    const auto f = GridFunction<double>::from(g, [&](double) { return u(rng); });
    CHECK(std::abs(pair(mu, f)) <= 0.5 * tv_norm(mu) * f.sup_norm() + 1e-12);
  }
}

TEST_CASE("jordan: positive, negative and mixed parts") {
  const Grid g(0.0, 1.0, 8);
  const auto p = HybridMeasure<double>::from_density(g, [](double x) { return 1.0 + x; });
  auto [p_plus, p_minus] = jordan(p);
  CHECK(tv_norm(p_minus) == 0.0);
  CHECK((p_plus.density_weights - p.density_weights).norm() == 0.0);

  auto [n_plus, n_minus] = jordan(-1.0 * p);
  CHECK(tv_norm(n_plus) == 0.0);
  CHECK((n_minus.density_weights - p.density_weights).norm() == 0.0);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto mu = random_signed(g, rng, 2);
    const auto [plus, minus] = jordan(mu);
    double direct = mu.density_weights.cwiseAbs().sum();
    for (const auto& a : mu.atoms) direct += std::abs(a.weight);
    CHECK(tv_norm(plus) + tv_norm(minus) == doctest::Approx(direct).epsilon(1e-12));
    CHECK((plus.density_weights - minus.density_weights - mu.density_weights).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("csv serialization round-trips locations and weights") {
  const Grid g(0.0, 1.0, 2);
  auto mu = HybridMeasure<double>::uniform(g);
  mu.add_atom(0.25, 0.125);
  const std::string csv = to_csv(mu);
  CHECK(csv.rfind("# grid 0 1 2\nlocation,weight\n", 0) == 0);
  CHECK(csv.find("0.25,0.5\n") != std::string::npos);
  CHECK(csv.find("0.75,0.5\n") != std::string::npos);
  CHECK(csv.find("0.25,0.125\n") != std::string::npos);

  const auto f = GridFunction<double>::constant(g, 3.0);
  CHECK(to_csv(f).find("location,value\n0,3\n0.25,3\n0.75,3\n") != std::string::npos);
}

TEST_CASE("grid and measure preconditions") {
  CHECK_THROWS_AS(Grid(1.0, 0.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(Grid(0.0, 1.0, 0), std::invalid_argument);
  const Grid g(0.0, 1.0, 4);
  CHECK_THROWS_AS(HybridMeasure<double>::dirac(g, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(HybridMeasure<double>(g) += HybridMeasure<double>(Grid(0.0, 1.0, 5)), GridMismatch);
  CHECK(g.cell_of(-1.0) == 0);
  CHECK(g.cell_of(2.0) == 3);
}
