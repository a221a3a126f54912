#include "ergodic/core_suite.hpp"
#include "ergodic/renewal.hpp"
#include "ergodic/semigroup.hpp"

#include <doctest.h>

#include <random>

using namespace ergodic;

namespace {

MatrixXd random_positive(Eigen::Index n, std::mt19937_64& rng, double lo = 0.05, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) K(i, j) = u(rng);
  return K;
}

// Row x of M is δ_x M; every row equals ν, so M f = ν(f) 𝟏.
StepMatrixSemigroup rank_one(const VectorXd& nu) {
  const Grid g(0.0, 1.0, nu.size());
  return StepMatrixSemigroup(g, {VectorXd::Ones(nu.size()) * nu.transpose()});
}

}  // namespace

TEST_CASE("mass: identity at t = s") {
  std::mt19937_64 rng(1);
  const StepMatrixSemigroup M(Grid(0.0, 1.0, 6), {random_positive(6, rng), random_positive(6, rng)});
  const auto m = mass(M, 3.0, 3.0);
  CHECK((m.values.array() - 1.0).abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(mass(M, 0.0, 0.5), LatticeError);
}

TEST_CASE("mass: marching and Picard agree for constant renewal") {
  const RenewalSemigroup R(DivisionRate::constant(1.0), 1.0 / 64);
  const VectorXd one = VectorXd::Ones(R.grid().n_cells);
  const VectorXd march = duhamel_march(R, one, 0.0, 1.0);
  const VectorXd picard = duhamel_picard(R, one, 0.0, 1.0);
  CHECK(std::abs(march[0] - picard[0]) < 1e-6);
  CHECK(march[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-3));
}

TEST_CASE("auxiliary semigroup: conservative, terminal identity, composition") {
  std::mt19937_64 rng(2);
  const Grid g(0.0, 1.0, 7);
  const StepMatrixSemigroup M(g, {random_positive(7, rng), random_positive(7, rng), random_positive(7, rng)});
  const double T = 6.0;

  const auto one = GridFunction<double>::constant(g, 1.0);
  for (double s : {0.0, 1.0, 2.0})
    for (double u : {s, s + 2.0, T}) {
      const auto p = auxiliary_apply(M, T, s, u, one);
      CHECK((p.values.array() - 1.0).abs().maxCoeff() < 1e-12);
    }

  const auto m = mass(M, 1.0, T);
  const MatrixXd MT = M.matrix(1.0, T);
  for (Eigen::Index x = 0; x < g.n_cells; ++x) {
    const auto dx = HybridMeasure<double>::dirac(g, g.midpoint(x));
    const auto lhs = auxiliary_propagate(M, T, 1.0, T, dx);
    const VectorXd rhs = MT.row(x).transpose() / m.values[x];
    CHECK((lhs.projected() - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }

  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto f = GridFunction<double>::from(g, [&](double) { return u(rng); });
  const auto inner = auxiliary_apply(M, T, 3.0, 5.0, f);
  const auto composed = auxiliary_apply(M, T, 1.0, 3.0, inner);
  const auto direct = auxiliary_apply(M, T, 1.0, 5.0, f);
  CHECK((composed.values - direct.values).cwiseAbs().maxCoeff() < M.composition_tolerance());
}

TEST_CASE("auxiliary semigroup: composition on a renewal instance") {
  CrenelParams c{1.0, 1.0, 0.75, 1.0};
  const RenewalSemigroup R(DivisionRate::crenel(c, 1.0), 1.0 / 32, 8.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto f = GridFunction<double>::from(R.grid(), [&](double) { return u(rng); });
  const double T = 4.0;
  const auto direct = auxiliary_apply(R, T, 0.0, 3.0, f);
  const auto composed = auxiliary_apply(R, T, 0.0, 1.0, auxiliary_apply(R, T, 1.0, 3.0, f));
  CHECK((direct.values - composed.values).cwiseAbs().maxCoeff() < R.composition_tolerance());
}

TEST_CASE("doeblin_constant: rank-one and identity kernels") {
  VectorXd nu(5);
  nu << 0.1, 0.2, 0.3, 0.25, 0.15;
  const auto M = rank_one(nu);
  const HybridMeasure<double> nu_m(M.grid(), nu);
  CHECK(doeblin_constant(M, 0.0, 1.0, nu_m) == doctest::Approx(1.0));

  const StepMatrixSemigroup I(Grid(0.0, 1.0, 5), {MatrixXd::Identity(5, 5)});
  CHECK(doeblin_constant(I, 0.0, 3.0, HybridMeasure<double>::uniform(I.grid())) == 0.0);
}

TEST_CASE("doeblin_constant: crenel renewal dominates the proof's constant") {
  CrenelParams c{1.0, 1.0, 0.75, 1.0};
  const RenewalSemigroup R(DivisionRate::crenel(c, 1.0), 1.0 / 128);
  const H1Construction h1 = h1_nu_construct(R, 0.25);
  CHECK(h1.t0 == doctest::Approx(1.0 + 2.0 * 1.0 + 0.75));
  CHECK(is_probability(h1.nu));
  CHECK(h1.c > 0.0);
  CHECK(doeblin_constant(R, 0.0, h1.t0, h1.nu) >= h1.c);
}

TEST_CASE("mass_domination: flat mass, renewal lower bound, brute force") {
  std::mt19937_64 rng(4);
  // Stochastic rows scaled by a common factor: m is constant in space.
  MatrixXd K = random_positive(6, rng);
  for (Eigen::Index i = 0; i < 6; ++i) K.row(i) *= 1.7 / K.row(i).sum();
  const StepMatrixSemigroup flat(Grid(0.0, 1.0, 6), {K});
  CHECK(mass_domination(flat, HybridMeasure<double>::dirac(flat.grid(), 0.3), 0.0, {1.0, 2.0, 5.0}) ==
        doctest::Approx(1.0));

  CrenelParams c{1.0, 1.0, 0.75, 1.0};
  const RenewalSemigroup R(DivisionRate::crenel(c, 1.0), 1.0 / 128);
  const H1Construction h1 = h1_nu_construct(R, 0.25);
  std::vector<double> horizons;
  for (int k = 0; k <= 40; ++k) horizons.push_back(0.25 * k);
  CHECK(mass_domination(R, h1.nu, 0.0, horizons) >= h1.d * (1 - 1e-9));
  CHECK(h1.d == doctest::Approx(h1.alpha / (2.0 * h1.mass_window)));

  const StepMatrixSemigroup P(Grid(0.0, 1.0, 10), {random_positive(10, rng), random_positive(10, rng)});
  const auto uni = HybridMeasure<double>::uniform(P.grid());
  const std::vector<double> taus{0.0, 1.0, 2.0, 3.0, 4.0};
  double brute = INFINITY;
  for (double tau : taus) {
    const VectorXd m = P.apply(0.0, tau, VectorXd::Ones(10));
    brute = std::min(brute, uni.density_weights.dot(m) / m.maxCoeff());
  }
  CHECK(mass_domination(P, uni, 0.0, taus) == doctest::Approx(brute).epsilon(1e-14));
}

TEST_CASE("certify_admissible: the renewal certificate passes, broken ones fail") {
  CrenelParams c{1.0, 1.0, 0.75, 1.0};
  const RenewalSemigroup R(DivisionRate::crenel(c, 1.0), 1.0 / 64);
  const H1Construction h1 = h1_nu_construct(R, 0.25);
  const CouplingCertificate cert = renewal_certificate(h1, 3);
  CHECK(cert.alpha == doctest::Approx(1.0 / (h1.c * h1.d)));
  CHECK(cert.beta == doctest::Approx(1.0 / h1.d));
  const AdmissibilityReport ok = certify_admissible(R, cert, 0.0, cert.times.back() + 2.0);
  CHECK(ok.pass());

  CouplingCertificate small = cert;
  small.alpha = 0.5;
  CHECK_FALSE(certify_admissible(R, small, 0.0, cert.times.back() + 2.0).pass());

  std::mt19937_64 rng(6);
  const StepMatrixSemigroup P(Grid(0.0, 1.0, 8), {random_positive(8, rng)});
  CouplingCertificate pc;
  pc.times = {0.0, 1.0};
  pc.nu = HybridMeasure<double>::uniform(P.grid());
  pc.nu_i = {pc.nu};
  pc.c = {doeblin_constant(P, 0.0, 1.0, pc.nu)};
  pc.d = {mass_domination(P, pc.nu, 1.0, {1.0, 2.0, 3.0})};
  pc.alpha = 1.0 / (pc.c[0] * pc.d[0]);
  pc.beta = 1.0 / pc.d[0];
  CHECK(certify_admissible(P, pc, 0.0, 3.0, {1.0, 2.0, 3.0}).a1.pass);
  pc.c[0] *= 1.5;
  const AdmissibilityReport bad = certify_admissible(P, pc, 0.0, 3.0, {1.0, 2.0, 3.0});
  CHECK_FALSE(bad.a1.pass);
  CHECK(bad.a1.worst_margin < 0.0);
}

TEST_CASE("capacity: empty, constant steps, homogeneous lower bound") {
  CHECK(capacity(CouplingCertificate{}) == 0.0);
  const double c = 0.3, d = 0.5;
  const int N = 7;
  CHECK(capacity(std::vector<double>(N, c), std::vector<double>(N, d)) ==
        doctest::Approx(-N * std::log(1 - c * d)));
  CHECK(capacity({1.0}, {1.0}) == INFINITY);

  CrenelParams cp{1.0, 1.0, 0.75, 1.0};
  const RenewalSemigroup R(DivisionRate::crenel(cp, 1.0), 1.0 / 64);
  const H1Construction h1 = h1_nu_construct(R, 0.25);
  const double r = h1.t0, t = 6.0 * r;
  const CouplingCertificate cert = renewal_certificate(h1, static_cast<int>(std::floor(t / r)));
  CHECK(capacity(cert) >= std::floor((t - r) / r) * -std::log(1 - h1.c * h1.d));
}

TEST_CASE("contraction_check: trivial and rank-one cases") {
  std::mt19937_64 rng(7);
  const StepMatrixSemigroup P(Grid(0.0, 1.0, 6), {random_positive(6, rng)});
  CouplingCertificate pc;
  pc.times = {0.0, 1.0};
  pc.nu = HybridMeasure<double>::uniform(P.grid());
  pc.nu_i = {pc.nu};
  pc.c = {doeblin_constant(P, 0.0, 1.0, pc.nu)};
  pc.d = {mass_domination(P, pc.nu, 1.0, {1.0, 2.0})};
  pc.alpha = 1.0 / (pc.c[0] * pc.d[0]);
  pc.beta = 1.0 / pc.d[0];
  const auto mu = HybridMeasure<double>::dirac(P.grid(), 0.2);
  const ContractionReport same = contraction_check(P, pc, mu, mu, 2.0);
  CHECK(same.lhs_ii == 0.0);
  CHECK(same.pass());

  VectorXd nu(4);
  nu << 0.4, 0.3, 0.2, 0.1;
  const auto R1 = rank_one(nu);
  CouplingCertificate one;
  one.times = {0.0, 1.0};
  one.nu = HybridMeasure<double>(R1.grid(), nu);
  one.nu_i = {one.nu};
  one.c = {1.0};
  one.d = {1.0};
  const ContractionReport r = contraction_check(R1, one, HybridMeasure<double>::dirac(R1.grid(), 0.1),
                                                HybridMeasure<double>::dirac(R1.grid(), 0.9), 1.0);
  CHECK(r.iii_applicable);
  CHECK(r.lhs_iii < 1e-15);
}

TEST_CASE("contraction properties on random kernels (property suite)") {
  CoreSuiteConfig cfg;
  cfg.kernels = 150;
  cfg.max_cells = 15;
  cfg.seed = 15;
  const CoreSuiteReport rep = core_property_suite(cfg);
  CHECK(rep.cases.size() == 150);
  CHECK(rep.fail_admissible == 0);
  CHECK(rep.fail_ii == 0);
  CHECK(rep.fail_iii == 0);
  CHECK(rep.fail_borne == 0);
  CHECK(rep.worst_conservation <= 1e-12);
}

TEST_CASE("harmonic_extract: flat mass and constant renewal give h ≡ 1") {
  std::mt19937_64 rng(8);
  MatrixXd K = random_positive(5, rng);
  for (Eigen::Index i = 0; i < 5; ++i) K.row(i) *= 1.3 / K.row(i).sum();
  const StepMatrixSemigroup flat(Grid(0.0, 1.0, 5), {K});
  const auto hf = harmonic_extract(flat, 0.0, HybridMeasure<double>::uniform(flat.grid()), 10.0);
  CHECK((hf.h.values.array() - 1.0).abs().maxCoeff() < 1e-12);

  const RenewalSemigroup R(DivisionRate::constant(1.0), 1.0 / 64);
  const EigenTriplet ex = explicit_triplet(R);
  const auto hr = harmonic_extract(R, 0.0, ex.gamma, 20.0);
  CHECK((hr.h.values.array() - 1.0).abs().maxCoeff() < 2e-3);
}

TEST_CASE("harmonic_extract: crenel renewal matches the explicit h") {
  CrenelParams c{1.0, 1.0, 0.75, 1.0};
  const RenewalSemigroup R(DivisionRate::crenel(c, 1.0), 1.0 / 128);
  const EigenTriplet ex = explicit_triplet(R);
  const auto hr = harmonic_extract(R, 0.0, ex.gamma, 30.0);
  // Grid error of the first-order age discretization; compare where h is resolved.
  double worst = 0;
  for (Eigen::Index j = 0; j < R.grid().n_cells; ++j)
    if (R.grid().midpoint(j) < 10.0) worst = std::max(worst, std::abs(hr.h.values[j] - ex.h.values[j]));
  CHECK(worst < 2e-2);
}

TEST_CASE("ergodic_gap: constant renewal from δ0 stays below the bound and decays") {
  const RenewalSemigroup R(DivisionRate::constant(1.0), 1.0 / 64);
  const H1Construction h1 = h1_nu_construct(R, 0.25);
  const CouplingCertificate cert = renewal_certificate(h1, 8);
  const auto h = harmonic_extract(R, 0.0, cert.nu, 20.0);
  const EigenTriplet tr = perron_triplet(R);
  const auto mu = HybridMeasure<double>::dirac(R.grid(), 0.0);
  double previous = INFINITY;
  for (double t : {0.0, 2.0, 4.0, 6.0, 8.0, 10.0}) {
    const GapReport g = ergodic_gap(R, 0.0, t, mu, cert, h, tr.gamma, 0.0);
    CHECK(g.pass());
    const double relative = g.lhs / pair(mu, mass(R, 0.0, t));
    if (t > 0) CHECK(relative < previous);
    previous = relative;
  }
}

TEST_CASE("rate_fit: exact exponential and constant series") {
  std::vector<double> t, e, flat;
  for (int k = 0; k <= 50; ++k) {
    t.push_back(0.2 * k);
    e.push_back(3.0 * std::exp(-2.0 * t.back()));
    flat.push_back(0.7);
  }
  CHECK(rate_fit(t, e).slope == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(std::abs(rate_fit(t, flat).slope) < 1e-12);
  e[30] = 0.0;
  const RateFit dropped = rate_fit(t, e);
  CHECK(dropped.dropped_nonpositive == 1);
  CHECK(dropped.slope == doctest::Approx(-2.0).epsilon(1e-12));
}
