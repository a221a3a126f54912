#include "ergodic/renewal.hpp"

#include <doctest.h>

#include <random>

using namespace ergodic;

namespace {

const CrenelParams kCrenel{1.0, 1.0, 0.75, 1.0};

}  // namespace

TEST_CASE("duhamel_apply: identity at t = 0 and e^{bt} mass") {
  const RenewalSemigroup R(DivisionRate::constant(1.0), 1.0 / 128);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto f = GridFunction<double>::from(R.grid(), [&](double) { return u(rng); });
  CHECK((duhamel_apply(R, f, 0.0).values - f.values).cwiseAbs().maxCoeff() == 0.0);

  const auto one = GridFunction<double>::constant(R.grid(), 1.0);
  for (double b : {0.5, 1.0, 2.0}) {
    const RenewalSemigroup Rb(DivisionRate::constant(b), 1.0 / 128);
    const auto m = duhamel_apply(Rb, GridFunction<double>::constant(Rb.grid(), 1.0), 2.0);
    CHECK(m.values[0] == doctest::Approx(std::exp(2.0 * b)).epsilon(1e-9));
    CHECK(m.values[m.values.size() / 2] == doctest::Approx(std::exp(2.0 * b)).epsilon(1e-9));
  }
}

TEST_CASE("duhamel_apply: Picard oracle agrees on small windows") {
  const RenewalSemigroup R(DivisionRate::crenel(kCrenel, 1.0), 1.0 / 64, 10.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const VectorXd f = VectorXd::NullaryExpr(R.grid().n_cells, [&] { return u(rng); });
  for (double t : {0.25, 0.5, 1.0}) {
    const VectorXd a = duhamel_march(R, f, 0.0, t);
    const VectorXd b = duhamel_picard(R, f, 0.0, t);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("malthus_lambda: constant rates") {
  CHECK(std::abs(malthus_lambda(DivisionRate::constant(1.0)) - 1.0) < 1e-8);
  for (double c : {0.25, 3.0})
    CHECK(std::abs(malthus_lambda(DivisionRate::constant(c)) - c) < 1e-8);
}

TEST_CASE("malthus_lambda: crenel root is the discrete left eigen-rate") {
  const RenewalSemigroup R(DivisionRate::crenel(kCrenel, 1.0), 1.0 / 256);
  const double lambda = malthus_lambda(R.rate(), R.a_max());
  const EigenTriplet tr = perron_triplet(R);
  CHECK(std::abs(tr.lambda - lambda) < 5e-3);
  const double dt = R.time_step();
  const VectorXd step = R.propagate(0.0, dt, tr.gamma.density_weights);
  CHECK(tv_distance(step * std::exp(-tr.lambda * dt), tr.gamma.density_weights) < 1e-10);
}

TEST_CASE("stationary_profile: 2e^{-2a} for b = 1, negligible tail, invariance") {
  const RenewalSemigroup R(DivisionRate::constant(1.0), 1.0 / 256);
  const StationaryProfile sp = stationary_profile(R.rate(), 1.0, R.grid());
  CHECK(sp.kappa == doctest::Approx(2.0));
  CHECK(sp.tail_mass < 1e-12);
  double worst = 0;
  for (Eigen::Index j = 0; j < R.grid().n_cells; ++j) {
    const double a = R.grid().left(j), h = R.grid().spacing();
    worst = std::max(worst, std::abs(sp.gamma.density_weights[j] - (std::exp(-2 * a) - std::exp(-2 * (a + h)))));
  }
  CHECK(worst < 1e-14);

  const EigenTriplet tr = perron_triplet(R);
  const VectorXd moved = R.propagate(0.0, 1.0, tr.gamma.density_weights) * std::exp(-tr.lambda);
  CHECK(tv_distance(moved, tr.gamma.density_weights) < 1e-9);
  const VectorXd explicit_moved = R.propagate(0.0, 1.0, sp.gamma.density_weights) * std::exp(-1.0);
  CHECK(tv_distance(explicit_moved, sp.gamma.density_weights) < 5e-3);
}

TEST_CASE("harmonic_h: h ≡ 1 for b = 1, eigenfunction, below β") {
  const RenewalSemigroup R(DivisionRate::constant(1.0), 1.0 / 256);
  const EigenTriplet ex = explicit_triplet(R);
  CHECK((ex.h.values.array() - 1.0).abs().maxCoeff() < 1e-10);

  const RenewalSemigroup C(DivisionRate::crenel(kCrenel, 1.0), 1.0 / 256);
  const EigenTriplet tr = perron_triplet(C);
  const VectorXd Mh = C.apply(0.0, 1.0, tr.h.values);
  CHECK((Mh * std::exp(-tr.lambda) - tr.h.values).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(pair(tr.gamma, tr.h) == doctest::Approx(1.0).epsilon(1e-10));

  const H1Construction h1 = h1_nu_construct(C, 0.25);
  const double beta = 1.0 / h1.d;
  // h normalized by ν(h) = 1.
  const double scale = pair(h1.nu, tr.h);
  CHECK(tr.h.sup_norm() / scale <= beta);
}

TEST_CASE("spectral_gap_rho: positive, quadrature cross-check, below the observed rate") {
  const DivisionRate b = DivisionRate::crenel(kCrenel, 1.0);
  const double rho = spectral_gap_rho(b);
  CHECK(rho > 0.0);

  // Independent evaluation: midpoint quadrature of the integral, sup from sampling.
  const double alpha = kCrenel.l - kCrenel.p / 2, L = 2 * kCrenel.a0 + kCrenel.p + kCrenel.l;
  const int n = 200000;
  double integral = 0, sup = 0;
  for (int i = 0; i < n; ++i) {
    const double a = (i + 0.5) * L / n;
    integral += b(a) * L / n;
    sup = std::max(sup, b(a));
  }
  const double bl = kCrenel.b_lower;
  const double inner = alpha * bl * (1 - std::exp(-bl * (2 * kCrenel.l - kCrenel.p - alpha))) *
                       std::exp(-2 * integral - 2 * L * sup);
  CHECK(rho == doctest::Approx(-std::log(1 - inner) / L).epsilon(1e-6));

  const RenewalSemigroup R(b, 1.0 / 128);
  const EigenTriplet tr = perron_triplet(R);
  std::vector<double> t;
  for (int k = 0; k <= 12 * 8; ++k) t.push_back(k / 8.0);
  const auto err = decay_series(R, tr, HybridMeasure<double>::dirac(R.grid(), 0.0), t);
  CHECK(rate_fit(t, err).slope <= -rho);

  for (double l : {0.55, 0.75, 1.0}) {
    CrenelParams c = kCrenel;
    c.l = l;
    CHECK(spectral_gap_rho(DivisionRate::crenel(c, 1.0)) > 0.0);
  }
}

TEST_CASE("structural_checks: explicit mass for constant b, crenel monotonicity") {
  const RenewalSemigroup R(DivisionRate::constant(1.0), 1.0 / 64);
  const StructuralReport st = structural_checks(R, 4.0);
  CHECK(st.pass());
  CHECK(st.worst_factor_two == doctest::Approx(0.5).epsilon(1e-9));

  const RenewalSemigroup C(DivisionRate::crenel(kCrenel, 1.0), 1.0 / 128);
  const StructuralReport sc = structural_checks(C, 12.0);
  CHECK(sc.monotone);
  CHECK(sc.factor_two);
  CHECK(sc.lattice_points > 0);

  const auto m0 = mass(C, 0.0, 0.0);
  CHECK(m0.values.maxCoeff() <= 2.0 * m0.values[0]);
}

TEST_CASE("h1_nu_construct: default window, degenerate window, probability") {
  const RenewalSemigroup R(DivisionRate::crenel(kCrenel, 1.0), 1.0 / 128);
  const double alpha = kCrenel.l - kCrenel.p / 2;
  const H1Construction h1 = h1_nu_construct(R, alpha);
  CHECK(is_probability(h1.nu));
  const CouplingCertificate cert = renewal_certificate(h1, 3);
  CHECK(certify_admissible(R, cert, 0.0, cert.times.back() + 1.0).pass());
  CHECK(capacity(cert) / cert.times.back() > 0.0);

  const double full = 2 * kCrenel.l - kCrenel.p;
  const H1Construction edge = h1_nu_construct(R, full - 1.0 / 128);
  const H1Construction mid = h1_nu_construct(R, full / 2);
  CHECK(edge.c < mid.c);
  CHECK(edge.c < 1e-2 * mid.c + 1e-3);
}

TEST_CASE("tabulated rate reproduces the crenel") {
  std::vector<double> values;
  for (int k = 0; k < 40; ++k) {
    const double a = k * 0.25 + 0.125;
    values.push_back(DivisionRate::crenel(kCrenel, 1.0)(a));
  }
  const DivisionRate tab = DivisionRate::tabulated(values, 0.25, kCrenel);
  const DivisionRate cr = DivisionRate::crenel(kCrenel, 1.0);
  for (double a : {0.1, 1.2, 2.5, 3.9, 7.3}) CHECK(tab(a) == cr(a));
  CHECK(tab.integral(5.0) == doctest::Approx(cr.integral(5.0)));
}
