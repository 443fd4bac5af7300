#include <random>

#include <catch_amalgamated.hpp>

#include "bose_edgeworth/edgeworth.hpp"

using namespace bose_edgeworth;
using Catch::Approx;

namespace {

double gauss_mean(const std::function<double(double)>& f, double sigma = 1.0) {
  const Quadrature q = gauss_hermite(80);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.nodes.size(); ++i) acc += q.weights(i) * f(sigma * q.nodes(i));
  return acc;
}

bool same(const Polynomial& a, const Polynomial& b, double tol) {
  for (int k = 0; k <= std::max(a.degree(), b.degree()); ++k)
    if (std::abs(a.coeff(k) - b.coeff(k)) > tol * std::max(1.0, std::abs(b.coeff(k)))) return false;
  return true;
}

} // namespace

TEST_CASE("Hermite polynomials") {
  CHECK(same(hermite(3), Polynomial({0, -3, 0, 1}), 0));
  CHECK(same(hermite(4), Polynomial({3, 0, -6, 0, 1}), 0));
  CHECK(same(hermite(6), Polynomial({-15, 0, 45, 0, -15, 0, 1}), 0));
  for (int m = 0; m <= 6; ++m)
    for (int n = 0; n <= 6; ++n) {
      const double ip = gauss_mean([&](double x) { return hermite(m)(x) * hermite(n)(x); });
      CHECK(ip == Approx(m == n ? factorial(n) : 0.0).margin(1e-9));
    }
  CHECK_THROWS_AS(hermite(41), Error);
}

TEST_CASE("law of a single particle") {
  const double p = 0.3;
  Mat B = Mat::Zero(2, 2);
  B(1, 1) = 1.0;
  Vec phi(2);
  phi << std::sqrt(1 - p), std::sqrt(p);
  const IidLaw law = iid_single_particle_law(B, phi);
  CHECK(law.mean == Approx(p).epsilon(1e-14));
  CHECK(law.cumulants(2) == Approx(p * (1 - p)).epsilon(1e-13));
  CHECK(law.cumulants(3) == Approx(p * (1 - p) * (1 - 2 * p)).epsilon(1e-12));
  CHECK(law.cumulants(4) == Approx(p * (1 - p) * (1 - 6 * p * (1 - p))).epsilon(1e-12));
  CHECK(law.sigma_iid == Approx(std::sqrt(p * (1 - p))).epsilon(1e-13));

  SECTION("degenerate eigenvalues are merged") {
    const IidLaw id = iid_single_particle_law(Mat::Identity(3, 3), Vec::Unit(3, 0));
    CHECK(id.law.support.size() == 1);
    CHECK(id.sigma_iid == 0.0);
  }
}

TEST_CASE("iid Edgeworth polynomials") {
  Vec kappa = Vec::Zero(7);
  kappa << 0, 0, 0.8, 0.31, -0.22, 0.17, 0.05;
  const double s = std::sqrt(kappa(2));
  const auto p = iid_polynomials(kappa, s, 3);
  CHECK(same(p[0], Polynomial::constant(1.0), 0));
  const Polynomial p1 = (kappa(3) / (6 * std::pow(s, 3))) * hermite(3).rescaled(s);
  CHECK(same(p[1], p1, 1e-14));
  const Polynomial p2 = (kappa(4) / (24 * std::pow(s, 4))) * hermite(4).rescaled(s) +
                        (kappa(3) * kappa(3) / (72 * std::pow(s, 6))) * hermite(6).rescaled(s);
  CHECK(same(p[2], p2, 1e-13));
  const Polynomial p3 = (kappa(5) / (120 * std::pow(s, 5))) * hermite(5).rescaled(s) +
                        (kappa(3) * kappa(4) / (144 * std::pow(s, 7))) * hermite(7).rescaled(s) +
                        (std::pow(kappa(3), 3) / (1296 * std::pow(s, 9))) * hermite(9).rescaled(s);
  CHECK(same(p[3], p3, 1e-12));
  CHECK_THROWS_AS(iid_polynomials(kappa, s, 5), Error);
}

TEST_CASE("ground-state series") {
  const double sigma = 0.6, alpha3 = -0.4;
  const EdgeworthSeries s = ground_series(sigma, alpha3, 1);
  REQUIRE(s.polys.size() == 2);
  CHECK(s.polys[1].degree() == 3);
  for (double N : {4.0, 100.0}) {
    CHECK(weak_expectation(s, N, [](double) { return 1.0; }).value == Approx(1.0).epsilon(1e-13));
    CHECK(weak_expectation(s, N, [](double x) { return x; }).value == Approx(0.0).margin(1e-13));
    CHECK(weak_expectation(s, N, [](double x) { return x * x; }).value == Approx(sigma * sigma).epsilon(1e-12));
    CHECK(weak_expectation(s, N, [](double x) { return x * x * x; }).value ==
          Approx(alpha3 / std::sqrt(N)).epsilon(1e-11));
  }
  CHECK_THROWS_AS(ground_series(0.0, 1.0, 1), Error);
  CHECK_THROWS_AS(ground_series(1.0, 1.0, 2), Error);
  SECTION("surviving term of alpha3") {
    const int n = 3;
    Vec nu(n);
    nu << 0.3, -0.5, 0.2;
    Mat Bq = Mat::Random(n, n);
    Bq = (Bq + Bq.transpose()).eval();
    CHECK(alpha3_analytic(nu, Mat::Identity(n, n), Mat::Zero(n, n), Bq, 0.0) == Approx(nu.dot(Bq * nu)).epsilon(1e-14));
    CHECK(alpha3_analytic(nu, Mat::Identity(n, n), Mat::Zero(n, n), Bq, 0.1) ==
          Approx(nu.dot(Bq * nu) + 1.2).epsilon(1e-14));
  }
}

TEST_CASE("excited-state series") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  auto unit = [&](int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = nd(rng);
    return Vec(v.normalized());
  };
  const Vec nu = 0.7 * unit(4);
  const double sigma = nu.norm();
  SECTION("one quasi-particle") {
    const Vec xi = unit(4);
    const double ov = xi.dot(nu);
    CHECK(excited_coefficient({xi}, nu, 0) == Approx(1.0).epsilon(1e-14));
    CHECK(excited_coefficient({xi}, nu, 1) == Approx(-ov * ov).epsilon(1e-14));
    const Polynomial p = excited_polynomial({xi}, nu, sigma);
    const Polynomial want = Polynomial::constant(1.0) + (ov * ov / (sigma * sigma)) * hermite(2).rescaled(sigma);
    CHECK(same(p, want, 1e-13));
    const EdgeworthSeries s = excited_series({xi}, nu, sigma);
    CHECK(weak_expectation(s, 10.0, [](double x) { return x * x; }).value ==
          Approx(sigma * sigma + 2 * ov * ov).epsilon(1e-12));
  }
  SECTION("degree, parity and mass") {
    for (int eta = 1; eta <= 3; ++eta) {
      std::vector<Vec> xi;
      for (int j = 0; j < eta; ++j) xi.push_back(unit(4));
      const EdgeworthSeries s = excited_series(xi, nu, sigma);
      CHECK(s.polys[0].degree() == 2 * eta);
      for (int k = 1; k <= 2 * eta; k += 2) CHECK(s.polys[0].coeff(k) == 0.0);
      // <psi, psi> = permanent of the Gram matrix over eta!
      double norm = excited_coefficient(xi, nu, 0);
      CHECK(weak_expectation(s, 10.0, [](double) { return 1.0; }).value == Approx(norm).epsilon(1e-12));
    }
  }
  SECTION("too many quasi-particles") {
    std::vector<Vec> xi(7, unit(4));
    CHECK_THROWS_AS(excited_polynomial(xi, nu, sigma), Error);
  }
}

TEST_CASE("densities and weak expectations") {
  const double sigma = 0.8, alpha3 = 0.9;
  const EdgeworthSeries s = ground_series(sigma, alpha3, 1);
  SECTION("order 0 is the Gaussian") {
    const EdgeworthSeries g = ground_series(sigma, alpha3, 0);
    Vec x(3);
    x << -1.0, 0.0, 1.0;
    const Vec b = density_eval(g, 50.0, x);
    CHECK(b(0) == Approx(b(2)).epsilon(1e-15));
    CHECK(b(1) == Approx(1.0 / (std::sqrt(2 * std::numbers::pi) * sigma)).epsilon(1e-15));
    CHECK(negative_mass(g, 50.0) == 0.0);
  }
  SECTION("Riemann sum of the density matches the quadrature") {
    const double N = 9.0;
    const Vec x = Vec::LinSpaced(8001, -10 * sigma, 10 * sigma);
    const Vec b = density_eval(s, N, x);
    const double dx = x(1) - x(0);
    CHECK(b.sum() * dx == Approx(1.0).epsilon(1e-9));
    CHECK((b.array() * x.array().cube()).sum() * dx == Approx(alpha3 / 3.0).epsilon(1e-8));
    CHECK(negative_mass(s, N) > 0.0);
  }
  SECTION("Fourier transform of the order-1 density") {
    const double N = 16.0;
    for (double t : {0.5, 1.3, 2.0}) {
      const double re = weak_expectation(s, N, [&](double x) { return std::cos(t * x); }).value;
      const double im = weak_expectation(s, N, [&](double x) { return std::sin(t * x); }).value;
      const double g = std::exp(-0.5 * sigma * sigma * t * t);
      // (1 + N^{-1/2} alpha3 (i t)^3 / 6) exp(-sigma^2 t^2 / 2)
      CHECK(re == Approx(g).epsilon(1e-10));
      CHECK(im == Approx(-g * alpha3 * t * t * t / (6.0 * std::sqrt(N))).epsilon(1e-9));
    }
  }
  SECTION("quadrature warning for a discontinuous test function") {
    const WeakResult smooth = weak_expectation(s, 16.0, [](double x) { return std::exp(-x * x); });
    CHECK_FALSE(smooth.quadrature_warning);
    const WeakResult step = weak_expectation(s, 16.0, [](double x) { return x > 0.123 ? 1.0 : 0.0; });
    CHECK(step.quadrature_warning);
  }
}
