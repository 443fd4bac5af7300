#include <numbers>
#include <random>

#include <catch_amalgamated.hpp>

#include "bose_edgeworth/onebody.hpp"

using namespace bose_edgeworth;
using Catch::Approx;

namespace {

ModelConfig small(int M, double g) {
  ModelConfig c;
  c.M = M;
  c.coupling = g;
  return c;
}

Vec random_unit(int M, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Vec v(M);
  for (int i = 0; i < M; ++i) v(i) = nd(rng);
  return v.normalized();
}

} // namespace

TEST_CASE("three-site Dirichlet stencil") {
  const Mat L = build_laplacian(make_basis(3, -2.0, 2.0, Boundary::Dirichlet));
  Mat expect(3, 3);
  expect << 2, -1, 0, -1, 2, -1, 0, -1, 2;
  CHECK((L - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("periodic Laplacian annihilates constants") {
  const Mat L = build_laplacian(make_basis(7, 0.0, 7.0, Boundary::Periodic));
  CHECK((L * Vec::Ones(7)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sine modes follow the lattice dispersion") {
  const int M = 63;
  const ModeBasis b = make_basis(M, 0.0, std::numbers::pi, Boundary::Dirichlet);
  const Mat L = build_laplacian(b);
  const double dx = b.spacing;
  for (int k : {1, 2, 5}) {
    Vec v = (k * b.positions.array()).sin();
    const double lam = 4.0 * std::pow(std::sin(k * dx / 2.0), 2) / (dx * dx);
    CHECK((L * v - lam * v).norm() < 1e-9 * v.norm());
    CHECK(std::abs(lam - k * k) <= std::pow(k, 4) * dx * dx / 12.0 + 1e-12);
  }
}

TEST_CASE("model construction validates its inputs") {
  ModelConfig c = small(4, 0.5);
  c.trap = std::vector<double>{1.0, -0.1, 0.0, 2.0};
  CHECK_THROWS_AS(build_model(c), Error);
  c.trap.reset();
  c.M = 1;
  CHECK_THROWS_AS(build_model(c), Error);

  ModelConfig p;
  p.M = 4;
  p.x_min = 0.0;
  p.x_max = 4.0;
  p.boundary = Boundary::Periodic;
  p.kernel_width = 3.0;
  try {
    build_model(p);
    FAIL("wrapped wide kernel should not be positive");
  } catch (const Error& e) {
    CHECK(e.kind() == "KernelNotPositive");
  }

  const ModelSpec s = build_model(small(16, 0.5));
  CHECK(max_asymmetry(s.kernel) == 0.0);
  Eigen::SelfAdjointEigenSolver<Mat> es(s.kernel);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("Hartree energy") {
  std::mt19937_64 rng(7);
  SECTION("g = 0 at the ground mode is the lowest one-body eigenvalue") {
    const ModelSpec s = build_model(small(12, 0.0));
    Eigen::SelfAdjointEigenSolver<Mat> es(one_body_operator(s));
    CHECK(hartree_energy(s, es.eigenvectors().col(0)) == Approx(es.eigenvalues()(0)).epsilon(1e-13));
  }
  SECTION("interaction never lowers the energy and matches a double loop") {
    const ModelSpec s = build_model(small(10, 0.8));
    const Mat h0 = one_body_operator(s);
    const Mat v = s.interaction();
    for (int t = 0; t < 5; ++t) {
      const Vec c = random_unit(10, rng);
      double kinetic = 0.0, inter = 0.0;
      for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) {
          kinetic += c(i) * h0(i, j) * c(j);
          inter += 0.5 * c(i) * c(i) * v(i, j) * c(j) * c(j);
        }
      const double e = hartree_energy(s, c);
      CHECK(std::abs(e - kinetic - inter) < 1e-12 * std::max(1.0, std::abs(e)));
      CHECK(e >= kinetic - 1e-12);
    }
  }
  SECTION("unnormalized input is rejected") {
    const ModelSpec s = build_model(small(5, 0.5));
    CHECK_THROWS_AS(hartree_energy(s, 1.01 * Vec::Unit(5, 0)), Error);
  }
}

TEST_CASE("gradient of the Hartree energy along tangent directions") {
  std::mt19937_64 rng(11);
  const ModelSpec s = build_model(small(8, 0.7));
  const Vec c = random_unit(8, rng);
  Vec u = random_unit(8, rng);
  u -= c.dot(u) * c;
  u.normalize();
  const Vec Hc = one_body_operator(s) * c + mean_field_potential(s, c).cwiseProduct(c);
  const double analytic = 2.0 * u.dot(Hc);
  const double h = 1e-5;
  const double fd = (hartree_energy(s, (c + h * u).normalized()) - hartree_energy(s, (c - h * u).normalized())) / (2 * h);
  CHECK(std::abs(fd - analytic) <= 1e-6 * std::abs(analytic));
}

TEST_CASE("Hartree solver") {
  SECTION("g = 0 gives the one-body ground state") {
    const ModelSpec s = build_model(small(12, 0.0));
    const HartreeSolution sol = solve_hartree(s);
    Eigen::SelfAdjointEigenSolver<Mat> es(one_body_operator(s));
    CHECK(std::abs(std::abs(sol.phi.dot(es.eigenvectors().col(0))) - 1.0) < 1e-12);
    CHECK(sol.e_H == Approx(es.eigenvalues()(0)).epsilon(1e-12));
    CHECK(sol.mu_H == Approx(es.eigenvalues()(0)).epsilon(1e-12));
  }
  SECTION("first-order perturbation theory in g") {
    const ModelSpec s0 = build_model(small(10, 0.0));
    Eigen::SelfAdjointEigenSolver<Mat> es(one_body_operator(s0));
    const Vec rho0 = es.eigenvectors().col(0).array().square();
    const ModelSpec unit = build_model(small(10, 1.0));
    const double first = 0.5 * rho0.dot(unit.interaction() * rho0);
    double err[2];
    const double gs[2] = {0.02, 0.01};
    for (int k = 0; k < 2; ++k) {
      const HartreeSolution sol = solve_hartree(build_model(small(10, gs[k])));
      err[k] = std::abs(sol.e_H - es.eigenvalues()(0) - gs[k] * first);
    }
    CHECK(err[0] < 1e-3);
    CHECK(err[0] / err[1] == Approx(4.0).margin(0.2)); // O(g^2)
  }
  SECTION("default model invariants") {
    const ModelSpec s = build_model(ModelConfig{});
    const HartreeSolution sol = solve_hartree(s);
    CHECK(sol.residual < 1e-10);
    CHECK(std::abs(sol.phi.norm() - 1.0) < 1e-12);
    CHECK(std::abs(sol.phi.dot(sol.h * sol.phi)) < 1e-10);
    CHECK(sol.phi.sum() > 0.0);
    CHECK_FALSE(sol.multiple_minima_suspected);
    Eigen::SelfAdjointEigenSolver<Mat> eh(sol.h);
    CHECK(eh.eigenvalues()(0) > -1e-10);
    CHECK(eh.eigenvalues()(1) > 1e-6);
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) CHECK(sol.e_H <= hartree_energy(s, random_unit(16, rng)) + 1e-12);

    const HartreeSolution other = solve_hartree(s, 1e-11, 200000, 999);
    CHECK((sol.phi.cwiseAbs() - other.phi.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-8);
  }
  SECTION("iteration budget exhausted") {
    CHECK_THROWS_AS(solve_hartree(build_model(small(10, 2.0)), 1e-13, 3), Error);
  }
}

TEST_CASE("condensate projectors") {
  const HartreeSolution sol = solve_hartree(build_model(small(9, 0.5)));
  auto [p, q] = projectors(sol);
  CHECK((p * sol.phi - sol.phi).norm() < 1e-14);
  CHECK((q * sol.phi).norm() < 1e-14);
  CHECK(p.trace() == Approx(1.0).epsilon(1e-14));
  CHECK(q.trace() == Approx(8.0).epsilon(1e-14));
  CHECK((p * p - p).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((p * q).cwiseAbs().maxCoeff() < 1e-14);
}
