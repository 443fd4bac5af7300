#include <random>

#include <catch_amalgamated.hpp>

#include "bose_edgeworth/bogoliubov.hpp"
#include "bose_edgeworth/exactdiag.hpp"

using namespace bose_edgeworth;
using Catch::Approx;

namespace {

int site_index(const SectorBasis& s, int x) {
  Occupation o(s.M, 0);
  o[x] = 1;
  return s.table.index(o);
}

Vec product_state(const SectorBasis& s, const Vec& phi) {
  Vec psi(s.size());
  for (int i = 0; i < s.size(); ++i) {
    double logc = std::lgamma(s.N + 1.0), amp = 1.0;
    for (int x = 0; x < s.M; ++x) {
      logc -= std::lgamma(s.table[i][x] + 1.0);
      amp *= std::pow(phi(x), s.table[i][x]);
    }
    psi(i) = std::exp(0.5 * logc) * amp;
  }
  return psi;
}

} // namespace

TEST_CASE("sector Hamiltonian") {
  SECTION("one particle is h0") {
    const ModelSpec spec = build_model(sweep_config());
    const SectorHamiltonian H = assemble_hamiltonian(1, spec);
    const Mat h0 = one_body_operator(spec);
    const Mat Hd = Mat(H.matrix);
    for (int x = 0; x < 3; ++x)
      for (int y = 0; y < 3; ++y) CHECK(Hd(site_index(H.basis, x), site_index(H.basis, y)) == Approx(h0(x, y)).margin(1e-14));
  }
  SECTION("free bosons fill the one-body levels") {
    ModelConfig c;
    c.M = 4;
    c.coupling = 0.0;
    const ModelSpec spec = build_model(c);
    Eigen::SelfAdjointEigenSolver<Mat> es(one_body_operator(spec));
    const Vec e = es.eigenvalues();
    const SpectralData sd = eigenstates(assemble_hamiltonian(5, spec), 3);
    CHECK(sd.energies(0) == Approx(5 * e(0)).epsilon(1e-12));
    CHECK(sd.gap == Approx(e(1) - e(0)).epsilon(1e-10));
    CHECK(sd.max_residual < 1e-10);
  }
  SECTION("condensate product state has energy N e_H") {
    const ModelSpec spec = build_model(sweep_config());
    const HartreeSolution sol = solve_hartree(spec);
    for (int N : {2, 5, 9}) {
      const SectorHamiltonian H = assemble_hamiltonian(N, spec);
      const Vec psi = product_state(H.basis, sol.phi);
      CHECK(psi.norm() == Approx(1.0).epsilon(1e-13));
      CHECK(expectation(H.matrix, psi) == Approx(N * sol.e_H).epsilon(1e-12));
    }
  }
  SECTION("gap approaches the lowest Bogoliubov energy") {
    const ModelSpec spec = build_model(sweep_config());
    const HartreeSolution sol = solve_hartree(spec);
    const BogoliubovSolution bog = diagonalize(assemble_quadratic(sol, spec));
    const SpectralData sd = eigenstates(assemble_hamiltonian(24, spec), 2);
    CHECK(std::abs(sd.gap - bog.D(0)) < 0.05 * bog.D(0));
  }
  SECTION("sector dimension guard") {
    try {
      assemble_hamiltonian(20, build_model(ModelConfig{}));
      FAIL("expected a dimension guard");
    } catch (const Error& e) {
      CHECK(e.kind() == "DimensionGuard");
    }
  }
}

TEST_CASE("Lanczos agrees with the dense solver") {
  ModelConfig c;
  c.M = 5;
  c.x_min = -2.5;
  c.x_max = 2.5;
  const SectorHamiltonian H = assemble_hamiltonian(8, build_model(c));
  const SpectralData dense = eigenstates(H, 3);
  const SpectralData kry = detail::lanczos(H.matrix, 3, 1e-10);
  CHECK((dense.energies - kry.energies).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(std::abs(std::abs(dense.states.col(0).dot(kry.states.col(0))) - 1.0) < 1e-9);
}

TEST_CASE("one-body statistics of the ground state") {
  const ModelSpec spec = build_model(sweep_config());
  const HartreeSolution sol = solve_hartree(spec);
  const BogoliubovSolution bog = diagonalize(assemble_quadratic(sol, spec));
  const Mat B = halfline_operator(spec.basis);

  SECTION("reduced density and depletion") {
    const int N = 32;
    const SectorHamiltonian H = assemble_hamiltonian(N, spec);
    const Vec psi = eigenstates(H, 1).states.col(0);
    const Mat g = reduced_density(H.basis, psi);
    CHECK(g.trace() == Approx(1.0).epsilon(1e-12));
    CHECK(max_asymmetry(g) < 1e-13);
    const double depletion = 1.0 - sol.phi.dot(g * sol.phi);
    const double predicted = bog.V0.squaredNorm() / N;
    CHECK(std::abs(depletion - predicted) < 0.2 * predicted);
  }
  SECTION("covariance against a two-particle tensor oracle") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> nd;
    const SectorBasis s(2, 3);
    Vec psi(s.size());
    for (int i = 0; i < s.size(); ++i) psi(i) = nd(rng);
    psi.normalize();
    Mat Bs(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j <= i; ++j) Bs(i, j) = Bs(j, i) = nd(rng);
    Mat W = Mat::Zero(3, 3); // symmetric wave function
    for (int i = 0; i < s.size(); ++i) {
      std::vector<int> occ;
      for (int x = 0; x < 3; ++x)
        for (int k = 0; k < s.table[i][x]; ++k) occ.push_back(x);
      if (occ[0] == occ[1]) {
        W(occ[0], occ[0]) = psi(i);
      } else {
        W(occ[0], occ[1]) = W(occ[1], occ[0]) = psi(i) / std::sqrt(2.0);
      }
    }
    const double both = (Bs * W * Bs.transpose()).cwiseProduct(W).sum();
    const double one = (Bs * W).cwiseProduct(W).sum();
    CHECK(covariance(s, psi, Bs) == Approx(both - one * one).margin(1e-13));
  }
  SECTION("characteristic function and moments") {
    const int N = 12;
    const SectorHamiltonian H = assemble_hamiltonian(N, spec);
    const Vec psi = eigenstates(H, 1).states.col(0);
    const ObservableSpectrum sp = observable_spectrum(H.basis, psi, B);
    CHECK(sp.weights.sum() == Approx(1.0).epsilon(1e-13));

    Vec s(3);
    s << 0.0, 0.7, -0.7;
    const CVec phi = characteristic_function(sp, s);
    CHECK(std::abs(phi(0) - 1.0) < 1e-13);
    CHECK(std::abs(phi(1) - std::conj(phi(2))) < 1e-13);

    // second moment from the operator itself
    const SpMat dB = second_quantize(H.basis.table, B);
    const Vec centred = (dB * psi - N * sp.mean * psi) / std::sqrt(double(N));
    const Vec m = spectral_moments(sp, 4);
    CHECK(m(1) == Approx(0.0).margin(1e-12));
    CHECK(m(2) == Approx(centred.squaredNorm()).epsilon(1e-12));
    CHECK(expectation(dB, psi) / N == Approx(sp.mean).epsilon(1e-13));

    const Vec k1 = cumulants(sp, 4);
    CHECK(k1(2) == Approx(m(2)).epsilon(1e-12));
  }
  SECTION("LLN tail shrinks with N") {
    const double b0 = sol.phi.dot(B * sol.phi);
    double last = 1.0;
    for (int N : {8, 16, 32}) {
      const SectorHamiltonian H = assemble_hamiltonian(N, spec);
      const ObservableSpectrum sp = observable_spectrum(H.basis, eigenstates(H, 1).states.col(0), B);
      const double p = lln_tail(sp, N, b0, 0.15);
      CHECK(p <= last + 1e-15);
      last = p;
    }
    CHECK(last < 0.2);
  }
}

TEST_CASE("dense and spectral routes to the observable law agree") {
  const ModelSpec spec = build_model(sweep_config());
  const SectorHamiltonian H = assemble_hamiltonian(6, spec);
  const Vec psi = eigenstates(H, 1).states.col(0);
  const Mat B = halfline_operator(spec.basis);
  Mat Bn = B;
  Bn(0, 1) = Bn(1, 0) = 1e-300; // forces the eigen-decomposition path
  const Vec c1 = cumulants(observable_spectrum(H.basis, psi, B), 4);
  const Vec c2 = cumulants(observable_spectrum(H.basis, psi, Bn), 4);
  CHECK((c1 - c2).cwiseAbs().maxCoeff() < 1e-10);
}
