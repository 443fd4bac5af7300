#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Eigenvalues>

#include "onebody.hpp"

namespace bose_edgeworth {

// Orthonormal basis of {phi}^perp from Gram-Schmidt against e_0, e_1, ...,
// columns in the order they survive.
inline Mat perp_basis(const Vec& phi) {
  const Eigen::Index M = phi.size();
  std::vector<Vec> kept{phi.normalized()};
  for (Eigen::Index i = 0; i < M && static_cast<Eigen::Index>(kept.size()) < M; ++i) {
    Vec e = Vec::Unit(M, i);
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& k : kept) e -= k.dot(e) * k;
    if (e.norm() > 1e-8) kept.push_back(e.normalized());
  }
  Mat P(M, M - 1);
  for (Eigen::Index j = 1; j < M; ++j) P.col(j - 1) = kept[j];
  return P;
}

struct QuadraticHamiltonian {
  Mat A;    // coefficient of a^dag a on {phi}^perp
  Mat P;    // pairing block
  Mat perp; // M x (M-1), columns span {phi}^perp
};

inline Mat condensate_kernel(const ModelSpec& spec, const Vec& phi) {
  return spec.interaction().cwiseProduct(phi * phi.transpose());
}

inline QuadraticHamiltonian assemble_quadratic(const HartreeSolution& sol, const ModelSpec& spec) {
  require(sol.residual <= 1e-8, "HartreeNotConverged", "residual above 1e-8");
  QuadraticHamiltonian qh;
  qh.perp = perp_basis(sol.phi);
  Mat K = condensate_kernel(spec, sol.phi);
  qh.A = qh.perp.transpose() * (sol.h + K) * qh.perp;
  qh.P = qh.perp.transpose() * K * qh.perp;
  qh.A = 0.5 * (qh.A + qh.A.transpose());
  qh.P = 0.5 * (qh.P + qh.P.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(qh.A - qh.P, Eigen::EigenvaluesOnly);
  require(es.eigenvalues().minCoeff() > 1e-10, "Gapless", "A - P is not positive definite");
  return qh;
}

// Quasi-particle operators b_k = sum_i U0(k,i) a_i - V0(k,i) a_i^dag annihilate
// the quasi-free ground state; equivalently a = U0^T b + V0^T b^dag.
struct BogoliubovSolution {
  Mat U0;
  Mat V0;
  Vec D;
  Mat xi; // quasi-particle modes as columns, in quasi-particle coordinates
  double ground_energy_shift = 0.0;
  Mat perp;
};

inline BogoliubovSolution diagonalize(const QuadraticHamiltonian& qh) {
  const Eigen::Index n = qh.A.rows();
  Eigen::SelfAdjointEigenSolver<Mat> em(qh.A - qh.P);
  if (em.info() != Eigen::Success || em.eigenvalues().minCoeff() <= 0.0)
    throw Error("DiagonalizationFailure", "A - P is not positive definite");
  Vec sq = em.eigenvalues().cwiseSqrt();
  Mat S = em.eigenvectors() * sq.asDiagonal() * em.eigenvectors().transpose();
  Mat Sinv = em.eigenvectors() * sq.cwiseInverse().asDiagonal() * em.eigenvectors().transpose();

  Mat G = S * (qh.A + qh.P) * S;
  Eigen::SelfAdjointEigenSolver<Mat> eg(0.5 * (G + G.transpose()));
  if (eg.info() != Eigen::Success || eg.eigenvalues().minCoeff() <= 0.0)
    throw Error("DiagonalizationFailure", "S(A+P)S is not positive definite");
  Vec D = eg.eigenvalues().cwiseSqrt();
  Mat W = eg.eigenvectors();

  Mat L = S * W * D.cwiseSqrt().cwiseInverse().asDiagonal();
  Mat R = Sinv * W * D.cwiseSqrt().asDiagonal();
  BogoliubovSolution bog;
  bog.U0 = 0.5 * (L + R).transpose();
  bog.V0 = 0.5 * (L - R).transpose();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index imax;
    bog.U0.row(k).cwiseAbs().maxCoeff(&imax);
    if (bog.U0(k, imax) < 0.0) {
      bog.U0.row(k) *= -1.0;
      bog.V0.row(k) *= -1.0;
    }
  }
  bog.D = D;
  bog.xi = Mat::Identity(n, n);
  bog.ground_energy_shift = 0.5 * (D.sum() - qh.A.trace());
  bog.perp = qh.perp;
  return bog;
}

struct TwoPointFunctions {
  Mat gamma; // gamma(i,j) = <a_j^dag a_i>
  Mat alpha; // alpha(i,j) = <a_i a_j>
};

inline TwoPointFunctions quasifree_two_point(const BogoliubovSolution& bog) {
  TwoPointFunctions tp;
  tp.gamma = bog.V0.transpose() * bog.V0;
  tp.alpha = bog.U0.transpose() * bog.V0;
  return tp;
}

struct WickOp {
  bool dagger = false;
  Vec f;
};

inline double two_point(const TwoPointFunctions& tp, const WickOp& x, const WickOp& y) {
  if (!x.dagger && !y.dagger) return x.f.dot(tp.alpha * y.f);
  if (x.dagger && y.dagger) return x.f.dot(tp.alpha * y.f);
  if (x.dagger && !y.dagger) return y.f.dot(tp.gamma * x.f);
  return x.f.dot(y.f) + x.f.dot(tp.gamma * y.f);
}

// Visits every pairing of {0..n-1} by pairing the first unpaired index.
inline void for_each_pairing(int n, const std::function<void(const std::vector<std::pair<int, int>>&)>& visit) {
  std::vector<bool> used(n, false);
  std::vector<std::pair<int, int>> pairs;
  std::function<void()> rec = [&]() {
    int first = -1;
    for (int i = 0; i < n; ++i)
      if (!used[i]) {
        first = i;
        break;
      }
    if (first < 0) {
      visit(pairs);
      return;
    }
    used[first] = true;
    for (int j = first + 1; j < n; ++j) {
      if (used[j]) continue;
      used[j] = true;
      pairs.emplace_back(first, j);
      rec();
      pairs.pop_back();
      used[j] = false;
    }
    used[first] = false;
  };
  if (n % 2 == 0) rec();
}

inline long pairing_count(int n) {
  long count = 0;
  for_each_pairing(n, [&](const auto&) { ++count; });
  return count;
}

inline double wick_expectation(const TwoPointFunctions& tp, const std::vector<WickOp>& ops) {
  const int n = static_cast<int>(ops.size());
  require(n <= 12, "LengthGuard", "at most 12 operators");
  if (n % 2 == 1) return 0.0;
  double total = 0.0;
  for_each_pairing(n, [&](const std::vector<std::pair<int, int>>& pairs) {
    double term = 1.0;
    for (auto [i, j] : pairs) term *= two_point(tp, ops[i], ops[j]);
    total += term;
  });
  return total;
}

struct NuSigma {
  Vec nu;
  double sigma = 0.0;
  bool degenerate = false;
  Vec qBphi; // in perp coordinates
};

inline NuSigma nu_sigma(const BogoliubovSolution& bog, const Mat& B, const HartreeSolution& sol) {
  NuSigma r;
  r.qBphi = bog.perp.transpose() * (B * sol.phi);
  r.nu = (bog.U0 + bog.V0) * r.qBphi;
  r.sigma = r.nu.norm();
  r.degenerate = r.sigma < 1e-10;
  return r;
}

// q (B - <phi,B phi>) q restricted to the perp basis.
inline Mat centered_perp_block(const Mat& B, const HartreeSolution& sol, const Mat& perp) {
  const double b0 = sol.phi.dot(B * sol.phi);
  return perp.transpose() * B * perp - b0 * Mat::Identity(perp.cols(), perp.cols());
}

} // namespace bose_edgeworth
