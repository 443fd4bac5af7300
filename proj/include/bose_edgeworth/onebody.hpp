#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "types.hpp"

namespace bose_edgeworth {

enum class Boundary { Dirichlet, Periodic };

struct ModeBasis {
  int M = 0;
  Vec positions;
  double spacing = 0.0;
  Boundary boundary = Boundary::Dirichlet;
};

// Dirichlet: M interior points of [x_min, x_max] (walls excluded).
// Periodic: M points x_min, x_min + dx, ..., with x_max identified with x_min.
inline ModeBasis make_basis(int M, double x_min, double x_max, Boundary boundary) {
  require(M >= 2, "ConfigError", "M must be at least 2");
  require(x_max > x_min, "ConfigError", "x_max must exceed x_min");
  ModeBasis b;
  b.M = M;
  b.boundary = boundary;
  b.positions.resize(M);
  if (boundary == Boundary::Dirichlet) {
    b.spacing = (x_max - x_min) / (M + 1);
    for (int i = 0; i < M; ++i) b.positions(i) = x_min + (i + 1) * b.spacing;
  } else {
    b.spacing = (x_max - x_min) / M;
    for (int i = 0; i < M; ++i) b.positions(i) = x_min + i * b.spacing;
  }
  return b;
}

// Serializable description of a model; build_model turns it into matrices.
struct ModelConfig {
  int M = 16;
  double x_min = -4.0;
  double x_max = 4.0;
  Boundary boundary = Boundary::Dirichlet;
  std::optional<std::vector<double>> trap; // empty means harmonic x^2
  double kernel_width = 1.0;
  double coupling = 0.5;
};

// Small instance used by the exact-diagonalization sweeps (dx = 1).
inline ModelConfig sweep_config() {
  ModelConfig c;
  c.M = 3;
  c.x_min = -2.0;
  c.x_max = 2.0;
  return c;
}

struct ModelSpec {
  ModeBasis basis;
  Vec trap;
  Mat kernel; // v(x_i - x_j) without the coupling
  double coupling = 0.0;

  Mat interaction() const { return coupling * kernel; }
};

inline ModelSpec build_model(const ModelConfig& cfg) {
  ModelSpec s;
  s.basis = make_basis(cfg.M, cfg.x_min, cfg.x_max, cfg.boundary);
  const int M = cfg.M;
  const Vec& x = s.basis.positions;
  s.trap.resize(M);
  if (cfg.trap) {
    require(static_cast<int>(cfg.trap->size()) == M, "ConfigError", "trap length differs from M");
    for (int i = 0; i < M; ++i) s.trap(i) = (*cfg.trap)[i];
  } else {
    s.trap = x.array().square();
  }
  require(s.trap.minCoeff() >= 0.0, "ConfigError", "trap must be non-negative");
  require(cfg.kernel_width > 0.0, "ConfigError", "kernel width must be positive");
  require(cfg.coupling >= 0.0, "ConfigError", "coupling must be non-negative");
  const double L = cfg.x_max - cfg.x_min;
  s.kernel.resize(M, M);
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < M; ++j) {
      double d = std::abs(x(i) - x(j));
      if (cfg.boundary == Boundary::Periodic) d = std::min(d, L - d);
      s.kernel(i, j) = std::exp(-d * d / (2.0 * cfg.kernel_width * cfg.kernel_width));
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(s.kernel, Eigen::EigenvaluesOnly);
  require(es.eigenvalues().minCoeff() >= -1e-10, "KernelNotPositive",
          "interaction kernel has a negative eigenvalue");
  s.coupling = cfg.coupling;
  return s;
}

inline Mat build_laplacian(const ModeBasis& b) {
  const int M = b.M;
  const double inv = 1.0 / (b.spacing * b.spacing);
  Mat L = Mat::Zero(M, M);
  for (int i = 0; i < M; ++i) {
    L(i, i) = 2.0 * inv;
    if (i + 1 < M) L(i, i + 1) = L(i + 1, i) = -inv;
  }
  if (b.boundary == Boundary::Periodic) {
    L(0, M - 1) -= inv;
    L(M - 1, 0) -= inv;
  }
  return L;
}

inline Mat one_body_operator(const ModelSpec& s) {
  Mat h0 = build_laplacian(s.basis);
  h0.diagonal() += s.trap;
  return h0;
}

inline Mat position_operator(const ModeBasis& b) { return b.positions.asDiagonal(); }

inline Mat halfline_operator(const ModeBasis& b) {
  Vec d = (b.positions.array() >= 0.0).cast<double>();
  return d.asDiagonal();
}

// Coefficients c_i = phi(x_i) sqrt(dx) are orthonormal, so every quadrature
// below is a plain Euclidean sum.
inline Vec mean_field_potential(const ModelSpec& s, const Vec& c) {
  return s.interaction() * c.array().square().matrix();
}

inline double hartree_energy(const ModelSpec& s, const Vec& c) {
  require(std::abs(c.norm() - 1.0) <= 1e-8, "Unnormalized", "phi must have unit norm");
  Vec rho = c.array().square();
  return c.dot(one_body_operator(s) * c) + 0.5 * rho.dot(s.interaction() * rho);
}

struct HartreeSolution {
  Vec phi;
  double mu_H = 0.0;
  double e_H = 0.0;
  Mat h;
  double residual = 0.0;
  int iterations = 0;
  bool multiple_minima_suspected = false;
};

namespace detail {

struct DescentResult {
  Vec c;
  double energy = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline Mat hartree_operator(const ModelSpec& s, const Mat& h0, const Vec& c) {
  Mat H = h0;
  H.diagonal() += mean_field_potential(s, c);
  return H;
}

inline DescentResult descend(const ModelSpec& s, Vec c, double tol, int max_iter) {
  const Mat h0 = one_body_operator(s);
  c.normalize();
  double E = hartree_energy(s, c);
  // Gershgorin bound on the mean-field operator (|c_j|^2 <= 1).
  double bound = h0.cwiseAbs().rowwise().sum().maxCoeff() + s.interaction().cwiseAbs().rowwise().sum().maxCoeff();
  double tau = 1.0 / std::max(bound, 1e-12);
  DescentResult r;
  for (int it = 0; it < max_iter; ++it) {
    Mat H = hartree_operator(s, h0, c);
    Vec Hc = H * c;
    Vec grad = Hc - c.dot(Hc) * c;
    double res = grad.norm();
    r.iterations = it;
    if (res <= tol) {
      r.c = c;
      r.energy = E;
      r.residual = res;
      r.converged = true;
      return r;
    }
    bool accepted = false;
    double step = tau;
    for (int halving = 0; halving < 60; ++halving) {
      Vec trial = (c - step * grad).normalized();
      double Et = hartree_energy(s, trial);
      // Near the minimum the decrease is below round-off; tolerate that.
      if (Et <= E + 1e-14 * std::max(1.0, std::abs(E))) {
        c = trial;
        E = Et;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      r.c = c;
      r.energy = E;
      r.residual = res;
      return r;
    }
  }
  Mat H = hartree_operator(s, h0, c);
  Vec Hc = H * c;
  r.c = c;
  r.energy = E;
  r.residual = (Hc - c.dot(Hc) * c).norm();
  r.iterations = max_iter;
  r.converged = r.residual <= tol;
  return r;
}

inline Vec fix_gauge(Vec c) {
  if (c.sum() < 0.0) c = -c;
  return c;
}

} // namespace detail

// Normalized gradient descent from the non-interacting ground mode, plus two
// random restarts that only feed the multiple-minima flag.
inline HartreeSolution solve_hartree(const ModelSpec& s, double tol = 1e-11, int max_iter = 200000,
                                     unsigned seed = 12345) {
  require(tol > 0.0, "ConfigError", "tol must be positive");
  const Mat h0 = one_body_operator(s);
  Eigen::SelfAdjointEigenSolver<Mat> es(h0);
  detail::DescentResult best = detail::descend(s, es.eigenvectors().col(0), tol, max_iter);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  bool suspicious = false;
  for (int r = 0; r < 2; ++r) {
    Vec init(s.basis.M);
    for (int i = 0; i < s.basis.M; ++i) init(i) = nd(rng);
    detail::DescentResult other = detail::descend(s, init, tol, max_iter);
    if (std::abs(other.energy - best.energy) > 10.0 * tol) suspicious = true;
    if (other.converged && other.energy < best.energy - 10.0 * tol) best = other;
  }
  if (!best.converged) {
    throw Error("NonConvergence", "Hartree descent stalled at residual " + std::to_string(best.residual));
  }

  HartreeSolution sol;
  sol.phi = detail::fix_gauge(best.c);
  Mat H = detail::hartree_operator(s, h0, sol.phi);
  sol.mu_H = sol.phi.dot(H * sol.phi);
  sol.h = H - sol.mu_H * Mat::Identity(s.basis.M, s.basis.M);
  sol.e_H = hartree_energy(s, sol.phi);
  sol.residual = (sol.h * sol.phi).norm();
  sol.iterations = best.iterations;
  sol.multiple_minima_suspected = suspicious;
  return sol;
}

inline std::pair<Mat, Mat> projectors(const HartreeSolution& sol) {
  const Eigen::Index M = sol.phi.size();
  Mat p = sol.phi * sol.phi.transpose();
  Mat q = Mat::Identity(M, M) - p;
  return {p, q};
}

} // namespace bose_edgeworth
