#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fockspace.hpp"

namespace bose_edgeworth {

struct SectorHamiltonian {
  int N = 0;
  SectorBasis basis;
  SpMat matrix;
  Mat one_body; // h0 = -Lap + V
};

// dGamma(h0) + (2(N-1))^-1 [sum_{x!=y} g v n_x n_y + sum_x g v(0) n_x (n_x - 1)] in site modes.
inline SectorHamiltonian assemble_hamiltonian(int N, const ModelSpec& spec) {
  require(N >= 1, "ConfigError", "N must be positive");
  const int M = spec.basis.M;
  require(binomial(N + M - 1, M - 1) <= 2e5, "DimensionGuard", "sector dimension exceeds 2e5");
  SectorHamiltonian H;
  H.N = N;
  H.basis = SectorBasis(N, M);
  H.one_body = one_body_operator(spec);
  H.matrix = second_quantize(H.basis.table, H.one_body);
  if (N >= 2) {
    const Mat v = spec.interaction();
    const double scale = 1.0 / (2.0 * (N - 1));
    std::vector<Eigen::Triplet<double>> diag;
    for (int i = 0; i < H.basis.size(); ++i) {
      const Occupation& n = H.basis.table[i];
      double e = 0.0;
      for (int x = 0; x < M; ++x) {
        e += v(x, x) * n[x] * (n[x] - 1);
        for (int y = 0; y < M; ++y)
          if (y != x) e += v(x, y) * n[x] * n[y];
      }
      diag.emplace_back(i, i, scale * e);
    }
    SpMat W(H.basis.size(), H.basis.size());
    W.setFromTriplets(diag.begin(), diag.end());
    H.matrix += W;
  }
  return H;
}

struct SpectralData {
  Vec energies;
  Mat states; // columns
  double gap = 0.0;
  double max_residual = 0.0;
};

namespace detail {

// Lanczos with full reorthogonalization; grows the Krylov space until the k
// lowest Ritz pairs have residual <= tol.
inline SpectralData lanczos(const SpMat& A, int k, double tol = 1e-9) {
  const int d = static_cast<int>(A.rows());
  Vec q = Vec::Constant(d, 1.0 / std::sqrt(double(d)));
  for (int i = 0; i < d; ++i) q(i) += 1e-3 * std::sin(1.0 + i); // break symmetry
  q.normalize();
  std::vector<Vec> Q{q};
  std::vector<double> alpha, beta;
  SpectralData out;
  const int m_max = std::min(d, 2000);
  for (int j = 0; j < m_max; ++j) {
    Vec w = A * Q[j];
    alpha.push_back(Q[j].dot(w));
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& v : Q) w -= v.dot(w) * v;
    const double b = w.norm();
    const int m = j + 1;
    if (m >= k && (m % 20 == 0 || b < 1e-14 || m == m_max)) {
      Mat T = Mat::Zero(m, m);
      for (int i = 0; i < m; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
      }
      Eigen::SelfAdjointEigenSolver<Mat> es(T);
      Mat Qm(d, m);
      for (int i = 0; i < m; ++i) Qm.col(i) = Q[i];
      out.energies = es.eigenvalues().head(k);
      out.states = Qm * es.eigenvectors().leftCols(k);
      out.max_residual = 0.0;
      for (int i = 0; i < k; ++i) {
        out.states.col(i).normalize();
        out.max_residual = std::max(out.max_residual, (A * out.states.col(i) - out.energies(i) * out.states.col(i)).norm());
      }
      if (out.max_residual <= tol || b < 1e-14) return out;
    }
    if (b < 1e-14) break;
    beta.push_back(b);
    Q.push_back(w / b);
  }
  throw Error("EigensolverFailure", "Lanczos residual " + std::to_string(out.max_residual));
}

} // namespace detail

// k lowest eigenpairs; dense below 3000 states, Lanczos above.
inline SpectralData eigenstates(const SectorHamiltonian& H, int k) {
  const int d = H.basis.size();
  require(k >= 1 && k <= d, "ConfigError", "k out of range");
  SpectralData out;
  if (d <= 3000) {
    Eigen::SelfAdjointEigenSolver<Mat> es{Mat(H.matrix)};
    if (es.info() != Eigen::Success) throw Error("EigensolverFailure", "dense eigensolver failed");
    out.energies = es.eigenvalues().head(k);
    out.states = es.eigenvectors().leftCols(k);
    out.max_residual = 0.0;
    for (int i = 0; i < k; ++i)
      out.max_residual = std::max(out.max_residual,
                                  (H.matrix * out.states.col(i) - out.energies(i) * out.states.col(i)).norm());
    if (d >= 2) out.gap = es.eigenvalues()(1) - es.eigenvalues()(0);
  } else {
    out = detail::lanczos(H.matrix, std::max(k, 2));
    out.gap = out.energies(1) - out.energies(0);
    out.energies.conservativeResize(k);
    out.states.conservativeResize(Eigen::NoChange, k);
  }
  // Deterministic sign: largest-magnitude entry positive.
  for (int i = 0; i < k; ++i) {
    Eigen::Index imax;
    out.states.col(i).cwiseAbs().maxCoeff(&imax);
    if (out.states(imax, i) < 0.0) out.states.col(i) *= -1.0;
  }
  return out;
}

// gamma(i,j) = <a_j^dag a_i> / N.
inline Mat reduced_density(const SectorBasis& sector, const Vec& psi) {
  const int M = sector.M;
  Mat g = Mat::Zero(M, M);
  for (int col = 0; col < sector.size(); ++col) {
    const Occupation& s = sector.table[col];
    for (int j = 0; j < M; ++j) {
      if (s[j] == 0) continue;
      for (int i = 0; i < M; ++i) {
        if (i == j) {
          g(i, i) += psi(col) * psi(col) * s[i];
          continue;
        }
        Occupation t = s;
        t[j] -= 1;
        t[i] += 1;
        int row = sector.table.index(t);
        if (row < 0) continue;
        // <t| a_i^dag a_j |s> = sqrt(s_j t_i)
        g(j, i) += psi(row) * psi(col) * std::sqrt(double(s[j]) * double(t[i]));
      }
    }
  }
  return g / double(sector.N);
}

inline double expectation(const SpMat& A, const Vec& psi) { return psi.dot(A * psi); }

// Cov[B_1, B_2] from the two-body contraction
// <B_1 B_2> = (<dGamma(B)^2> - <dGamma(B^2)>) / (N (N - 1)).
inline double covariance(const SectorBasis& sector, const Vec& psi, const Mat& B) {
  require(sector.N >= 2, "ConfigError", "covariance needs N >= 2");
  const double N = sector.N;
  SpMat dB = second_quantize(sector.table, B);
  SpMat dB2 = second_quantize(sector.table, Mat(B * B));
  Vec v = dB * psi;
  const double m1 = psi.dot(v) / N;
  const double two = (v.squaredNorm() - expectation(dB2, psi)) / (N * (N - 1.0));
  return two - m1 * m1;
}

// Spectral measure of dGamma(B - <B_1>)/sqrt(N) in the state psi.
struct ObservableSpectrum {
  Vec lambda;
  Vec weights;
  double mean = 0.0; // <Psi, B_1 Psi>
};

inline bool is_diagonal(const Mat& B) { return (B - Mat(B.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0; }

inline ObservableSpectrum observable_spectrum(const SectorBasis& sector, const Vec& psi, const Mat& B) {
  ObservableSpectrum out;
  const double N = sector.N;
  Vec raw;
  if (is_diagonal(B)) {
    raw.resize(sector.size());
    for (int i = 0; i < sector.size(); ++i) {
      double b = 0.0;
      for (int x = 0; x < sector.M; ++x) b += B(x, x) * sector.table[i][x];
      raw(i) = b;
    }
    out.weights = psi.array().square();
  } else {
    Eigen::SelfAdjointEigenSolver<Mat> es{Mat(second_quantize(sector.table, B))};
    raw = es.eigenvalues();
    out.weights = (es.eigenvectors().transpose() * psi).array().square();
  }
  out.mean = out.weights.dot(raw) / N;
  out.lambda = (raw.array() - N * out.mean) / std::sqrt(N);
  return out;
}

inline CVec characteristic_function(const ObservableSpectrum& sp, const Vec& s_grid) {
  CVec out(s_grid.size());
  for (Eigen::Index k = 0; k < s_grid.size(); ++k) {
    cplx acc = 0.0;
    for (Eigen::Index i = 0; i < sp.lambda.size(); ++i) acc += sp.weights(i) * std::exp(cplx(0.0, s_grid(k) * sp.lambda(i)));
    out(k) = acc;
  }
  return out;
}

inline Vec spectral_moments(const ObservableSpectrum& sp, int l_max) {
  Vec m(l_max + 1);
  for (int l = 0; l <= l_max; ++l) m(l) = sp.weights.dot(sp.lambda.array().pow(l).matrix());
  return m;
}

inline Vec cumulants(const ObservableSpectrum& sp, int l_max) {
  require(l_max >= 1 && l_max <= 8, "ConfigError", "l_max must lie in 1..8");
  return cumulants_from_moments(spectral_moments(sp, l_max));
}

// P(|sum_j B_j / N - <phi,B phi>| >= eps) from the spectral weights.
inline double lln_tail(const ObservableSpectrum& sp, int N, double b0, double eps) {
  double p = 0.0;
  for (Eigen::Index i = 0; i < sp.lambda.size(); ++i) {
    const double avg = sp.lambda(i) / std::sqrt(double(N)) + sp.mean;
    if (std::abs(avg - b0) >= eps) p += sp.weights(i);
  }
  return p;
}

} // namespace bose_edgeworth
