#pragma once

#include <cmath>
#include <vector>

#include <Eigen/SVD>

#include "fockspace.hpp"

namespace bose_edgeworth {

struct PowerLawFit {
  double exponent = 0.0;
  double amplitude = 0.0;
  double r_squared = 0.0;
  int points = 0;
};

// Least squares of log|y| against log N.
inline PowerLawFit fit_power_law(const std::vector<double>& N, const std::vector<double>& y) {
  require(N.size() == y.size() && N.size() >= 2, "ConfigError", "need matching series of length >= 2");
  const bool positive = y.front() > 0.0;
  for (double v : y) {
    require(v != 0.0, "ZeroValue", "power-law fit needs nonzero values");
    require((v > 0.0) == positive, "SignChange", "values change sign");
  }
  const int n = static_cast<int>(N.size());
  Vec lx(n), ly(n);
  for (int i = 0; i < n; ++i) {
    lx(i) = std::log(N[i]);
    ly(i) = std::log(std::abs(y[i]));
  }
  const double mx = lx.mean(), my = ly.mean();
  const double sxx = (lx.array() - mx).square().sum();
  const double sxy = ((lx.array() - mx) * (ly.array() - my)).sum();
  PowerLawFit f;
  f.points = n;
  f.exponent = sxx > 0.0 ? sxy / sxx : 0.0;
  const double intercept = my - f.exponent * mx;
  f.amplitude = (positive ? 1.0 : -1.0) * std::exp(intercept);
  const double ss_tot = (ly.array() - my).square().sum();
  const double ss_res = (ly.array() - intercept - f.exponent * lx.array()).square().sum();
  f.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

struct RichardsonResult {
  Vec coeffs;                 // c_0 .. c_k
  double stability_gap = 0.0; // |c_0(k) - c_0(k-1)|
  double condition = 0.0;
};

namespace detail {

inline Vec vandermonde_solve(const std::vector<double>& N, const std::vector<double>& y, double p, int k,
                             double* condition) {
  const int n = static_cast<int>(N.size());
  Mat V(k + 1, k + 1);
  Vec rhs(k + 1);
  for (int r = 0; r <= k; ++r) {
    const int i = n - (k + 1) + r;
    for (int j = 0; j <= k; ++j) V(r, j) = std::pow(N[i], -0.5 * p * j);
    rhs(r) = y[i];
  }
  Eigen::JacobiSVD<Mat> svd(V);
  const Vec sv = svd.singularValues();
  const double cond = sv(0) / sv(sv.size() - 1);
  if (condition) *condition = cond;
  require(cond <= 1e12, "IllConditioned", "Vandermonde condition number above 1e12");
  return V.fullPivLu().solve(rhs);
}

} // namespace detail

// y(N) = sum_j c_j N^{-j p / 2} solved exactly on the k + 1 largest N.
inline RichardsonResult richardson(const std::vector<double>& N, const std::vector<double>& y, double p, int k) {
  require(N.size() == y.size(), "ConfigError", "series length mismatch");
  require(static_cast<int>(N.size()) >= k + 2, "ConfigError", "need at least k + 2 points");
  RichardsonResult r;
  r.coeffs = detail::vandermonde_solve(N, y, p, k, &r.condition);
  if (k >= 1) {
    Vec lower = detail::vandermonde_solve(N, y, p, k - 1, nullptr);
    r.stability_gap = std::abs(r.coeffs(0) - lower(0));
  }
  return r;
}

struct ChiExpansion {
  Vec chi0;
  Vec chi1;
  std::vector<double> residuals; // |chi(N) - chi0 - N^-1/2 chi1|
  PowerLawFit residual_fit;
  double chi1_odd_fraction = 0.0; // weight of |chi1|^2 in sectors k in {1, 3}
};

// Componentwise Richardson in N^{-1/2} after aligning each chi(N) to chi(N_max).
inline ChiExpansion chi_expansion(const std::vector<double>& N, std::vector<Vec> chis, const FockBasis& fock,
                                  int order = 5) {
  require(N.size() == chis.size() && N.size() >= 4, "ConfigError", "need at least four states");
  const Vec& ref = chis.back();
  for (Vec& c : chis) {
    const double ov = ref.dot(c) / (ref.norm() * c.norm());
    require(std::abs(ov) >= 0.5, "PhaseAmbiguity", "alignment overlap below 0.5");
    if (ov < 0.0) c = -c;
  }
  const int k = std::min<int>(order, static_cast<int>(N.size()) - 2);
  const int d = static_cast<int>(chis.front().size());
  ChiExpansion out;
  out.chi0.resize(d);
  out.chi1.resize(d);
  std::vector<double> comp(N.size());
  for (int i = 0; i < d; ++i) {
    for (std::size_t n = 0; n < N.size(); ++n) comp[n] = chis[n](i);
    Vec c = richardson(N, comp, 1.0, k).coeffs;
    out.chi0(i) = c(0);
    out.chi1(i) = c(1);
  }
  for (std::size_t n = 0; n < N.size(); ++n)
    out.residuals.push_back((chis[n] - out.chi0 - out.chi1 / std::sqrt(N[n])).norm());
  out.residual_fit = fit_power_law(N, out.residuals);
  double odd = 0.0;
  for (int i = 0; i < d; ++i) {
    const int kk = detail::total(fock.table[i]);
    if (kk == 1 || kk == 3) odd += out.chi1(i) * out.chi1(i);
  }
  out.chi1_odd_fraction = out.chi1.squaredNorm() > 0.0 ? odd / out.chi1.squaredNorm() : 1.0;
  return out;
}

// B^(1) = 2 <chi0, (a^dag(qB phi) + a(qB phi)) chi1> + <chi0, dGamma(q B~ q) chi0>.
inline double b1_coefficient(const Vec& chi0, const Vec& chi1, const Mat& B, const Vec& phi, const Mat& perp,
                             const FockBasis& fock) {
  const Vec f = perp.transpose() * (B * phi);
  const SpMat ad = creation_matrix(fock, f);
  const SpMat field = ad + SpMat(ad.transpose());
  const double b0 = phi.dot(B * phi);
  const Mat Bq = perp.transpose() * B * perp - b0 * Mat::Identity(perp.cols(), perp.cols());
  return 2.0 * chi0.dot(field * chi1) + chi0.dot(second_quantize(fock, Bq) * chi0);
}

// Truncated H_0 = dGamma(A) + 1/2 sum P_ij (a_i^dag a_j^dag + a_i a_j).
inline Mat truncated_bogoliubov_hamiltonian(const FockBasis& fock, const QuadraticHamiltonian& qh) {
  const int m = fock.modes;
  Mat H = Mat(second_quantize(fock, qh.A));
  std::vector<Mat> ad;
  for (int i = 0; i < m; ++i) ad.push_back(Mat(creation_matrix(fock, Vec::Unit(m, i))));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (qh.P(i, j) == 0.0) continue;
      Mat pair = ad[i] * ad[j];
      H += 0.5 * qh.P(i, j) * (pair + pair.transpose());
    }
  return H;
}

struct QuasiFreeGround {
  Vec state;
  double energy = 0.0;
  double top_weight = 0.0; // weight within three quanta of the cutoff
};

inline QuasiFreeGround quasifree_ground_state(const FockBasis& fock, const QuadraticHamiltonian& qh) {
  Eigen::SelfAdjointEigenSolver<Mat> es(truncated_bogoliubov_hamiltonian(fock, qh));
  QuasiFreeGround g;
  g.state = es.eigenvectors().col(0);
  if (g.state(0) < 0.0) g.state = -g.state; // vacuum component positive
  g.energy = es.eigenvalues()(0);
  for (int i = 0; i < fock.size(); ++i)
    if (detail::total(fock.table[i]) > fock.k_max - 3) g.top_weight += g.state(i) * g.state(i);
  return g;
}

// sum_k w_k b_k^dag with b_k^dag = sum_i U0(k,i) a_i^dag - V0(k,i) a_i.
inline Mat quasiparticle_creation(const FockBasis& fock, const BogoliubovSolution& bog, const Vec& w) {
  const Mat ad = Mat(creation_matrix(fock, bog.U0.transpose() * w));
  const Mat an = Mat(creation_matrix(fock, bog.V0.transpose() * w)).transpose();
  return ad - an;
}

struct ThetaOverlap {
  double value = 0.0;
  bool truncation_warning = false;
};

// <nu^{x3}, Theta_{1,3}> = (1/6) <(b^dag(nu))^3 Omega_b, chi1>.
inline ThetaOverlap theta13_overlap(const Vec& chi1, const Vec& nu, const BogoliubovSolution& bog,
                                    const FockBasis& fock, const QuasiFreeGround& ground) {
  require(fock.k_max >= 5, "ConfigError", "k_max must be at least 5");
  const Mat c = quasiparticle_creation(fock, bog, nu);
  ThetaOverlap t;
  t.value = (c * (c * (c * ground.state))).dot(chi1) / 6.0;
  t.truncation_warning = ground.top_weight > 1e-4;
  return t;
}

} // namespace bose_edgeworth
