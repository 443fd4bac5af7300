#pragma once

#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>

#include "bogoliubov.hpp"

namespace bose_edgeworth {

using SpMat = Eigen::SparseMatrix<double>;
using Occupation = std::vector<int>;

// Ordered list of occupation vectors with reverse lookup.
class OccupationTable {
public:
  OccupationTable() = default;
  explicit OccupationTable(std::vector<Occupation> states) : states_(std::move(states)) {
    for (std::size_t i = 0; i < states_.size(); ++i) index_.emplace(states_[i], static_cast<int>(i));
  }

  int size() const { return static_cast<int>(states_.size()); }
  const Occupation& operator[](int i) const { return states_[i]; }
  const std::vector<Occupation>& states() const { return states_; }

  // -1 when the occupation is not in the table.
  int index(const Occupation& n) const {
    auto it = index_.find(n);
    return it == index_.end() ? -1 : it->second;
  }

private:
  std::vector<Occupation> states_;
  std::map<Occupation, int> index_;
};

namespace detail {

// All occupations of `modes` modes with total `n`, lexicographically ascending.
inline void compositions(int n, int modes, Occupation& cur, int pos, std::vector<Occupation>& out) {
  if (pos == modes - 1) {
    cur[pos] = n;
    out.push_back(cur);
    return;
  }
  for (int k = 0; k <= n; ++k) {
    cur[pos] = k;
    compositions(n - k, modes, cur, pos + 1, out);
  }
}

inline std::vector<Occupation> compositions(int n, int modes) {
  std::vector<Occupation> out;
  Occupation cur(modes, 0);
  compositions(n, modes, cur, 0, out);
  return out;
}

inline int total(const Occupation& n) { return std::accumulate(n.begin(), n.end(), 0); }

} // namespace detail

struct SectorBasis {
  int N = 0;
  int M = 0;
  OccupationTable table;

  SectorBasis() = default;
  SectorBasis(int n, int m) : N(n), M(m), table(detail::compositions(n, m)) {}
  int size() const { return table.size(); }
};

// Graded lexicographic: total occupation first, then lexicographic, so the
// states with total <= k form a prefix.
struct FockBasis {
  int modes = 0;
  int k_max = 0;
  OccupationTable table;

  FockBasis() = default;
  FockBasis(int m, int kmax) : modes(m), k_max(kmax) {
    std::vector<Occupation> all;
    for (int k = 0; k <= kmax; ++k) {
      auto layer = detail::compositions(k, m);
      all.insert(all.end(), layer.begin(), layer.end());
    }
    table = OccupationTable(std::move(all));
  }
  int size() const { return table.size(); }

  // Number of states with total occupation <= k.
  int prefix(int k) const {
    int count = 0;
    for (const auto& n : table.states())
      if (detail::total(n) <= k) ++count;
    return count;
  }
};

inline double fock_dimension(int modes, int k_max) { return binomial(k_max + modes, modes); }

// Sum_ij A(i,j) a_i^dag a_j on any table closed under number-conserving moves.
inline SpMat second_quantize(const OccupationTable& table, const Mat& A) {
  const int d = table.size();
  const int m = static_cast<int>(A.rows());
  std::vector<Eigen::Triplet<double>> trips;
  for (int col = 0; col < d; ++col) {
    const Occupation& s = table[col];
    for (int j = 0; j < m; ++j) {
      if (s[j] == 0) continue;
      for (int i = 0; i < m; ++i) {
        const double aij = A(i, j);
        if (aij == 0.0) continue;
        if (i == j) {
          trips.emplace_back(col, col, aij * s[j]);
          continue;
        }
        Occupation t = s;
        t[j] -= 1;
        t[i] += 1;
        int row = table.index(t);
        if (row < 0) continue;
        trips.emplace_back(row, col, aij * std::sqrt(double(s[j]) * double(t[i])));
      }
    }
  }
  SpMat out(d, d);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline SpMat second_quantize(const FockBasis& basis, const Mat& A) { return second_quantize(basis.table, A); }

// a^dag(f) = sum_i f_i a_i^dag, with amplitudes leaving the table dropped.
inline SpMat creation_matrix(const OccupationTable& table, const Vec& f) {
  const int d = table.size();
  std::vector<Eigen::Triplet<double>> trips;
  for (int col = 0; col < d; ++col) {
    const Occupation& s = table[col];
    for (int i = 0; i < static_cast<int>(f.size()); ++i) {
      if (f(i) == 0.0) continue;
      Occupation t = s;
      t[i] += 1;
      int row = table.index(t);
      if (row < 0) continue;
      trips.emplace_back(row, col, f(i) * std::sqrt(double(t[i])));
    }
  }
  SpMat out(d, d);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline SpMat creation_matrix(const FockBasis& basis, const Vec& f) { return creation_matrix(basis.table, f); }

inline SpMat annihilation_matrix(const FockBasis& basis, const Vec& f) {
  return SpMat(creation_matrix(basis, f).transpose());
}

inline Vec number_diagonal(const FockBasis& basis) {
  Vec n(basis.size());
  for (int i = 0; i < basis.size(); ++i) n(i) = detail::total(basis.table[i]);
  return n;
}

struct WeylResult {
  CMat matrix;
  double unitarity_defect = 0.0; // on the states with total <= k_max / 2
  bool truncation_warning = false;
};

// W(f) = exp(a^dag(f) - a(f)) for complex f, as the exponential of the
// truncated generator.
inline WeylResult weyl_matrix(const FockBasis& basis, const CVec& f) {
  require(f.squaredNorm() <= basis.k_max / 4.0 + 1e-12, "TruncationGuard", "|f|^2 must not exceed k_max/4");
  const Vec re = f.real();
  const Vec im = f.imag();
  CMat ad = CMat(Mat(creation_matrix(basis, re))) + cplx(0.0, 1.0) * CMat(Mat(creation_matrix(basis, im)));
  CMat gen = ad - ad.adjoint();
  WeylResult r;
  r.matrix = gen.exp();
  const int low = basis.prefix(basis.k_max / 2);
  CMat wtw = r.matrix.adjoint() * r.matrix;
  r.unitarity_defect = (wtw.topLeftCorner(low, low) - CMat::Identity(low, low)).cwiseAbs().maxCoeff();
  r.truncation_warning = r.unitarity_defect > 1e-6;
  return r;
}

struct GivensRotation {
  int p = 0;
  int q = 0;
  double theta = 0.0;
};

// O = G_1 G_2 ... G_k diag(signs), with G(p,q,theta) = exp(theta (E_qp - E_pq)).
inline std::pair<std::vector<GivensRotation>, Vec> givens_factor(const Mat& O) {
  const int M = static_cast<int>(O.rows());
  Mat A = O;
  std::vector<GivensRotation> rots;
  for (int c = 0; c < M - 1; ++c) {
    for (int r = c + 1; r < M; ++r) {
      const double a = A(c, c);
      const double b = A(r, c);
      if (b == 0.0) continue;
      const double theta = std::atan2(b, a);
      const double cs = std::cos(theta), sn = std::sin(theta);
      Eigen::RowVectorXd rc = A.row(c), rr = A.row(r);
      A.row(c) = cs * rc + sn * rr;
      A.row(r) = -sn * rc + cs * rr;
      rots.push_back({c, r, theta});
    }
  }
  Vec signs(M);
  for (int i = 0; i < M; ++i) signs(i) = A(i, i) >= 0.0 ? 1.0 : -1.0;
  return {rots, signs};
}

// exp(t G) v by Taylor series on substeps with |t| ||G||_1 / steps <= 1/2.
inline Vec expv(const SpMat& G, double t, Vec v) {
  double norm1 = 0.0;
  for (int k = 0; k < G.outerSize(); ++k) {
    double col = 0.0;
    for (SpMat::InnerIterator it(G, k); it; ++it) col += std::abs(it.value());
    norm1 = std::max(norm1, col);
  }
  const int steps = std::max(1, static_cast<int>(std::ceil(2.0 * std::abs(t) * norm1)));
  const double h = t / steps;
  for (int s = 0; s < steps; ++s) {
    Vec term = v;
    Vec acc = v;
    for (int k = 1; k < 60; ++k) {
      term = (h / k) * (G * term);
      acc += term;
      if (term.norm() <= 1e-18 * acc.norm()) break;
    }
    v = acc;
  }
  return v;
}

// Gamma(O) on an N-particle sector: Gamma(O) a_x^dag Gamma(O)^* = a^dag(O e_x).
inline Vec apply_one_body_rotation(const SectorBasis& sector, const Mat& O, Vec psi) {
  auto [rots, signs] = givens_factor(O);
  for (int i = 0; i < sector.size(); ++i) {
    const Occupation& n = sector.table[i];
    for (int m = 0; m < sector.M; ++m)
      if (signs(m) < 0.0 && n[m] % 2 == 1) psi(i) = -psi(i);
  }
  for (auto it = rots.rbegin(); it != rots.rend(); ++it) {
    Mat X = Mat::Zero(sector.M, sector.M);
    X(it->q, it->p) = 1.0;
    X(it->p, it->q) = -1.0;
    SpMat G = second_quantize(sector.table, X);
    psi = expv(G, it->theta, psi);
  }
  return psi;
}

// Columns [phi, perp basis]: mode 0 is the condensate.
inline Mat condensate_frame(const Vec& phi) {
  const Eigen::Index M = phi.size();
  Mat R(M, M);
  R.col(0) = phi;
  R.rightCols(M - 1) = perp_basis(phi);
  return R;
}

struct FockState {
  Vec amplitudes;
  double dropped_weight = 0.0;
};

// U_{N,phi}: rotate to the condensate frame, drop n_0 and keep N - n_0 <= k_max.
inline FockState excitation_map(const SectorBasis& sector, const Vec& psi, const Vec& phi, const FockBasis& fock) {
  require(std::abs(phi.norm() - 1.0) <= 1e-10, "Unnormalized", "phi must have unit norm");
  require(fock.modes == sector.M - 1, "ShapeMismatch", "Fock modes must equal M - 1");
  const Mat R = condensate_frame(phi);
  Vec rotated = apply_one_body_rotation(sector, R.transpose(), psi);
  FockState out;
  out.amplitudes = Vec::Zero(fock.size());
  for (int i = 0; i < sector.size(); ++i) {
    const Occupation& n = sector.table[i];
    Occupation ex(n.begin() + 1, n.end());
    int j = fock.table.index(ex);
    if (j < 0) {
      out.dropped_weight += rotated(i) * rotated(i);
      continue;
    }
    out.amplitudes(j) = rotated(i);
  }
  return out;
}

// Taylor coefficients of sqrt(1 - x) = sum_l c_l x^l.
inline double sqrt_series_coefficient(int l) {
  if (l == 0) return 1.0;
  if (l == 1) return -0.5;
  double dfact = 1.0;
  for (int k = 2 * l - 3; k > 1; k -= 2) dfact *= k;
  return -dfact / (std::pow(2.0, l) * factorial(l));
}

struct BopsExpansion {
  std::vector<Mat> terms; // BB_0 .. BB_a
  Mat exact;
  double center = 0.0; // <Psi_N, B_1 Psi_N> used by the exact operator
};

// shifts = (B^(1), B^(2), ...); missing entries count as zero. When `mean`
// is absent the exact operator is centred at <phi,B phi> + sum_l N^-l B^(l).
inline BopsExpansion bops_expansion(const Mat& B, const Vec& phi, int a, const FockBasis& fock, int N,
                                    const std::vector<double>& shifts = {},
                                    std::optional<double> mean = std::nullopt) {
  require(N >= 2, "ConfigError", "N must be at least 2");
  const Mat R = condensate_frame(phi);
  const Mat perp = R.rightCols(R.cols() - 1);
  const double b0 = phi.dot(B * phi);
  auto shift = [&](int l) { return l - 1 < static_cast<int>(shifts.size()) ? shifts[l - 1] : 0.0; };
  const Vec f = perp.transpose() * (B * phi);
  const int d = fock.size();

  const Mat ad = Mat(creation_matrix(fock, f));
  const Mat an = ad.transpose();
  const Vec nperp = number_diagonal(fock);
  const Mat I = Mat::Identity(d, d);

  BopsExpansion out;
  for (int t = 0; t <= a; ++t) {
    if (t == 0) {
      out.terms.push_back(ad + an);
    } else if (t == 1) {
      Mat q = perp.transpose() * B * perp - b0 * Mat::Identity(perp.cols(), perp.cols());
      out.terms.push_back(Mat(second_quantize(fock, q)) - shift(1) * I);
    } else if (t % 2 == 0) {
      const int l = t / 2;
      Vec npow = nperp.array().pow(l);
      out.terms.push_back(sqrt_series_coefficient(l) * (ad * npow.asDiagonal() + npow.asDiagonal() * an));
    } else {
      out.terms.push_back(-shift((t - 1) / 2 + 1) * I);
    }
  }

  double center = b0;
  if (mean) {
    center = *mean;
  } else {
    for (int l = 1; l <= static_cast<int>(shifts.size()); ++l) center += std::pow(double(N), -l) * shifts[l - 1];
  }
  out.center = center;

  // dGamma(R^T B R) on full occupations (N - k, n), then centred and scaled.
  const Mat Bp = R.transpose() * B * R;
  const int M = static_cast<int>(R.cols());
  Mat ex = Mat::Zero(d, d);
  for (int col = 0; col < d; ++col) {
    const Occupation& n = fock.table[col];
    const int k = detail::total(n);
    if (k > N) continue;
    Occupation full(M);
    full[0] = N - k;
    for (int i = 1; i < M; ++i) full[i] = n[i - 1];
    for (int j = 0; j < M; ++j) {
      if (full[j] == 0) continue;
      for (int i = 0; i < M; ++i) {
        if (Bp(i, j) == 0.0) continue;
        if (i == j) {
          ex(col, col) += Bp(i, i) * full[i];
          continue;
        }
        Occupation t = full;
        t[j] -= 1;
        t[i] += 1;
        Occupation tex(t.begin() + 1, t.end());
        int row = fock.table.index(tex);
        if (row < 0) continue;
        ex(row, col) += Bp(i, j) * std::sqrt(double(full[j]) * double(t[i]));
      }
    }
    ex(col, col) -= N * center;
  }
  out.exact = ex / std::sqrt(double(N));
  return out;
}

} // namespace bose_edgeworth
