#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>

#include "types.hpp"

namespace bose_edgeworth {

// Dense real coefficients, ascending degree; trailing zeros trimmed.
struct Polynomial {
  std::vector<double> c;

  Polynomial() = default;
  explicit Polynomial(std::vector<double> coeffs) : c(std::move(coeffs)) { trim(); }
  static Polynomial constant(double a) { return Polynomial({a}); }

  void trim() {
    while (!c.empty() && c.back() == 0.0) c.pop_back();
  }
  bool is_zero() const { return c.empty(); }
  // -1 for the zero polynomial.
  int degree() const { return static_cast<int>(c.size()) - 1; }
  double coeff(int k) const { return k >= 0 && k < static_cast<int>(c.size()) ? c[k] : 0.0; }

  double operator()(double x) const {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
    return acc;
  }

  // p(x / s)
  Polynomial rescaled(double s) const {
    std::vector<double> out(c);
    double f = 1.0;
    for (double& v : out) {
      v *= f;
      f /= s;
    }
    return Polynomial(out);
  }

  friend Polynomial operator+(const Polynomial& a, const Polynomial& b) {
    std::vector<double> out(std::max(a.c.size(), b.c.size()), 0.0);
    for (std::size_t i = 0; i < a.c.size(); ++i) out[i] += a.c[i];
    for (std::size_t i = 0; i < b.c.size(); ++i) out[i] += b.c[i];
    return Polynomial(out);
  }
  friend Polynomial operator*(double s, const Polynomial& p) {
    std::vector<double> out(p.c);
    for (double& v : out) v *= s;
    return Polynomial(out);
  }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    if (a.is_zero() || b.is_zero()) return Polynomial();
    std::vector<double> out(a.c.size() + b.c.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.c.size(); ++i)
      for (std::size_t j = 0; j < b.c.size(); ++j) out[i + j] += a.c[i] * b.c[j];
    return Polynomial(out);
  }
};

// Probabilists' Hermite polynomials, H_{n+1} = x H_n - n H_{n-1}.
inline Polynomial hermite(int l) {
  require(l >= 0 && l <= 40, "ConfigError", "Hermite order must lie in 0..40");
  std::vector<double> prev{1.0}, cur{0.0, 1.0};
  if (l == 0) return Polynomial(prev);
  for (int n = 1; n < l; ++n) {
    std::vector<double> next(n + 2, 0.0);
    for (int k = 0; k <= n; ++k) next[k + 1] += cur[k];
    for (int k = 0; k < static_cast<int>(prev.size()); ++k) next[k] -= n * prev[k];
    prev = std::move(cur);
    cur = std::move(next);
  }
  return Polynomial(cur);
}

struct DiscreteDistribution {
  Vec support;
  Vec weights;
};

struct IidLaw {
  DiscreteDistribution law;
  double mean = 0.0;
  double sigma_iid = 0.0;
  Vec cumulants; // index l holds kappa_l of B - mean, index 0 unused
};

inline Vec moments_of(const DiscreteDistribution& d, double center, int l_max) {
  Vec m(l_max + 1);
  for (int l = 0; l <= l_max; ++l) m(l) = d.weights.dot((d.support.array() - center).pow(l).matrix());
  return m;
}

// Law of B in the state phi: eigenvalues weighted by |<b_k, phi>|^2, equal
// eigenvalues merged.
inline IidLaw iid_single_particle_law(const Mat& B, const Vec& phi, int l_max = 8) {
  Eigen::SelfAdjointEigenSolver<Mat> es(B);
  Vec w = (es.eigenvectors().transpose() * phi).array().square();
  std::vector<double> sup, wts;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double e = es.eigenvalues()(i);
    if (!sup.empty() && std::abs(e - sup.back()) <= 1e-12 * std::max(1.0, std::abs(e))) {
      wts.back() += w(i);
    } else {
      sup.push_back(e);
      wts.push_back(w(i));
    }
  }
  IidLaw r;
  r.law.support = Eigen::Map<Vec>(sup.data(), sup.size());
  r.law.weights = Eigen::Map<Vec>(wts.data(), wts.size());
  r.law.weights /= r.law.weights.sum();
  r.mean = r.law.weights.dot(r.law.support);
  r.cumulants = cumulants_from_moments(moments_of(r.law, r.mean, l_max));
  r.sigma_iid = std::sqrt(std::max(r.cumulants(2), 0.0));
  return r;
}

namespace detail {

inline void positive_compositions(int total, int parts, std::vector<int>& cur,
                                  const std::function<void(const std::vector<int>&)>& visit) {
  if (static_cast<int>(cur.size()) == parts - 1) {
    if (total >= 1) {
      cur.push_back(total);
      visit(cur);
      cur.pop_back();
    }
    return;
  }
  for (int j = 1; j <= total - (parts - 1 - static_cast<int>(cur.size())); ++j) {
    cur.push_back(j);
    positive_compositions(total - j, parts, cur, visit);
    cur.pop_back();
  }
}

} // namespace detail

// p_l(x) = sum_m H_{l+2m}(x/s) / (s^{l+2m} m!) sum_{|j|=l} prod kappa_{j_n+2}/(j_n+2)!,
// returned for l = 0..l_max (p_0 = 1).
inline std::vector<Polynomial> iid_polynomials(const Vec& kappa, double sigma, int l_max) {
  require(kappa.size() >= l_max + 3, "ConfigError", "cumulants up to order l_max + 2 required");
  require(sigma > 0.0, "SigmaDegenerate", "sigma must be positive");
  std::vector<Polynomial> out{Polynomial::constant(1.0)};
  for (int l = 1; l <= l_max; ++l) {
    Polynomial p;
    for (int m = 1; m <= l; ++m) {
      double inner = 0.0;
      std::vector<int> cur;
      detail::positive_compositions(l, m, cur, [&](const std::vector<int>& j) {
        double prod = 1.0;
        for (int jn : j) prod *= kappa(jn + 2) / factorial(jn + 2);
        inner += prod;
      });
      const int order = l + 2 * m;
      p = p + (inner / (std::pow(sigma, order) * factorial(m))) * hermite(order).rescaled(sigma);
    }
    out.push_back(p);
  }
  return out;
}

enum class SeriesKind { Iid, Ground, Excited };

struct EdgeworthSeries {
  double sigma = 0.0;
  std::vector<Polynomial> polys;
  SeriesKind kind = SeriesKind::Ground;
  int eta = 0;
};

inline EdgeworthSeries iid_series(const IidLaw& law, int a) {
  EdgeworthSeries s;
  s.sigma = law.sigma_iid;
  s.polys = iid_polynomials(law.cumulants, law.sigma_iid, a);
  s.kind = SeriesKind::Iid;
  return s;
}

inline EdgeworthSeries ground_series(double sigma, double alpha3, int a) {
  require(sigma > 0.0, "SigmaDegenerate", "sigma must be positive");
  require(a == 0 || a == 1, "ConfigError", "ground series is known to order 1");
  EdgeworthSeries s;
  s.sigma = sigma;
  s.polys.push_back(Polynomial::constant(1.0));
  if (a == 1) s.polys.push_back((alpha3 / (6.0 * std::pow(sigma, 3))) * hermite(3).rescaled(sigma));
  return s;
}

// 12 Re theta + <nu, (U0 Bq U0^T + V0 Bq V0^T) nu> + 4 <nu, U0 Bq V0^T nu>,
// with Bq = q(B - <phi,B phi>)q in perp coordinates.
inline double alpha3_analytic(const Vec& nu, const Mat& U0, const Mat& V0, const Mat& Bq, double theta13) {
  const Vec u = U0.transpose() * nu;
  const Vec v = V0.transpose() * nu;
  return 12.0 * theta13 + u.dot(Bq * u) + v.dot(Bq * v) + 4.0 * u.dot(Bq * v);
}

// c_{eta,l} by the double permutation sum; xi given as vectors in the same
// coordinates as nu.
inline double excited_coefficient(const std::vector<Vec>& xi, const Vec& nu, int l) {
  const int eta = static_cast<int>(xi.size());
  std::vector<int> pi(eta), pip(eta);
  double sum = 0.0;
  std::iota(pi.begin(), pi.end(), 0);
  do {
    std::iota(pip.begin(), pip.end(), 0);
    do {
      double prod = 1.0;
      for (int j = 0; j < eta - l; ++j) prod *= xi[pip[j]].dot(xi[pi[j]]);
      for (int j = eta - l; j < eta; ++j) prod *= xi[pip[j]].dot(nu) * nu.dot(xi[pi[j]]);
      sum += prod;
    } while (std::next_permutation(pip.begin(), pip.end()));
  } while (std::next_permutation(pi.begin(), pi.end()));
  const double sign = l % 2 == 0 ? 1.0 : -1.0;
  return sign * sum / (factorial(eta - l) * factorial(l) * factorial(l));
}

// p_0^ex(x) = sum_l c_{eta,l} (-i/sigma)^{2l} H_{2l}(x/sigma).
inline Polynomial excited_polynomial(const std::vector<Vec>& xi, const Vec& nu, double sigma) {
  const int eta = static_cast<int>(xi.size());
  require(eta >= 1, "ConfigError", "at least one quasi-particle");
  require(eta <= 6, "PermutationGuard", "eta above 6");
  require(sigma > 0.0, "SigmaDegenerate", "sigma must be positive");
  Polynomial p;
  for (int l = 0; l <= eta; ++l) {
    const double sign = l % 2 == 0 ? 1.0 : -1.0;
    p = p + (excited_coefficient(xi, nu, l) * sign / std::pow(sigma, 2 * l)) * hermite(2 * l).rescaled(sigma);
  }
  return p;
}

inline EdgeworthSeries excited_series(const std::vector<Vec>& xi, const Vec& nu, double sigma) {
  EdgeworthSeries s;
  s.sigma = sigma;
  s.polys.push_back(excited_polynomial(xi, nu, sigma));
  s.kind = SeriesKind::Excited;
  s.eta = static_cast<int>(xi.size());
  return s;
}

inline double gaussian_density(double x, double sigma) {
  return std::exp(-x * x / (2.0 * sigma * sigma)) / (std::sqrt(2.0 * std::numbers::pi) * sigma);
}

// b_a(x) = (sum_j N^{-j/2} p_j(x)) Gaussian_sigma(x); may be negative in the tails.
inline Vec density_eval(const EdgeworthSeries& s, double N, const Vec& x) {
  Vec out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double poly = 0.0;
    for (std::size_t j = 0; j < s.polys.size(); ++j) poly += std::pow(N, -0.5 * j) * s.polys[j](x(i));
    out(i) = poly * gaussian_density(x(i), s.sigma);
  }
  return out;
}

struct Quadrature {
  Vec nodes;
  Vec weights; // sum to 1 against the standard normal
};

// Golub-Welsch for the weight exp(-z^2/2)/sqrt(2 pi).
inline Quadrature gauss_hermite(int n) {
  require(n >= 1, "ConfigError", "need at least one node");
  Mat J = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(double(k));
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  Quadrature q;
  q.nodes = es.eigenvalues();
  q.weights = es.eigenvectors().row(0).transpose().array().square();
  return q;
}

struct WeakResult {
  double value = 0.0;
  double doubled = 0.0; // same integral with twice the nodes
  bool quadrature_warning = false;
};

inline double weak_sum(const EdgeworthSeries& s, double N, const std::function<double(double)>& g, const Quadrature& q) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.nodes.size(); ++i) {
    const double x = s.sigma * q.nodes(i);
    double poly = 0.0;
    for (std::size_t j = 0; j < s.polys.size(); ++j) poly += std::pow(N, -0.5 * j) * s.polys[j](x);
    acc += q.weights(i) * g(x) * poly;
  }
  return acc;
}

inline WeakResult weak_expectation(const EdgeworthSeries& s, double N, const std::function<double(double)>& g,
                                   int nodes = 200) {
  WeakResult r;
  r.value = weak_sum(s, N, g, gauss_hermite(nodes));
  r.doubled = weak_sum(s, N, g, gauss_hermite(2 * nodes));
  r.quadrature_warning = std::abs(r.value - r.doubled) > 1e-8;
  return r;
}

// Mass of the negative part of b_a on a uniform grid over +-10 sigma.
inline double negative_mass(const EdgeworthSeries& s, double N, int points = 4001) {
  const double L = 10.0 * s.sigma;
  Vec x = Vec::LinSpaced(points, -L, L);
  Vec b = density_eval(s, N, x);
  const double dx = 2.0 * L / (points - 1);
  return b.cwiseMin(0.0).sum() * -dx;
}

} // namespace bose_edgeworth
