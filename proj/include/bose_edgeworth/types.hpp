#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace bose_edgeworth {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using cplx = std::complex<double>;

// Base for every error the library raises; `kind` is a short stable tag.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

inline void require(bool cond, const char* kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

// kappa_l = m_l - sum_{j=1}^{l-1} C(l-1, j-1) kappa_j m_{l-j}; index 0 unused.
inline Eigen::VectorXd cumulants_from_moments(const Eigen::VectorXd& m) {
  const int l_max = static_cast<int>(m.size()) - 1;
  Eigen::VectorXd k = Eigen::VectorXd::Zero(l_max + 1);
  for (int l = 1; l <= l_max; ++l) {
    double acc = m(l);
    for (int j = 1; j < l; ++j) acc -= binomial(l - 1, j - 1) * k(j) * m(l - j);
    k(l) = acc;
  }
  return k;
}

inline double max_asymmetry(const Mat& m) { return (m - m.transpose()).cwiseAbs().maxCoeff(); }

} // namespace bose_edgeworth
