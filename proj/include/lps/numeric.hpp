#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>

namespace lps {

// Scalar kernels shared by every loss and evaluation path. All routines are
// pure; getting them bit-stable matters more than speed here, so everything
// runs in the scalar type of the expression (double throughout the library)
// and every exp-normalization goes through a max-shift.

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

/// Exp-normalized probabilities, stable for entries up to +-1e4.
/// Throws std::invalid_argument on non-finite input.
template <typename Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (!logits.allFinite()) {
    throw std::invalid_argument("softmax: non-finite logits");
  }
  const Scalar m = logits.maxCoeff();
  Eigen::Vector<Scalar, Eigen::Dynamic> p =
      (logits.array() - m).exp().matrix();
  return p / p.sum();
}

/// KL(p || q) with 0*ln(0) treated as 0. Requires q_j > 0 wherever p_j > 0.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_divergence(const Eigen::MatrixBase<DerivedP>& p,
                                        const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl_divergence: length mismatch");
  }
  Scalar sum = 0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const Scalar pj = p(j);
    if (pj <= Scalar(0)) continue;
    if (q(j) <= Scalar(0)) {
      throw std::invalid_argument("kl_divergence: q vanishes where p > 0");
    }
    sum += pj * std::log(pj / q(j));
  }
  return sum;
}

struct UnitVector {
  Eigen::VectorXd value;
  bool degenerate = false;  // ||v|| <= eps, value returned unchanged
};

inline UnitVector l2_normalize(const Eigen::VectorXd& v, double eps = 1e-12) {
  const double norm = v.norm();
  if (norm <= eps) return {v, true};
  return {v / norm, false};
}

struct ValueGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// Central-difference check of an analytic gradient. Returns the max relative
/// error over coordinates with denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<ValueGrad(const Eigen::VectorXd&)>& f,
                  const Eigen::VectorXd& x, double h);

}  // namespace lps
