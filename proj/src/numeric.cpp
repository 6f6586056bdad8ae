#include "lps/numeric.hpp"

#include <algorithm>

namespace lps {

double grad_check(const std::function<ValueGrad(const Eigen::VectorXd&)>& f,
                  const Eigen::VectorXd& x, double h) {
  if (h <= 0) throw std::invalid_argument("grad_check: h must be positive");
  const Eigen::VectorXd analytic = f(x).grad;
  double max_rel = 0.0;
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const double fp = f(xp).value;
    xp(i) = x(i) - h;
    const double fm = f(xp).value;
    xp(i) = x(i);
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom =
        std::max({std::abs(analytic(i)), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(analytic(i) - numeric) / denom);
  }
  return max_rel;
}

}  // namespace lps
