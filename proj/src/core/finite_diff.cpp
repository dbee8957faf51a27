#include "core/finite_diff.h"

#include <algorithm>
#include <cmath>

namespace grf {

NumArray finite_diff_grad(const std::function<double(const NumArray&)>& f, const NumArray& x,
                          double eps) {
  if (eps <= 0) throw Error("finite_diff_grad: eps must be positive");
  NumArray grad(x.shape(), x.dtype());
  NumArray probe = x.clone();
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double xi = x.get(i);
    probe.set(i, xi + eps);
    const double fp = f(probe);
    probe.set(i, xi - eps);
    const double fm = f(probe);
    probe.set(i, xi);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_grad: non-finite function value");
    grad.set(i, (fp - fm) / (2.0 * eps));
  }
  return grad;
}

double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double max_rel_error(const NumArray& a, const NumArray& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_rel_error: shape mismatch");
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, rel_error(a.get(i), b.get(i)));
  return worst;
}

}  // namespace grf
