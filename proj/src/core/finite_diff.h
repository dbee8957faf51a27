#pragma once

#include <functional>

#include "core/numarray.h"

namespace grf {

// Central-difference gradient oracle: (f(x+eps*e_i) - f(x-eps*e_i)) / (2 eps).
// Used by the gradient-check command and as the independent reference for
// every backward rule in the test suites.
NumArray finite_diff_grad(const std::function<double(const NumArray&)>& f, const NumArray& x,
                          double eps);

// abs(a-b) / max(1, |a|, |b|); the gradient-check acceptance metric.
double rel_error(double a, double b);

// Max rel_error over all coordinates of two same-shaped arrays.
double max_rel_error(const NumArray& a, const NumArray& b);

}  // namespace grf
