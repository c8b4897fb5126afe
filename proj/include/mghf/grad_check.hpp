#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "mghf/errors.hpp"
#include "mghf/tensor.hpp"

namespace mghf {

/// Central-difference gradient of a scalar function, one coordinate at a
/// time: (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps). The oracle every
/// analytic gradient in the library is verified against.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               double eps) {
  if (!(eps > 0.0)) throw ArgumentError("finite_diff_grad: eps must be > 0");
  Tensor grad(x.channels, x.height, x.width);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double v = x.data[i];
    probe.data[i] = v + eps;
    const double fp = f(probe);
    probe.data[i] = v - eps;
    const double fm = f(probe);
    probe.data[i] = v;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericalError("finite_diff_grad: non-finite evaluation at coordinate " +
                           std::to_string(i));
    grad.data[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

/// max|a - b| / max(1e-8, max|a|, max|b|); the comparison metric used by
/// every gradient check in the repository.
inline double relative_error(const Tensor& a, const Tensor& b) {
  const double num = max_abs_diff(a, b);
  const double den = std::max({1e-8, max_abs(a), max_abs(b)});
  return num / den;
}

}  // namespace mghf
