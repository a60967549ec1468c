#pragma once

#include <cmath>
#include <utility>

namespace refqkd::detail {

struct ScalarMinimum {
  double x = 0.0;
  double value = 0.0;
};

/// Golden-section minimization of a unimodal f on [lo, hi]. Stops when the
/// bracket is narrower than abs_tol or after max_iter steps; the endpoints
/// are compared against the interior optimum so boundary minima are exact.
template <class F>
ScalarMinimum golden_section_minimize(F&& f, double lo, double hi, double abs_tol, int max_iter = 200) {
  if (hi < lo) std::swap(lo, hi);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < max_iter && (b - a) > abs_tol; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  ScalarMinimum best = f1 <= f2 ? ScalarMinimum{x1, f1} : ScalarMinimum{x2, f2};
  for (double edge : {lo, hi}) {
    const double fe = f(edge);
    if (fe < best.value) best = {edge, fe};
  }
  return best;
}

}  // namespace refqkd::detail
