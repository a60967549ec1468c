#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace refqkd::detail {

/// a . x >= b
template <int D>
struct HalfSpace {
  Eigen::Matrix<double, D, 1> a;
  double b = 0.0;
};

/// Range of one coordinate over the polytope {x : a_i . x >= b_i}, by vertex
/// enumeration. Returns nullopt for an empty polytope. Only meant for the
/// handful of constraints used here (at most a few hundred D-subsets).
template <int D>
std::optional<std::pair<double, double>> coordinate_range(const std::vector<HalfSpace<D>>& cons,
                                                          int coord, double rel_tol = 1e-10) {
  using Mat = Eigen::Matrix<double, D, D>;
  using Vec = Eigen::Matrix<double, D, 1>;
  const int m = static_cast<int>(cons.size());
  if (m < D) return std::nullopt;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::array<int, D> idx{};
  for (int i = 0; i < D; ++i) idx[i] = i;

  while (true) {
    Mat a;
    Vec b;
    for (int r = 0; r < D; ++r) {
      a.row(r) = cons[idx[r]].a.transpose();
      b(r) = cons[idx[r]].b;
    }
    Eigen::FullPivLU<Mat> lu(a);
    if (lu.rank() == D) {
      const Vec x = lu.solve(b);
      bool inside = x.allFinite();
      for (int k = 0; inside && k < m; ++k) {
        const double lhs = cons[k].a.dot(x);
        const double scale = cons[k].a.cwiseAbs().dot(x.cwiseAbs()) + std::abs(cons[k].b);
        inside = lhs - cons[k].b >= -rel_tol * scale - 1e-300;
      }
      if (inside) {
        lo = std::min(lo, x(coord));
        hi = std::max(hi, x(coord));
      }
    }
    // next D-combination of {0..m-1}
    int i = D - 1;
    while (i >= 0 && idx[i] == m - D + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < D; ++j) idx[j] = idx[j - 1] + 1;
  }
  if (lo > hi) return std::nullopt;
  return std::make_pair(lo, hi);
}

}  // namespace refqkd::detail
