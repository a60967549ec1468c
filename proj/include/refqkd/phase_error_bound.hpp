#pragma once

// Asymptotic phase-error estimation.
//
// The data pairs are described by the six-outcome projection
// {P00, P11, P10, P01, P(0_x)(x)1_ex, P(1_x)(x)1_ex} with fractions
// {n+(1-d+), n+ d+, n-(1-d-), n- d-, m0, m1}. The tallies n_fil, n_ph and
// Alice's X marginal are linear in those six fractions, and the smallest
// bit-error fraction compatible with them is
//
//   n_err >= (m0 + m1 + n+ g(d+) + n- g(d-)) / 2,  g(d) = (c sqrt(d) - s sqrt(1-d))^2.
//
// Written in the fractions, n g(d) = (c sqrt(P_match) - s sqrt(P_other))^2 is
// convex, so min_err(n_fil, n_ph) is jointly convex. The solvers below rely
// on that: the origin (m0, m1) = (0, 0) is certified optimal by its gradient,
// the (m0, m1) search is a nested golden section, and the largest n_ph with
// min_err <= n_err is found by bisection on the rising branch.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "refqkd/coherent_algebra.hpp"
#include "refqkd/detail/golden_section.hpp"
#include "refqkd/detail/polytope.hpp"

namespace refqkd {

/// The observed (n_fil, n_err) pair admits no phase-error count at all.
class InconsistentTallies : public std::runtime_error {
 public:
  InconsistentTallies(double n_fil, double n_err)
      : std::runtime_error("inconsistent tallies: no n_ph in [0, n_fil] is compatible with n_fil=" +
                           std::to_string(n_fil) + ", n_err=" + std::to_string(n_err)) {}
};

struct ConstraintVars {
  double n_plus = 0.0;
  double n_minus = 0.0;
  double delta_plus = 0.0;
  double delta_minus = 0.0;
  double m0 = 0.0;
  double m1 = 0.0;
};

/// Fractions of the six projection outcomes, in the order P00, P11, P10, P01.
struct OutcomeFractions {
  double p00 = 0.0;
  double p11 = 0.0;
  double p10 = 0.0;
  double p01 = 0.0;
  double m0 = 0.0;
  double m1 = 0.0;

  std::array<double, 4> qubit() const { return {p00, p11, p10, p01}; }
};

struct BoundSolverConfig {
  // Half-width of the window around the observed n_fil that the model value
  // may take. Zero is the asymptotic engine.
  double epsilon_slack = 0.0;
  int m_grid = 33;              // coarse samples of m1 before golden refinement
  double ph_tolerance = 1e-9;   // bisection width on n_ph, relative to n_fil
  int oracle_grid = 60;         // resolution used by validation oracles
  int monotonicity_scan = 32;   // samples checked on the rising branch
};

struct BoundSolution {
  ConstraintVars vars;
  double min_err = std::numeric_limits<double>::infinity();
  bool feasible = false;
  bool origin_optimal = false;  // (m0, m1) = (0, 0) attained the minimum
};

namespace detail {

inline constexpr double kFeasibilityTol = 1e-14;
inline constexpr double kErrTolRel = 1e-13;

inline void check_unit(double x, const char* name) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw DomainError(std::string(name) + " must lie in [0, 1], got " + std::to_string(x));
  }
}

/// Linear part of the map (n_fil, n_ph, m0, m1) -> (P00, P11, P10, P01).
inline std::array<double, 4> outcome_slopes(double d_fil, double d_ph, double d_m0, double d_m1,
                                            const SubspaceConstants& k) {
  const double s2 = k.beta.s_sq, c2 = k.beta.c_sq, t = k.beta.t;
  const double dm = d_m0 + d_m1;
  const double sum_match = (d_fil - c2 * dm) / t;  // P11 + P01
  const double p01 = d_ph - d_m1 + s2 * (d_m1 + sum_match);
  const double n_minus = -d_m1 - sum_match + 2.0 * p01;
  const double p11 = sum_match - p01;
  return {-dm - n_minus - p11, p11, n_minus - p01, p01};
}

/// Solves partition, n_ph, n_fil and Alice-marginal equalities for the four
/// qubit-sector fractions. The result may be negative (infeasible).
inline OutcomeFractions solve_outcomes(double n_fil, double n_ph, double m0, double m1,
                                       const SubspaceConstants& k) {
  const double s2 = k.beta.s_sq, c2 = k.beta.c_sq, t = k.beta.t;
  const double s_alpha2 = k.alpha.s_sq;
  const double m = m0 + m1;
  // n_fil - m = t (P11 + P01) + s^2 (1 - m)
  const double sum_match = (n_fil - s2 - c2 * m) / t;
  // n_ph - m1 = s^2 P10 + c^2 P01, with P10 = s_alpha^2 - m1 - P11
  const double p01 = n_ph - m1 - s2 * (s_alpha2 - m1 - sum_match);
  const double n_minus = s_alpha2 - m1 - sum_match + 2.0 * p01;
  const double p11 = sum_match - p01;
  OutcomeFractions f;
  f.p11 = p11;
  f.p01 = p01;
  f.p10 = n_minus - p01;
  f.p00 = 1.0 - m - n_minus - p11;
  f.m0 = m0;
  f.m1 = m1;
  return f;
}

inline bool admissible(const OutcomeFractions& f) {
  return f.p00 >= -kFeasibilityTol && f.p11 >= -kFeasibilityTol && f.p10 >= -kFeasibilityTol &&
         f.p01 >= -kFeasibilityTol && f.m0 >= 0.0 && f.m1 >= 0.0;
}

inline OutcomeFractions clipped(OutcomeFractions f) {
  f.p00 = std::max(f.p00, 0.0);
  f.p11 = std::max(f.p11, 0.0);
  f.p10 = std::max(f.p10, 0.0);
  f.p01 = std::max(f.p01, 0.0);
  return f;
}

// (c sqrt(x) - s sqrt(y))^2 = n g(d) for x = n d, y = n (1 - d)
inline double sector_err(double match, double other, double c, double s) {
  const double r = c * std::sqrt(match) - s * std::sqrt(other);
  return r * r;
}

inline double err_objective(const OutcomeFractions& f, const SubspaceConstants& k) {
  const double c = k.beta.c(), s = k.beta.s();
  return 0.5 * (f.m0 + f.m1 + sector_err(f.p11, f.p00, c, s) + sector_err(f.p01, f.p10, c, s));
}

inline double err_at(double n_fil, double n_ph, double m0, double m1, const SubspaceConstants& k) {
  const OutcomeFractions f = solve_outcomes(n_fil, n_ph, m0, m1, k);
  if (!admissible(f)) return std::numeric_limits<double>::infinity();
  return err_objective(clipped(f), k);
}

inline ConstraintVars to_vars(const OutcomeFractions& f) {
  ConstraintVars v;
  v.n_plus = f.p00 + f.p11;
  v.n_minus = f.p10 + f.p01;
  v.delta_plus = v.n_plus > 0.0 ? std::clamp(f.p11 / v.n_plus, 0.0, 1.0) : 0.0;
  v.delta_minus = v.n_minus > 0.0 ? std::clamp(f.p01 / v.n_minus, 0.0, 1.0) : 0.0;
  v.m0 = f.m0;
  v.m1 = f.m1;
  return v;
}

// Gradient of the objective with respect to (m0, m1) at a point where every
// qubit-sector fraction is strictly positive.
inline std::array<double, 2> err_gradient_m(const OutcomeFractions& f, const SubspaceConstants& k) {
  const double c = k.beta.c(), s = k.beta.s();
  auto sector_grad = [&](double x, double y, double dx, double dy) {
    const double r = c * std::sqrt(x) - s * std::sqrt(y);
    return r * (c * dx / std::sqrt(x) - s * dy / std::sqrt(y));
  };
  std::array<double, 2> g{};
  for (int axis = 0; axis < 2; ++axis) {
    const auto d = outcome_slopes(0.0, 0.0, axis == 0 ? 1.0 : 0.0, axis == 1 ? 1.0 : 0.0, k);
    g[axis] = 0.5 * (1.0 + sector_grad(f.p11, f.p00, d[1], d[0]) + sector_grad(f.p01, f.p10, d[3], d[2]));
  }
  return g;
}

// Half-spaces over x = (m0, m1) describing feasibility at fixed (n_fil, n_ph).
inline std::vector<HalfSpace<2>> m_polygon(double n_fil, double n_ph, const SubspaceConstants& k) {
  const OutcomeFractions base = solve_outcomes(n_fil, n_ph, 0.0, 0.0, k);
  const auto b = base.qubit();
  const auto d0 = outcome_slopes(0.0, 0.0, 1.0, 0.0, k);
  const auto d1 = outcome_slopes(0.0, 0.0, 0.0, 1.0, k);
  std::vector<HalfSpace<2>> cons;
  for (int i = 0; i < 4; ++i) {
    HalfSpace<2> h;
    h.a << d0[i], d1[i];
    h.b = -b[i];
    cons.push_back(h);
  }
  HalfSpace<2> m0_pos, m1_pos;
  m0_pos.a << 1.0, 0.0;
  m1_pos.a << 0.0, 1.0;
  cons.push_back(m0_pos);
  cons.push_back(m1_pos);
  return cons;
}

inline BoundSolution make_solution(const OutcomeFractions& f, const SubspaceConstants& k) {
  BoundSolution sol;
  sol.feasible = admissible(f);
  if (!sol.feasible) return sol;
  const OutcomeFractions c = clipped(f);
  sol.vars = to_vars(c);
  sol.min_err = err_objective(c, k);
  return sol;
}

}  // namespace detail

/// g(d) = (c_beta sqrt(d) - s_beta sqrt(1-d))^2, the smallest conditional
/// error compatible with a conditional flip fraction d.
inline double g_function(double delta, const OverlapConstants& beta) {
  detail::check_unit(delta, "delta");
  const double r = beta.c() * std::sqrt(delta) - beta.s() * std::sqrt(1.0 - delta);
  return r * r;
}

/// Minimal n_err fraction at fixed (m0, m1). The four equalities determine
/// the remaining variables; infeasible when any of them leaves its range.
inline BoundSolution min_err_fixed_m(double n_fil, double n_ph, double m0, double m1,
                                     const SubspaceConstants& consts) {
  detail::check_unit(n_fil, "n_fil");
  detail::check_unit(n_ph, "n_ph");
  detail::check_unit(m0, "m0");
  detail::check_unit(m1, "m1");
  if (m0 + m1 > 1.0) return {};
  return detail::make_solution(detail::solve_outcomes(n_fil, n_ph, m0, m1, consts), consts);
}

/// Minimal n_err fraction over all (m0, m1).
inline BoundSolution min_err(double n_fil, double n_ph, const SubspaceConstants& consts,
                             const BoundSolverConfig& cfg = {}) {
  detail::check_unit(n_fil, "n_fil");
  detail::check_unit(n_ph, "n_ph");

  const OutcomeFractions origin = detail::solve_outcomes(n_fil, n_ph, 0.0, 0.0, consts);
  const bool origin_ok = detail::admissible(origin);
  if (origin_ok && origin.p00 > 0.0 && origin.p11 > 0.0 && origin.p10 > 0.0 && origin.p01 > 0.0) {
    // Convex objective, feasible cone = positive quadrant: a nonnegative
    // gradient certifies the global minimum.
    const auto g = detail::err_gradient_m(origin, consts);
    if (g[0] >= 0.0 && g[1] >= 0.0) {
      BoundSolution sol = detail::make_solution(origin, consts);
      sol.origin_optimal = true;
      return sol;
    }
  }

  const auto cons = detail::m_polygon(n_fil, n_ph, consts);
  const auto m1_range = detail::coordinate_range<2>(cons, 1);
  if (!m1_range) return {};

  const double scale = std::max(n_fil, 1e-300);
  const double tol = 1e-13 * scale;

  auto m0_interval = [&](double m1) {
    double lo = 0.0, hi = 1.0 - m1;
    for (const auto& h : cons) {
      const double rhs = h.b - h.a(1) * m1;  // a0 * m0 >= rhs
      if (h.a(0) > 0.0) lo = std::max(lo, rhs / h.a(0));
      else if (h.a(0) < 0.0) hi = std::min(hi, rhs / h.a(0));
    }
    if (lo > hi) lo = hi = 0.5 * (lo + hi);
    return std::make_pair(lo, hi);
  };
  auto inner = [&](double m1) {
    const auto [lo, hi] = m0_interval(m1);
    return detail::golden_section_minimize(
        [&](double m0) { return detail::err_at(n_fil, n_ph, m0, m1, consts); }, lo, hi, tol);
  };

  double m1_lo = std::max(m1_range->first, 0.0);
  double m1_hi = std::max(m1_range->second, m1_lo);
  const int grid = std::max(cfg.m_grid, 3);
  int best_i = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i) {
    const double m1 = m1_lo + (m1_hi - m1_lo) * i / (grid - 1);
    const double v = inner(m1).value;
    if (v < best_v) {
      best_v = v;
      best_i = i;
    }
  }
  const double step = (m1_hi - m1_lo) / (grid - 1);
  const double br_lo = std::max(m1_lo, m1_lo + step * (best_i - 1));
  const double br_hi = std::min(m1_hi, m1_lo + step * (best_i + 1));
  const auto outer = detail::golden_section_minimize([&](double m1) { return inner(m1).value; },
                                                     br_lo, br_hi, tol);
  const double m1_best = outer.x;
  const double m0_best = inner(m1_best).x;

  BoundSolution sol = detail::make_solution(
      detail::solve_outcomes(n_fil, n_ph, m0_best, m1_best, consts), consts);
  if (origin_ok) {
    BoundSolution at_origin = detail::make_solution(origin, consts);
    if (!sol.feasible || at_origin.min_err <= sol.min_err + 1e-15 * scale) {
      at_origin.origin_optimal = true;
      return at_origin;
    }
  }
  return sol;
}

namespace detail {

// Half-spaces over x = (n_ph, m0, m1, n_fil') with n_fil' in [fil_lo, fil_hi].
inline std::vector<HalfSpace<4>> ph_polytope(double fil_lo, double fil_hi, const SubspaceConstants& k) {
  const OutcomeFractions base = solve_outcomes(0.0, 0.0, 0.0, 0.0, k);
  const auto b = base.qubit();
  const auto d_ph = outcome_slopes(0.0, 1.0, 0.0, 0.0, k);
  const auto d_m0 = outcome_slopes(0.0, 0.0, 1.0, 0.0, k);
  const auto d_m1 = outcome_slopes(0.0, 0.0, 0.0, 1.0, k);
  const auto d_fil = outcome_slopes(1.0, 0.0, 0.0, 0.0, k);
  std::vector<HalfSpace<4>> cons;
  for (int i = 0; i < 4; ++i) {
    HalfSpace<4> h;
    h.a << d_ph[i], d_m0[i], d_m1[i], d_fil[i];
    h.b = -b[i];
    cons.push_back(h);
  }
  auto axis = [&](int j, double sign, double bound) {
    HalfSpace<4> h;
    h.a.setZero();
    h.a(j) = sign;
    h.b = sign * bound;
    cons.push_back(h);
  };
  axis(0, 1.0, 0.0);
  axis(1, 1.0, 0.0);
  axis(2, 1.0, 0.0);
  axis(3, 1.0, fil_lo);
  axis(3, -1.0, fil_hi);
  return cons;
}

// Same polytope with n_ph pinned, over x = (m0, m1, n_fil').
inline std::vector<HalfSpace<3>> fil_polytope(double n_ph, double fil_lo, double fil_hi,
                                              const SubspaceConstants& k) {
  const OutcomeFractions base = solve_outcomes(0.0, n_ph, 0.0, 0.0, k);
  const auto b = base.qubit();
  const auto d_m0 = outcome_slopes(0.0, 0.0, 1.0, 0.0, k);
  const auto d_m1 = outcome_slopes(0.0, 0.0, 0.0, 1.0, k);
  const auto d_fil = outcome_slopes(1.0, 0.0, 0.0, 0.0, k);
  std::vector<HalfSpace<3>> cons;
  for (int i = 0; i < 4; ++i) {
    HalfSpace<3> h;
    h.a << d_m0[i], d_m1[i], d_fil[i];
    h.b = -b[i];
    cons.push_back(h);
  }
  auto axis = [&](int j, double sign, double bound) {
    HalfSpace<3> h;
    h.a.setZero();
    h.a(j) = sign;
    h.b = sign * bound;
    cons.push_back(h);
  };
  axis(0, 1.0, 0.0);
  axis(1, 1.0, 0.0);
  axis(2, 1.0, fil_lo);
  axis(2, -1.0, fil_hi);
  return cons;
}

/// min over n_fil' in the slack window of min_err(n_fil', n_ph).
inline double windowed_min_err(double n_ph, double fil_lo, double fil_hi, const SubspaceConstants& k,
                               const BoundSolverConfig& cfg) {
  if (fil_lo == fil_hi) return min_err(fil_lo, n_ph, k, cfg).min_err;
  const auto range = coordinate_range<3>(fil_polytope(n_ph, fil_lo, fil_hi, k), 2);
  if (!range) return std::numeric_limits<double>::infinity();
  const double lo = std::clamp(range->first, fil_lo, fil_hi);
  const double hi = std::clamp(range->second, lo, fil_hi);
  return golden_section_minimize([&](double f) { return min_err(f, n_ph, k, cfg).min_err; }, lo, hi,
                                 1e-13 * std::max(fil_hi, 1e-300))
      .value;
}

}  // namespace detail

/// Largest n_ph compatible with (n_fil, n_err), or nullopt when no n_ph is.
inline std::optional<double> try_phase_error_bound(double n_fil, double n_err, const SubspaceConstants& consts,
                                                   const BoundSolverConfig& cfg = {}) {
  detail::check_unit(n_fil, "n_fil");
  detail::check_unit(n_err, "n_err");
  if (n_err > n_fil) {
    throw DomainError("n_err must not exceed n_fil");
  }
  if (!(cfg.epsilon_slack >= 0.0)) throw DomainError("epsilon_slack must be >= 0");
  if (n_fil == 0.0) return 0.0;

  const double fil_lo = std::max(0.0, n_fil - cfg.epsilon_slack);
  const double fil_hi = std::min(1.0, n_fil + cfg.epsilon_slack);
  const auto range = detail::coordinate_range<4>(detail::ph_polytope(fil_lo, fil_hi, consts), 0);
  if (!range) return std::nullopt;
  const double ph_lo = std::clamp(range->first, 0.0, fil_hi);
  const double ph_hi = std::clamp(range->second, ph_lo, fil_hi);

  const double threshold = n_err + detail::kErrTolRel * n_fil;
  const double width_tol = std::max(cfg.ph_tolerance, 1e-15) * n_fil;
  auto err = [&](double ph) { return detail::windowed_min_err(ph, fil_lo, fil_hi, consts, cfg); };

  const auto bottom = detail::golden_section_minimize(err, ph_lo, ph_hi, 1e-3 * width_tol);
  if (!(bottom.value <= threshold)) return std::nullopt;
  if (err(ph_hi) <= threshold) return std::min(ph_hi, n_fil);

  // Sample the rising branch; bisection needs it to be nondecreasing.
  const int scan = std::max(cfg.monotonicity_scan, 2);
  std::vector<double> xs(scan + 1), es(scan + 1);
  bool monotone = true;
  for (int i = 0; i <= scan; ++i) {
    xs[i] = bottom.x + (ph_hi - bottom.x) * i / scan;
    es[i] = err(xs[i]);
    if (i > 0 && es[i] < es[i - 1] - 1e-12 * std::max(es[i - 1], detail::kErrTolRel * n_fil)) {
      monotone = false;
    }
  }
  if (!monotone) {
    // Fallback: dense scan over the whole feasible range.
    const int dense = 4096;
    xs.assign(dense + 1, 0.0);
    es.assign(dense + 1, 0.0);
    for (int i = 0; i <= dense; ++i) {
      xs[i] = ph_lo + (ph_hi - ph_lo) * i / dense;
      es[i] = err(xs[i]);
    }
    int last = -1;
    for (int i = 0; i <= dense; ++i) {
      if (es[i] <= threshold) last = i;
    }
    if (last < 0) return std::nullopt;
    if (last == dense) return std::min(ph_hi, n_fil);
    xs = {xs[last], xs[last + 1]};
    es = {es[last], es[last + 1]};
  }

  std::size_t j = 1;
  while (j < xs.size() && es[j] <= threshold) ++j;
  // The vertex itself can round to infeasible while the sample next to it is fine.
  if (j == xs.size()) return std::min(ph_hi, n_fil);
  double lo = xs[j - 1], hi = xs[j];
  while (hi - lo > width_tol) {
    const double mid = 0.5 * (lo + hi);
    if (err(mid) <= threshold) lo = mid;
    else hi = mid;
  }
  return std::min(hi, n_fil);
}

/// Upper bound n_ph_bar(n_fil, n_err) on the phase-error fraction.
inline double phase_error_bound(double n_fil, double n_err, const SubspaceConstants& consts,
                                const BoundSolverConfig& cfg = {}) {
  const auto bound = try_phase_error_bound(n_fil, n_err, consts, cfg);
  if (!bound) throw InconsistentTallies(n_fil, n_err);
  return *bound;
}

}  // namespace refqkd
