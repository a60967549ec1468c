#pragma once

// Secret-key gain from tallies, the two error models, security-region
// tracing in the (n_fil/n_fil0, n_err/n_fil) plane and intensity optimization.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "refqkd/coherent_algebra.hpp"
#include "refqkd/detail/golden_section.hpp"
#include "refqkd/detail/parallel.hpp"
#include "refqkd/phase_error_bound.hpp"

namespace refqkd {

enum class TallySource { model_A, model_B, simulated, manual };

inline const char* to_string(TallySource s) {
  switch (s) {
    case TallySource::model_A: return "model_A";
    case TallySource::model_B: return "model_B";
    case TallySource::simulated: return "simulated";
    case TallySource::manual: return "manual";
  }
  return "unknown";
}

/// Per-pair fractions n_fil/N and n_err/N.
struct Tallies {
  double n_fil_frac = 0.0;
  double n_err_frac = 0.0;
  TallySource source = TallySource::manual;
};

inline void validate(const Tallies& t) {
  if (!(t.n_fil_frac >= 0.0 && t.n_fil_frac <= 1.0)) {
    throw DomainError("n_fil fraction must lie in [0, 1], got " + std::to_string(t.n_fil_frac));
  }
  if (!(t.n_err_frac >= 0.0 && t.n_err_frac <= t.n_fil_frac)) {
    throw DomainError("n_err fraction must lie in [0, n_fil], got " + std::to_string(t.n_err_frac));
  }
}

struct ErrorModel {
  double gamma = 0.0;      // intensity-independent spurious rate (dark counts)
  double zeta = 0.0;       // misalignment parameter, asymptotic error rate
  double delta_phi = 0.0;  // phase misalignment for curve B, radians
};

struct KeyRateResult {
  Tallies tallies;
  double n_ph_bound_frac = 0.0;
  double raw_key_frac = 0.0;  // n_fil [1 - h(e_bit) - h(e_ph)] before clamping
  double key_frac = 0.0;      // n_key / N
  double gain = 0.0;          // G = n_key / N
  double bit_entropy = 0.0;
  double phase_entropy = 0.0;
  bool nonnegative = false;
  bool phase_condition = false;  // 2 n_ph_bar <= n_fil
  bool degenerate = false;       // n_fil = 0: no conclusive events, key undefined

  /// Fraction of the raw key removed, 1 - n_key/n_fil.
  double shortening() const {
    return tallies.n_fil_frac > 0.0 ? 1.0 - key_frac / tallies.n_fil_frac : 0.0;
  }
};

namespace detail {

inline KeyRateResult assemble_key(const Tallies& t, double n_ph_bar) {
  KeyRateResult r;
  r.tallies = t;
  r.n_ph_bound_frac = n_ph_bar;
  const double n_fil = t.n_fil_frac;
  r.bit_entropy = binary_entropy(std::min(1.0, t.n_err_frac / n_fil));
  r.phase_entropy = binary_entropy(std::min(1.0, n_ph_bar / n_fil));
  r.raw_key_frac = n_fil * (1.0 - r.bit_entropy - r.phase_entropy);
  r.nonnegative = r.raw_key_frac >= 0.0;
  r.phase_condition = 2.0 * n_ph_bar <= n_fil;
  r.key_frac = (r.nonnegative && r.phase_condition) ? r.raw_key_frac : 0.0;
  r.gain = r.key_frac;
  return r;
}

inline KeyRateResult degenerate_key(const Tallies& t) {
  KeyRateResult r;
  r.tallies = t;
  r.degenerate = true;
  return r;
}

}  // namespace detail

/// n_key/N = n_fil [1 - h(n_err/n_fil) - h(n_ph_bar/n_fil)], zeroed unless it
/// is nonnegative and 2 n_ph_bar <= n_fil. Throws InconsistentTallies.
inline KeyRateResult key_length(const Tallies& tallies, const SubspaceConstants& consts,
                                const BoundSolverConfig& cfg = {}) {
  validate(tallies);
  if (tallies.n_fil_frac == 0.0) return detail::degenerate_key(tallies);
  const double n_ph_bar = phase_error_bound(tallies.n_fil_frac, tallies.n_err_frac, consts, cfg);
  return detail::assemble_key(tallies, n_ph_bar);
}

/// As key_length, but nullopt instead of InconsistentTallies.
inline std::optional<KeyRateResult> try_key_length(const Tallies& tallies, const SubspaceConstants& consts,
                                                   const BoundSolverConfig& cfg = {}) {
  validate(tallies);
  if (tallies.n_fil_frac == 0.0) return detail::degenerate_key(tallies);
  const auto n_ph_bar = try_phase_error_bound(tallies.n_fil_frac, tallies.n_err_frac, consts, cfg);
  if (!n_ph_bar) return std::nullopt;
  return detail::assemble_key(tallies, *n_ph_bar);
}

/// Gain with inconsistent tallies counted as zero.
inline double gain_or_zero(const Tallies& tallies, const SubspaceConstants& consts,
                           const BoundSolverConfig& cfg = {}) {
  const auto r = try_key_length(tallies, consts, cfg);
  return r ? r->gain : 0.0;
}

/// lambda = gamma + 1 - exp(-|alpha|^2 eta 4 zeta / (1 - 2 zeta)).
inline double lambda_model(const ErrorModel& model, const ProtocolParams& params) {
  validate(params);
  if (!(model.zeta >= 0.0 && model.zeta < 0.5)) {
    throw DomainError("zeta must lie in [0, 0.5), got " + std::to_string(model.zeta));
  }
  if (!(model.gamma >= 0.0)) throw DomainError("gamma must be >= 0");
  const double x = params.alpha_sq * params.eta * 4.0 * model.zeta / (1.0 - 2.0 * model.zeta);
  const double lambda = model.gamma - std::expm1(-x);
  if (lambda > 1.0) {
    throw DomainError("spurious probability lambda exceeds 1: " + std::to_string(lambda));
  }
  return lambda;
}

/// Spurious counts: n_fil = lambda + (1 - lambda) n_fil0/N, n_err = lambda/2.
inline Tallies curve_A_tallies(double lambda, const ProtocolParams& params) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw DomainError("lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  const double f0 = no_attack_acceptance(params);
  return {lambda + (1.0 - lambda) * f0, 0.5 * lambda, TallySource::model_A};
}

/// Phase misalignment: Bob receives |sqrt(eta) alpha e^{i dphi}> against the
/// matched LO. Error = conclusive outcome opposite to Alice's bit.
inline Tallies curve_B_tallies(double delta_phi, const ProtocolParams& params) {
  validate(params);
  if (!std::isfinite(delta_phi)) throw DomainError("delta_phi must be finite");
  const double b2 = params.beta_sq();
  const double half = std::sin(0.5 * delta_phi);
  const double cos_half = std::cos(0.5 * delta_phi);
  // |gamma - beta|^2 = 4 b2 sin^2(dphi/2), |gamma + beta|^2 = 4 b2 cos^2(dphi/2)
  const double p_wrong = -0.5 * std::expm1(-4.0 * b2 * half * half);
  const double p_right = -0.5 * std::expm1(-4.0 * b2 * cos_half * cos_half);
  return {p_right + p_wrong, p_wrong, TallySource::model_B};
}

/// Ideal single-photon BB84 gain eta/2. With dark counts the result is set
/// to zero once the signal counting rate eta falls to gamma (a cutoff
/// approximation, not an exact dark-count analysis).
inline double bb84_ideal_reference(double eta, double gamma = 0.0) {
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("eta must lie in (0, 1]");
  if (gamma > 0.0 && eta <= gamma) return 0.0;
  return 0.5 * eta;
}

// ---------------------------------------------------------------------------
// Security region

struct RegionGrid {
  int columns = 200;
  int rows = 200;
  double x_max = 2.0;   // n_fil / n_fil0
  double y_max = 0.15;  // n_err / n_fil
  double rel_tol = 1e-4;
  int threads = 1;
  BoundSolverConfig solver;
};

/// Sign change of G along one column. `entering` means G becomes positive
/// when y increases through the point.
struct RegionCrossing {
  double y = 0.0;
  bool entering = false;
};

struct RegionColumn {
  double x = 0.0;
  std::vector<RegionCrossing> crossings;
  bool positive_at_top = false;
};

struct TracePoint {
  double x = 0.0;  // n_fil / n_fil0
  double y = 0.0;  // n_err / n_fil
  double gain = 0.0;
};

struct SecurityRegion {
  ProtocolParams params;
  double n_fil0_frac = 0.0;
  std::vector<RegionColumn> columns;
  std::vector<TracePoint> curve_a;
  std::vector<TracePoint> curve_b;
  double max_err_rate = 0.0;           // largest y with G > 0 over the scanned window
  double curve_a_tolerable_rate = 0.0; // error rate where curve A leaves the region

  /// Boundary as a closed polyline: lower edge left to right, upper edge back.
  std::vector<TracePoint> contour() const {
    std::vector<TracePoint> lower, upper;
    for (const auto& col : columns) {
      for (const auto& c : col.crossings) (c.entering ? lower : upper).push_back({col.x, c.y, 0.0});
    }
    std::reverse(upper.begin(), upper.end());
    lower.insert(lower.end(), upper.begin(), upper.end());
    return lower;
  }

  /// Highest leaving crossing in the column nearest to x, if any.
  std::optional<double> upper_boundary(std::size_t column) const {
    std::optional<double> best;
    for (const auto& c : columns.at(column).crossings) {
      if (!c.entering && (!best || c.y > *best)) best = c.y;
    }
    return best;
  }
  std::optional<double> lower_boundary(std::size_t column) const {
    std::optional<double> best;
    for (const auto& c : columns.at(column).crossings) {
      if (c.entering && (!best || c.y < *best)) best = c.y;
    }
    return best;
  }
};

/// G at normalized coordinates (x = n_fil/n_fil0, y = n_err/n_fil).
inline double region_gain(double x, double y, double n_fil0, const SubspaceConstants& consts,
                          const BoundSolverConfig& cfg) {
  const double n_fil = x * n_fil0;
  if (!(n_fil > 0.0 && n_fil <= 1.0) || y < 0.0 || y > 1.0) return 0.0;
  return gain_or_zero({n_fil, y * n_fil, TallySource::manual}, consts, cfg);
}

/// Largest error rate n_err/n_fil at which curve A still has G > 0
/// (G is nonincreasing along the curve). Zero if G(0) is already zero.
inline double curve_A_tolerable_rate(const ProtocolParams& params, const BoundSolverConfig& cfg = {},
                                     double rel_tol = 1e-6) {
  const auto consts = subspace_constants(params);
  const double f0 = no_attack_acceptance(params);
  auto gain_at_rate = [&](double r) {
    const double lambda = r * f0 / (0.5 - r + r * f0);
    return gain_or_zero(curve_A_tallies(std::min(lambda, 1.0), params), consts, cfg);
  };
  if (gain_at_rate(0.0) <= 0.0) return 0.0;
  const int steps = 500;
  double lo = 0.0, hi = 0.5;
  for (int i = 1; i <= steps; ++i) {
    const double r = 0.5 * i / steps;
    if (gain_at_rate(r) <= 0.0) {
      hi = r;
      break;
    }
    lo = r;
  }
  while (hi - lo > rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (gain_at_rate(mid) > 0.0) lo = mid;
    else hi = mid;
  }
  return lo;
}

/// Traces the G = 0 boundary column by column: sign changes on the row grid
/// are bracketed and refined by bisection. Curve A and B overlays carry G.
inline SecurityRegion security_region(const ProtocolParams& params, const RegionGrid& grid = {}) {
  const auto consts = subspace_constants(params);
  if (grid.columns < 1 || grid.rows < 2) throw DomainError("region grid needs >= 1 column and >= 2 rows");
  SecurityRegion region;
  region.params = params;
  region.n_fil0_frac = no_attack_acceptance(params);
  const double f0 = region.n_fil0_frac;
  if (f0 <= 0.0) throw DomainError("n_fil0 is zero; the region is undefined for alpha_sq = 0");
  const auto& cfg = grid.solver;

  region.columns.resize(static_cast<std::size_t>(grid.columns));
  detail::parallel_for(region.columns.size(), grid.threads, [&](std::size_t i) {
    RegionColumn col;
    col.x = grid.x_max * static_cast<double>(i + 1) / grid.columns;
    auto positive = [&](double y) { return region_gain(col.x, y, f0, consts, cfg) > 0.0; };
    double y_prev = 0.0;
    bool pos_prev = positive(0.0);
    for (int j = 1; j < grid.rows; ++j) {
      const double y = grid.y_max * j / (grid.rows - 1);
      const bool pos = positive(y);
      if (pos != pos_prev) {
        double lo = y_prev, hi = y;
        while (hi - lo > grid.rel_tol * grid.y_max) {
          const double mid = 0.5 * (lo + hi);
          (positive(mid) == pos_prev ? lo : hi) = mid;
        }
        col.crossings.push_back({pos ? hi : lo, pos});
      }
      y_prev = y;
      pos_prev = pos;
    }
    col.positive_at_top = pos_prev;
    region.columns[i] = std::move(col);
  });

  for (const auto& col : region.columns) {
    if (col.positive_at_top) region.max_err_rate = grid.y_max;
    for (const auto& c : col.crossings) {
      if (!c.entering) region.max_err_rate = std::max(region.max_err_rate, c.y);
    }
  }

  const int samples = std::max(grid.rows, 2);
  region.curve_a.resize(static_cast<std::size_t>(samples));
  region.curve_b.resize(static_cast<std::size_t>(samples));
  // Curve A: rate r in [0, y_max] maps to lambda = r f0 / (1/2 - r + r f0).
  // Curve B: rate ~ sin^2(dphi/2), sampled up to the same window.
  const double dphi_max = 2.0 * std::asin(std::sqrt(std::min(grid.y_max, 1.0)));
  detail::parallel_for(static_cast<std::size_t>(samples), grid.threads, [&](std::size_t i) {
    const double u = static_cast<double>(i) / (samples - 1);
    const double r = grid.y_max * u;
    const double lambda = r * f0 / (0.5 - r + r * f0);
    const Tallies ta = curve_A_tallies(std::min(lambda, 1.0), params);
    region.curve_a[i] = {ta.n_fil_frac / f0, ta.n_err_frac / ta.n_fil_frac, gain_or_zero(ta, consts, cfg)};
    const Tallies tb = curve_B_tallies(dphi_max * u, params);
    region.curve_b[i] = {tb.n_fil_frac / f0, tb.n_fil_frac > 0.0 ? tb.n_err_frac / tb.n_fil_frac : 0.0,
                         gain_or_zero(tb, consts, cfg)};
  });
  region.curve_a_tolerable_rate = curve_A_tolerable_rate(params, cfg);
  return region;
}

// ---------------------------------------------------------------------------
// Intensity optimization

struct GainSearch {
  double alpha_sq_min = 1e-6;
  double alpha_sq_max = 10.0;
  int points_per_decade = 20;
  double log_tol = 1e-6;  // golden-section bracket width in log10(alpha^2)
  BoundSolverConfig solver;
};

struct GainTracePoint {
  double alpha_sq = 0.0;
  double gain = 0.0;
  double n_fil_frac = 0.0;
  double n_err_frac = 0.0;
};

struct GainOptimum {
  double eta = 0.0;
  ErrorModel model;
  std::optional<double> alpha_sq_opt;  // empty when G = 0 everywhere
  double gain_opt = 0.0;
  std::optional<KeyRateResult> at_opt;
  std::vector<GainTracePoint> trace;
};

/// Curve-A gain at one intensity; zero when the model leaves its domain or
/// the tallies admit no key.
inline GainTracePoint model_gain(double alpha_sq, double eta, const ErrorModel& model,
                                 const BoundSolverConfig& cfg, KeyRateResult* detail_out = nullptr) {
  const ProtocolParams params{alpha_sq, eta, 1};
  GainTracePoint pt{alpha_sq, 0.0, 0.0, 0.0};
  double lambda = 0.0;
  try {
    lambda = lambda_model(model, params);
  } catch (const DomainError&) {
    return pt;
  }
  const Tallies t = curve_A_tallies(lambda, params);
  pt.n_fil_frac = t.n_fil_frac;
  pt.n_err_frac = t.n_err_frac;
  const auto r = try_key_length(t, subspace_constants(params), cfg);
  if (r) {
    pt.gain = r->gain;
    if (detail_out) *detail_out = *r;
  }
  return pt;
}

/// Maximizes G over alpha^2 under the curve-A spurious-count model: a
/// log-spaced scan followed by golden-section refinement in log alpha^2.
inline GainOptimum optimize_gain(double eta, const ErrorModel& model, const GainSearch& search = {}) {
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("eta must lie in (0, 1]");
  if (!(search.alpha_sq_min > 0.0 && search.alpha_sq_max > search.alpha_sq_min)) {
    throw DomainError("alpha_sq search range must satisfy 0 < min < max");
  }
  GainOptimum out;
  out.eta = eta;
  out.model = model;
  const double l0 = std::log10(search.alpha_sq_min), l1 = std::log10(search.alpha_sq_max);
  const int n = std::max(2, static_cast<int>(std::ceil((l1 - l0) * search.points_per_decade)) + 1);
  out.trace.reserve(static_cast<std::size_t>(n));
  int best = -1;
  for (int i = 0; i < n; ++i) {
    const double a2 = std::pow(10.0, l0 + (l1 - l0) * i / (n - 1));
    out.trace.push_back(model_gain(a2, eta, model, search.solver));
    if (out.trace.back().gain > 0.0 && (best < 0 || out.trace.back().gain > out.trace[best].gain)) best = i;
  }
  if (best < 0) return out;

  const double step = (l1 - l0) / (n - 1);
  const double lo = l0 + step * std::max(best - 1, 0);
  const double hi = l0 + step * std::min(best + 1, n - 1);
  const auto refined = detail::golden_section_minimize(
      [&](double la) { return -model_gain(std::pow(10.0, la), eta, model, search.solver).gain; }, lo, hi,
      search.log_tol);
  double a2 = std::pow(10.0, refined.x);
  double g = -refined.value;
  if (out.trace[best].gain > g) {
    a2 = out.trace[best].alpha_sq;
    g = out.trace[best].gain;
  }
  KeyRateResult detail_at{};
  model_gain(a2, eta, model, search.solver, &detail_at);
  out.alpha_sq_opt = a2;
  out.gain_opt = g;
  out.at_opt = detail_at;
  return out;
}

/// One row of the gain-versus-transmission series.
struct GainCurvePoint {
  double eta = 0.0;
  std::optional<double> alpha_sq_opt;
  double gain = 0.0;
  double reference_gain = 0.0;  // ideal single-photon BB84
};

inline std::vector<GainCurvePoint> gain_vs_eta(const std::vector<double>& etas, const ErrorModel& model,
                                               const GainSearch& search = {}, int threads = 1) {
  std::vector<GainCurvePoint> rows(etas.size());
  detail::parallel_for(etas.size(), threads, [&](std::size_t i) {
    const auto opt = optimize_gain(etas[i], model, search);
    rows[i] = {etas[i], opt.alpha_sq_opt, opt.gain_opt, bb84_ideal_reference(etas[i], model.gamma)};
  });
  return rows;
}

/// n points log-spaced on [lo, hi].
inline std::vector<double> log_space(double lo, double hi, int n) {
  if (!(lo > 0.0 && hi >= lo) || n < 1) throw DomainError("log_space needs 0 < lo <= hi and n >= 1");
  std::vector<double> v(static_cast<std::size_t>(n));
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? lo : std::pow(10.0, a + (b - a) * i / (n - 1));
  return v;
}

}  // namespace refqkd
