#pragma once

// JSON and CSV output. Floating-point values are written with 12
// significant digits.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "refqkd/fock_verify.hpp"
#include "refqkd/key_rate.hpp"
#include "refqkd/protocol_sim.hpp"

namespace refqkd {

inline constexpr int kOutputDigits = 12;

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", kOutputDigits, x);
  return buf;
}

/// x rounded to 12 significant digits, so JSON dumps stay short and stable.
inline double round_sig(double x) {
  if (!std::isfinite(x) || x == 0.0) return x;
  return std::strtod(format_number(x).c_str(), nullptr);
}

inline nlohmann::json num(double x) {
  if (!std::isfinite(x)) return nullptr;
  return round_sig(x);
}

inline nlohmann::json opt_num(const std::optional<double>& x) { return x ? num(*x) : nlohmann::json(nullptr); }

inline void to_json(nlohmann::json& j, const VerificationReport& r) {
  j = {{"beta_sq", num(r.beta_sq)},
       {"n_max", r.n_max},
       {"tolerance", num(r.tolerance)},
       {"tail_mass", num(r.tail_mass)},
       {"dev_kraus_k0", num(r.dev_kraus_k0)},
       {"dev_kraus_k1", num(r.dev_kraus_k1)},
       {"dev_completeness", num(r.dev_completeness)},
       {"min_eigenvalue_F0", num(r.min_eigenvalue_F0)},
       {"min_eigenvalue_F1", num(r.min_eigenvalue_F1)},
       {"min_eigenvalue_F2", num(r.min_eigenvalue_F2)},
       {"max_eigenvalue_filter", num(r.max_eigenvalue_filter)},
       {"dev_filter_spectrum", num(r.dev_filter_spectrum)},
       {"dev_orthonormality", num(r.dev_orthonormality)},
       {"dev_overlap", num(r.dev_overlap)},
       {"pass", r.pass}};
}

inline void to_json(nlohmann::json& j, const Tallies& t) {
  j = {{"n_fil_frac", num(t.n_fil_frac)}, {"n_err_frac", num(t.n_err_frac)}, {"source", to_string(t.source)}};
}

inline void to_json(nlohmann::json& j, const KeyRateResult& r) {
  j = {{"tallies", r.tallies},
       {"n_ph_bound_frac", num(r.n_ph_bound_frac)},
       {"raw_key_frac", num(r.raw_key_frac)},
       {"key_frac", num(r.key_frac)},
       {"gain", num(r.gain)},
       {"bit_entropy", num(r.bit_entropy)},
       {"phase_entropy", num(r.phase_entropy)},
       {"shortening", num(r.shortening())},
       {"conditions", {{"nonnegative", r.nonnegative}, {"phase_condition", r.phase_condition}}},
       {"degenerate", r.degenerate}};
}

inline void to_json(nlohmann::json& j, const SimResult& r) {
  nlohmann::json hist = nlohmann::json::array();
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int k = 0; k < 3; ++k) {
        hist.push_back({{"alice", a}, {"bob", b}, {"outcome", k}, {"count", r.histogram[histogram_index(a, b, k)]}});
      }
    }
  }
  j = {{"total_pairs", r.total_pairs},
       {"n_pairs", r.n_pairs},
       {"n_conclusive_check", r.n_conclusive_check},
       {"n_err", r.n_err},
       {"n_fil", r.n_fil},
       {"fil_frac", num(r.fil_frac)},
       {"err_frac", num(r.err_frac)},
       {"check_conclusive_frac", num(r.check_conclusive_frac)},
       {"rng_seed", r.rng_seed},
       {"histogram", hist}};
}

inline void to_json(nlohmann::json& j, const GainCurvePoint& p) {
  j = {{"eta", num(p.eta)},
       {"alpha_sq_opt", opt_num(p.alpha_sq_opt)},
       {"gain", num(p.gain)},
       {"reference_gain", num(p.reference_gain)}};
}

inline void to_json(nlohmann::json& j, const ErrorModel& m) {
  j = {{"gamma", num(m.gamma)}, {"zeta", num(m.zeta)}, {"delta_phi", num(m.delta_phi)}};
}

inline void to_json(nlohmann::json& j, const GainOptimum& g) {
  j = {{"eta", num(g.eta)},
       {"model", g.model},
       {"alpha_sq_opt", opt_num(g.alpha_sq_opt)},
       {"gain_opt", num(g.gain_opt)},
       {"reference_gain", num(bb84_ideal_reference(g.eta, g.model.gamma))}};
  j["at_opt"] = g.at_opt ? nlohmann::json(*g.at_opt) : nlohmann::json(nullptr);
}

inline nlohmann::json region_summary(const SecurityRegion& r) {
  std::size_t crossings = 0;
  for (const auto& c : r.columns) crossings += c.crossings.size();
  return {{"alpha_sq", num(r.params.alpha_sq)},
          {"eta", num(r.params.eta)},
          {"n_fil0_frac", num(r.n_fil0_frac)},
          {"columns", r.columns.size()},
          {"boundary_points", crossings},
          {"max_err_rate", num(r.max_err_rate)},
          {"curve_a_tolerable_rate", num(r.curve_a_tolerable_rate)}};
}

/// CSV writer: a header row, then one line per row of numbers.
inline void write_csv(std::ostream& os, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_number(row[i]);
    os << '\n';
  }
}

inline std::vector<std::vector<double>> trace_rows(const std::vector<TracePoint>& pts) {
  std::vector<std::vector<double>> rows;
  rows.reserve(pts.size());
  for (const auto& p : pts) rows.push_back({p.x, p.y, p.gain});
  return rows;
}

inline const std::vector<std::string>& region_csv_header() {
  static const std::vector<std::string> h{"n_fil_over_nfil0", "err_rate", "gain"};
  return h;
}

inline const std::vector<std::string>& optimize_csv_header() {
  static const std::vector<std::string> h{"eta", "alpha_sq_opt", "gain", "reference_gain"};
  return h;
}

inline std::vector<std::vector<double>> gain_curve_rows(const std::vector<GainCurvePoint>& pts) {
  std::vector<std::vector<double>> rows;
  rows.reserve(pts.size());
  for (const auto& p : pts) {
    rows.push_back({p.eta, p.alpha_sq_opt.value_or(std::nan("")), p.gain, p.reference_gain});
  }
  return rows;
}

}  // namespace refqkd
