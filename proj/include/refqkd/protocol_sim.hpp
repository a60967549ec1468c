#pragma once

// Monte Carlo simulation of the prepare-and-measure protocol: Alice sends
// |+-alpha>, the channel attenuates and phase-shifts it, an optional device
// injects orthogonal-mode photons, and Bob measures with a matched LO and a
// threshold detector. 2N pulses are permuted into N check and N data pairs.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "refqkd/coherent_algebra.hpp"
#include "refqkd/detail/counter_rng.hpp"
#include "refqkd/detail/parallel.hpp"
#include "refqkd/key_rate.hpp"

namespace refqkd {

struct ChannelModel {
  double eta = 1.0;            // transmission applied to the signal
  double delta_phi = 0.0;      // systematic phase shift of the signal
  double spurious_prob = 0.0;  // per-pulse probability of a forced click
};

inline void validate(const ChannelModel& ch) {
  if (!(ch.eta >= 0.0 && ch.eta <= 1.0)) throw DomainError("channel eta must lie in [0, 1]");
  if (!(ch.spurious_prob >= 0.0 && ch.spurious_prob <= 1.0)) {
    throw DomainError("spurious_prob must lie in [0, 1]");
  }
  if (!std::isfinite(ch.delta_phi)) throw DomainError("delta_phi must be finite");
}

/// Histogram bin for Alice bit a, Bob bit b and outcome k (2 = inconclusive).
constexpr std::size_t histogram_index(int a, int b, int outcome) {
  return static_cast<std::size_t>(a * 6 + b * 3 + outcome);
}

struct SimResult {
  std::int64_t total_pairs = 0;  // 2N
  std::int64_t n_pairs = 0;      // N
  std::int64_t n_conclusive_check = 0;
  std::int64_t n_err = 0;
  std::int64_t n_fil = 0;
  double fil_frac = 0.0;               // n_fil / N
  double err_frac = 0.0;               // n_err / N
  double check_conclusive_frac = 0.0;  // n_conclusive_check / N
  std::uint64_t rng_seed = 0;
  std::array<std::int64_t, 12> histogram{};

  Tallies tallies() const { return {fil_frac, err_frac, TallySource::simulated}; }
};

namespace detail {

// Click probabilities without spurious photons, indexed [a][b]. Bob's bit b
// nulls |(-1)^(b+1) beta>, i.e. F_0 rejects |-beta> and F_1 rejects |beta>.
inline std::array<std::array<double, 2>, 2> click_table(const ProtocolParams& params, const ChannelModel& ch) {
  const double beta = std::sqrt(params.beta_sq());
  const std::complex<double> rx = std::sqrt(ch.eta * params.alpha_sq) * std::polar(1.0, ch.delta_phi);
  std::array<std::array<double, 2>, 2> q{};
  for (int a = 0; a < 2; ++a) {
    const std::complex<double> gamma = a == 0 ? rx : -rx;
    for (int b = 0; b < 2; ++b) {
      const double nulled = b == 0 ? -beta : beta;
      q[a][b] = -std::expm1(-std::norm(gamma - nulled));
    }
  }
  return q;
}

}  // namespace detail

/// Simulates 2N pulses; deterministic for a given seed and independent of the
/// thread count.
inline SimResult simulate_run(const ProtocolParams& params, const ChannelModel& channel, std::uint64_t seed,
                              int threads = 1) {
  validate(params);
  validate(channel);
  const std::int64_t n = params.n_pairs;
  const std::int64_t total = 2 * n;
  if (total > std::numeric_limits<std::int64_t>::max() / 2) throw DomainError("n_pairs too large");

  const auto q = detail::click_table(params, channel);
  std::vector<std::uint8_t> codes(static_cast<std::size_t>(total));
  constexpr std::int64_t kChunk = 1 << 16;
  const auto chunks = static_cast<std::size_t>((total + kChunk - 1) / kChunk);
  detail::parallel_for(chunks, threads, [&](std::size_t c) {
    const std::int64_t begin = static_cast<std::int64_t>(c) * kChunk;
    const std::int64_t end = std::min(total, begin + kChunk);
    for (std::int64_t i = begin; i < end; ++i) {
      detail::CounterRng rng(seed, static_cast<std::uint64_t>(i));
      const int a = rng.bit() ? 1 : 0;
      const int b = rng.bit() ? 1 : 0;
      const bool spurious = rng.uniform() < channel.spurious_prob;
      const bool signal = rng.uniform() < q[a][b];
      const int outcome = (spurious || signal) ? b : 2;
      codes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(histogram_index(a, b, outcome));
    }
  });

  // Fisher-Yates on its own stream: the first N become check pairs.
  detail::CounterRng perm(seed, std::numeric_limits<std::uint64_t>::max());
  for (std::int64_t i = total - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(perm.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(codes[static_cast<std::size_t>(i)], codes[static_cast<std::size_t>(j)]);
  }

  SimResult r;
  r.total_pairs = total;
  r.n_pairs = n;
  r.rng_seed = seed;
  for (std::int64_t i = 0; i < total; ++i) {
    const std::uint8_t code = codes[static_cast<std::size_t>(i)];
    ++r.histogram[code];
    const int a = code / 6;
    const int outcome = code % 3;
    if (outcome == 2) continue;
    if (i < n) {
      ++r.n_conclusive_check;
      if (outcome != a) ++r.n_err;
    } else {
      ++r.n_fil;
    }
  }
  const auto nd = static_cast<double>(n);
  r.fil_frac = static_cast<double>(r.n_fil) / nd;
  r.err_frac = static_cast<double>(r.n_err) / nd;
  r.check_conclusive_frac = static_cast<double>(r.n_conclusive_check) / nd;
  return r;
}

struct EndToEndOptions {
  // The observed n_fil is allowed to differ from its model value by this
  // many binomial standard errors. No other finite-N terms are added.
  double fil_slack_sigmas = 5.0;
  BoundSolverConfig solver;
  int threads = 1;
};

struct EndToEndResult {
  SimResult sim;
  KeyRateResult key;
};

/// Simulated tallies fed to key_length. Throws InconsistentTallies when the
/// empirical pair is incompatible with every phase-error count.
inline EndToEndResult end_to_end_run(const ProtocolParams& params, const ChannelModel& channel, std::uint64_t seed,
                                     const EndToEndOptions& opts = {}) {
  EndToEndResult out;
  out.sim = simulate_run(params, channel, seed, opts.threads);
  BoundSolverConfig cfg = opts.solver;
  const double f = out.sim.fil_frac;
  cfg.epsilon_slack = opts.fil_slack_sigmas * std::sqrt(f * (1.0 - f) / static_cast<double>(params.n_pairs));
  out.key = key_length(out.sim.tallies(), subspace_constants(params), cfg);
  return out;
}

inline KeyRateResult end_to_end_gain(const ProtocolParams& params, const ChannelModel& channel, std::uint64_t seed,
                                     const EndToEndOptions& opts = {}) {
  return end_to_end_run(params, channel, seed, opts).key;
}

}  // namespace refqkd
