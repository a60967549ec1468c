#pragma once

// Scalar building blocks for coherent states measured against a matched
// local oscillator: overlap constants, POVM outcome probabilities and the
// binary entropy.

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace refqkd {

/// Raised when an argument lies outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Overlap constants of the pair {|x>, |-x>} for a coherent amplitude x.
///
/// t = <-x|x> = exp(-2|x|^2), c^2 = (1 + t)/2 and s^2 = (1 - t)/2. The pair
/// is the X basis of the qubit spanned by the two states.
struct OverlapConstants {
  double amplitude_sq = 0.0;
  double t = 1.0;
  double c_sq = 1.0;
  double s_sq = 0.0;

  double c() const { return std::sqrt(c_sq); }
  double s() const { return std::sqrt(s_sq); }
};

/// Constants for Bob's local oscillator (beta) and Alice's signal (alpha).
struct SubspaceConstants {
  OverlapConstants beta;
  OverlapConstants alpha;
};

/// Physical configuration of one analysis point.
struct ProtocolParams {
  double alpha_sq = 0.0;  // Alice's signal intensity |alpha|^2
  double eta = 1.0;       // channel transmission
  std::int64_t n_pairs = 1;

  /// Bob's LO intensity under the matched convention beta = sqrt(eta) alpha.
  double beta_sq() const { return eta * alpha_sq; }
};

inline void validate(const ProtocolParams& p) {
  if (!std::isfinite(p.alpha_sq) || p.alpha_sq < 0.0) {
    throw DomainError("alpha_sq must be finite and >= 0, got " + std::to_string(p.alpha_sq));
  }
  if (!std::isfinite(p.eta) || p.eta <= 0.0 || p.eta > 1.0) {
    throw DomainError("eta must lie in (0, 1], got " + std::to_string(p.eta));
  }
  if (p.n_pairs < 1) {
    throw DomainError("n_pairs must be positive");
  }
}

/// Overlap constants for one amplitude. s^2 keeps full relative precision for
/// tiny amplitudes (s^2 ~ amplitude_sq as amplitude_sq -> 0).
inline OverlapConstants subspace_constants(double amplitude_sq) {
  if (!std::isfinite(amplitude_sq) || amplitude_sq < 0.0) {
    throw DomainError("amplitude_sq must be finite and >= 0, got " + std::to_string(amplitude_sq));
  }
  OverlapConstants k;
  k.amplitude_sq = amplitude_sq;
  const double one_minus_t = -std::expm1(-2.0 * amplitude_sq);
  k.t = 1.0 - one_minus_t;
  k.s_sq = 0.5 * one_minus_t;
  k.c_sq = 1.0 - k.s_sq;
  return k;
}

inline SubspaceConstants subspace_constants(const ProtocolParams& params) {
  validate(params);
  return {subspace_constants(params.beta_sq()), subspace_constants(params.alpha_sq)};
}

/// h(p) = -p log2 p - (1-p) log2 (1-p), with h(0) = h(1) = 0.
inline double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError("binary_entropy argument must lie in [0, 1], got " + std::to_string(p));
  }
  if (p == 0.0 || p == 1.0) return 0.0;
  return -(p * std::log2(p) + (1.0 - p) * std::log1p(-p) / std::log(2.0));
}

/// Outcome probabilities of Bob's three-outcome POVM.
struct ConclusiveProbs {
  double p0 = 0.0;
  double p1 = 0.0;
  double p2 = 1.0;  // inconclusive
};

/// Outcome probabilities for a coherent input |gamma> against the POVM
/// F_0 = (1 - |-beta><-beta|)/2, F_1 = (1 - |beta><beta|)/2, F_2 = 1 - F_0 - F_1.
inline ConclusiveProbs conclusive_probs(std::complex<double> received, double beta) {
  if (!std::isfinite(received.real()) || !std::isfinite(received.imag())) {
    throw DomainError("received amplitude must be finite");
  }
  if (!std::isfinite(beta) || beta <= 0.0) {
    throw DomainError("beta must be real and positive, got " + std::to_string(beta));
  }
  ConclusiveProbs p;
  p.p0 = -0.5 * std::expm1(-std::norm(received + beta));
  p.p1 = -0.5 * std::expm1(-std::norm(received - beta));
  p.p2 = 1.0 - p.p0 - p.p1;
  return p;
}

/// Per-pair conclusive probability without an eavesdropper,
/// (1 - exp(-4 eta alpha^2))/2 = 2 s_beta^2 c_beta^2. Times N this is n_fil0.
inline double no_attack_acceptance(const ProtocolParams& params) {
  validate(params);
  return -0.5 * std::expm1(-4.0 * params.beta_sq());
}

}  // namespace refqkd
