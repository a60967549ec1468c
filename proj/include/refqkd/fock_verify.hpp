#pragma once

// Truncated single-mode Fock-space representation of Bob's measurement and
// the filter that splits it, plus numerical checks of the operator identities
// relating the two.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "refqkd/coherent_algebra.hpp"

namespace refqkd {

using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

/// The requested truncation drops more Poisson mass than allowed.
class TruncationError : public std::runtime_error {
 public:
  TruncationError(double tail_mass, int n_max)
      : std::runtime_error("Fock truncation n_max=" + std::to_string(n_max) +
                           " drops Poisson tail mass " + std::to_string(tail_mass)),
        tail_mass_(tail_mass) {}
  double tail_mass() const { return tail_mass_; }

 private:
  double tail_mass_;
};

struct FockTolerances {
  double orthonormality = 1e-12;
  double identity = 1e-8;
  double eigenvalue_floor = 1e-10;
  double max_tail_mass = 1e-6;
};

/// Dense representation on occupations 0..n_max. Vectors are renormalized
/// after truncation; the dropped mass is kept in tail_mass.
struct FockRep {
  int n_max = 0;
  double beta = 0.0;
  double tail_mass = 0.0;
  OverlapConstants consts;  // analytic, used for the filter coefficients

  CVector beta_plus;   // |beta>
  CVector beta_minus;  // |-beta>
  CVector zero_x, one_x;
  CVector zero_z, one_z;
  std::vector<CVector> ex_basis;  // orthonormal complement of span{|beta>, |-beta>}

  std::array<CMatrix, 3> povm;  // F_0, F_1, F_2
  std::vector<CMatrix> kraus;   // A_0, A_1, ... (A_j = |0_x><mu_j| for j >= 1)

  Eigen::Index dim() const { return n_max + 1; }
};

struct VerificationReport {
  double beta_sq = 0.0;
  int n_max = 0;
  double tolerance = 0.0;
  double tail_mass = 0.0;
  double dev_kraus_k0 = 0.0;
  double dev_kraus_k1 = 0.0;
  double dev_completeness = 0.0;
  double min_eigenvalue_F0 = 0.0;
  double min_eigenvalue_F1 = 0.0;
  double min_eigenvalue_F2 = 0.0;
  double max_eigenvalue_filter = 0.0;
  double dev_filter_spectrum = 0.0;  // vs {s^2, c^2, 1, ..., 1}
  double dev_orthonormality = 0.0;
  double dev_overlap = 0.0;          // <-beta|beta> vs exp(-2 beta^2)
  bool pass = false;
};

namespace detail {

inline double operator_norm(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(m);
  return svd.singularValues()(0);
}

inline Eigen::VectorXd hermitian_eigenvalues(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline CMatrix projector(const CVector& v) { return v * v.adjoint(); }

// Poisson mass beyond n_max for mean x, summed directly (no 1 - sum cancellation).
inline double poisson_tail(double mean, int n_max) {
  if (mean == 0.0) return 0.0;
  const double log_mean = std::log(mean);
  double tail = 0.0;
  for (int n = n_max + 1;; ++n) {
    const double term = std::exp(-mean + n * log_mean - std::lgamma(n + 1.0));
    tail += term;
    if (n > mean && term <= tail * 1e-17) break;
    if (n > n_max + 100000) break;
  }
  return tail;
}

inline CMatrix kraus_sum_z(const std::vector<CMatrix>& kraus, const CVector& k_z,
                           std::size_t first = 0) {
  const CMatrix pz = projector(k_z);
  CMatrix acc = CMatrix::Zero(k_z.size(), k_z.size());
  for (std::size_t j = first; j < kraus.size(); ++j) {
    acc += kraus[j].adjoint() * pz * kraus[j];
  }
  return acc;
}

inline std::vector<CMatrix> ex_kraus(const CVector& zero_x, const std::vector<CVector>& basis) {
  std::vector<CMatrix> out;
  out.reserve(basis.size());
  for (const auto& mu : basis) out.push_back(zero_x * mu.adjoint());
  return out;
}

}  // namespace detail

/// Builds |beta>, |-beta>, the X/Z bases, an orthonormal basis of the
/// complement H_ex, the POVM and the filter's Kraus operators.
inline FockRep build_fock_rep(double beta, int n_max, const FockTolerances& tol = {}) {
  if (!std::isfinite(beta) || beta <= 0.0) {
    throw DomainError("beta must be real and positive, got " + std::to_string(beta));
  }
  if (n_max < 4) {
    throw DomainError("n_max must be >= 4, got " + std::to_string(n_max));
  }
  const double mean = beta * beta;
  const double tail = detail::poisson_tail(mean, n_max);
  if (tail > tol.max_tail_mass) throw TruncationError(tail, n_max);

  FockRep rep;
  rep.n_max = n_max;
  rep.beta = beta;
  rep.tail_mass = tail;
  rep.consts = subspace_constants(mean);
  const Eigen::Index d = n_max + 1;

  rep.beta_plus.resize(d);
  const double log_beta = std::log(beta);
  for (Eigen::Index n = 0; n < d; ++n) {
    const double amp = std::exp(-0.5 * mean + n * log_beta - 0.5 * std::lgamma(n + 1.0));
    rep.beta_plus(n) = amp;
  }
  rep.beta_plus.normalize();
  rep.beta_minus = rep.beta_plus;
  for (Eigen::Index n = 1; n < d; n += 2) rep.beta_minus(n) = -rep.beta_minus(n);

  // (|beta> +- |-beta>) keeps only the even / odd occupations.
  rep.zero_x = CVector::Zero(d);
  rep.one_x = CVector::Zero(d);
  for (Eigen::Index n = 0; n < d; ++n) {
    (n % 2 == 0 ? rep.zero_x : rep.one_x)(n) = rep.beta_plus(n);
  }
  rep.zero_x.normalize();
  rep.one_x.normalize();
  rep.zero_z = (rep.zero_x + rep.one_x) / std::sqrt(2.0);
  rep.one_z = (rep.zero_x - rep.one_x) / std::sqrt(2.0);

  // Householder QR of [0_x 1_x | I]: the trailing columns of Q span H_ex.
  CMatrix seed(d, d + 2);
  seed.col(0) = rep.zero_x;
  seed.col(1) = rep.one_x;
  seed.rightCols(d) = CMatrix::Identity(d, d);
  Eigen::HouseholderQR<CMatrix> qr(seed);
  const CMatrix q = qr.householderQ() * CMatrix::Identity(d, d);
  rep.ex_basis.reserve(static_cast<std::size_t>(d - 2));
  for (Eigen::Index j = 2; j < d; ++j) rep.ex_basis.push_back(q.col(j));

  const CMatrix id = CMatrix::Identity(d, d);
  rep.povm[0] = 0.5 * (id - detail::projector(rep.beta_minus));
  rep.povm[1] = 0.5 * (id - detail::projector(rep.beta_plus));
  rep.povm[2] = 0.5 * (detail::projector(rep.beta_plus) + detail::projector(rep.beta_minus));

  const double s = rep.consts.s();
  const double c = rep.consts.c();
  rep.kraus.push_back(s * detail::projector(rep.zero_x) + c * detail::projector(rep.one_x));
  for (auto& a : detail::ex_kraus(rep.zero_x, rep.ex_basis)) rep.kraus.push_back(std::move(a));
  return rep;
}

/// Sum_j A_j^dagger A_j.
inline CMatrix filter_operator(const FockRep& rep) {
  CMatrix acc = CMatrix::Zero(rep.dim(), rep.dim());
  for (const auto& a : rep.kraus) acc += a.adjoint() * a;
  return acc;
}

/// Probability that the filter accepts the pure input |psi>.
inline double filter_acceptance(const FockRep& rep, const CVector& psi) {
  double p = 0.0;
  for (const auto& a : rep.kraus) p += (a * psi).squaredNorm();
  return p;
}

/// Largest deviation from orthonormality among {0_x, 1_x, mu_1, ...}.
inline double orthonormality_deviation(const FockRep& rep) {
  std::vector<const CVector*> vs{&rep.zero_x, &rep.one_x};
  for (const auto& mu : rep.ex_basis) vs.push_back(&mu);
  double worst = 0.0;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i; j < vs.size(); ++j) {
      const std::complex<double> ip = vs[i]->dot(*vs[j]);
      worst = std::max(worst, std::abs(ip - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

inline VerificationReport verify_identities(const FockRep& rep, double tol) {
  VerificationReport r;
  r.beta_sq = rep.beta * rep.beta;
  r.n_max = rep.n_max;
  r.tolerance = tol;
  r.tail_mass = rep.tail_mass;

  r.dev_kraus_k0 = detail::operator_norm(rep.povm[0] - detail::kraus_sum_z(rep.kraus, rep.zero_z));
  r.dev_kraus_k1 = detail::operator_norm(rep.povm[1] - detail::kraus_sum_z(rep.kraus, rep.one_z));
  const CMatrix id = CMatrix::Identity(rep.dim(), rep.dim());
  r.dev_completeness = detail::operator_norm(rep.povm[0] + rep.povm[1] + rep.povm[2] - id);

  r.min_eigenvalue_F0 = detail::hermitian_eigenvalues(rep.povm[0]).minCoeff();
  r.min_eigenvalue_F1 = detail::hermitian_eigenvalues(rep.povm[1]).minCoeff();
  r.min_eigenvalue_F2 = detail::hermitian_eigenvalues(rep.povm[2]).minCoeff();

  const Eigen::VectorXd filt = detail::hermitian_eigenvalues(filter_operator(rep));  // ascending
  r.max_eigenvalue_filter = filt.maxCoeff();
  Eigen::VectorXd expected = Eigen::VectorXd::Ones(filt.size());
  expected(0) = std::min(rep.consts.s_sq, rep.consts.c_sq);
  expected(1) = std::max(rep.consts.s_sq, rep.consts.c_sq);
  r.dev_filter_spectrum = (filt - expected).cwiseAbs().maxCoeff();

  r.dev_orthonormality = orthonormality_deviation(rep);
  r.dev_overlap = std::abs(rep.beta_minus.dot(rep.beta_plus) - rep.consts.t);

  r.pass = r.dev_kraus_k0 < tol && r.dev_kraus_k1 < tol && r.dev_completeness < tol &&
           r.min_eigenvalue_F2 > -tol && r.max_eigenvalue_filter < 1.0 + tol;
  return r;
}

/// Operator-norm change of Sum_{j>=1} A_j^dagger |k_z><k_z| A_j (max over k)
/// when the H_ex basis is replaced by mu'_j = Sum_i U_ij mu_i.
inline double ex_basis_rotation_change(const FockRep& rep, const CMatrix& unitary) {
  const auto n = static_cast<Eigen::Index>(rep.ex_basis.size());
  if (unitary.rows() != n || unitary.cols() != n) {
    throw DomainError("unitary must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  std::vector<CVector> rotated(rep.ex_basis.size(), CVector::Zero(rep.dim()));
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      rotated[static_cast<std::size_t>(j)] += unitary(i, j) * rep.ex_basis[static_cast<std::size_t>(i)];
    }
  }
  const auto before = detail::ex_kraus(rep.zero_x, rep.ex_basis);
  const auto after = detail::ex_kraus(rep.zero_x, rotated);
  double worst = 0.0;
  for (const CVector* kz : {&rep.zero_z, &rep.one_z}) {
    worst = std::max(worst, detail::operator_norm(detail::kraus_sum_z(after, *kz) -
                                                  detail::kraus_sum_z(before, *kz)));
  }
  return worst;
}

/// Haar-like random unitary from the QR decomposition of a complex Gaussian matrix.
inline CMatrix random_unitary(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  CMatrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = {normal(gen), normal(gen)};
  }
  Eigen::HouseholderQR<CMatrix> qr(g);
  return qr.householderQ() * CMatrix::Identity(n, n);
}

inline double ex_basis_invariance_check(const FockRep& rep, std::uint64_t seed) {
  return ex_basis_rotation_change(
      rep, random_unitary(static_cast<Eigen::Index>(rep.ex_basis.size()), seed));
}

}  // namespace refqkd
