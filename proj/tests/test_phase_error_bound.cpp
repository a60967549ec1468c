#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "refqkd/coherent_algebra.hpp"
#include "refqkd/phase_error_bound.hpp"

using namespace refqkd;

namespace {

struct Point {
  double alpha_sq, eta;
};

oracle::Fractions to_fractions(const ConstraintVars& v) {
  return {v.n_plus, v.n_minus, v.delta_plus, v.delta_minus, v.m0, v.m1};
}

}  // namespace

TEST(GFunction, Endpoints) {
  const auto k = subspace_constants(0.3);
  EXPECT_NEAR(g_function(0.0, k), k.s_sq, 1e-16);
  EXPECT_NEAR(g_function(1.0, k), k.c_sq, 1e-16);
  EXPECT_NEAR(g_function(k.s_sq, k), 0.0, 1e-16);
}

TEST(GFunction, MatchesThreeTermExpansion) {
  for (double b : {1e-4, 0.005, 0.3, 2.0}) {
    const auto k = subspace_constants(b);
    const double c = k.c(), s = k.s();
    for (int i = 0; i <= 1000; ++i) {
      const double d = i / 1000.0;
      const double three = k.c_sq * d + k.s_sq * (1 - d) - 2 * c * s * std::sqrt(d) * std::sqrt(1 - d);
      const double g = g_function(d, k);
      ASSERT_NEAR(g, three, 1e-12);
      ASSERT_GE(g, 0.0);
      ASSERT_LE(g, std::max(k.c_sq, k.s_sq) + 1e-16);
    }
  }
  EXPECT_THROW(g_function(-0.1, subspace_constants(0.1)), DomainError);
  EXPECT_THROW(g_function(1.1, subspace_constants(0.1)), DomainError);
}

TEST(MinErrFixedM, NoAttackPointHasZeroError) {
  for (const auto& [a2, eta] : {Point{0.5, 0.01}, Point{1e-3, 0.01}, Point{0.23, 1e-3}, Point{1.0, 0.5}}) {
    const auto truth = oracle::no_attack_density_matrix(a2, eta);
    EXPECT_NEAR(truth.n_err, 0.0, 1e-14);
    const auto consts = subspace_constants(ProtocolParams{a2, eta, 1});
    const auto sol = min_err_fixed_m(truth.n_fil, truth.n_ph, 0.0, 0.0, consts);
    ASSERT_TRUE(sol.feasible) << a2 << " " << eta;
    EXPECT_LT(sol.min_err, 1e-9);
  }
}

TEST(MinErrFixedM, PhaseAboveFilterIsInfeasible) {
  const auto consts = subspace_constants(ProtocolParams{0.5, 0.01, 1});
  for (double n_fil : {0.001, 0.01, 0.2}) {
    for (double over : {1.01, 1.5, 3.0}) {
      const double n_ph = std::min(1.0, n_fil * over);
      EXPECT_FALSE(min_err_fixed_m(n_fil, n_ph, 0.0, 0.0, consts).feasible);
      EXPECT_FALSE(min_err(n_fil, n_ph, consts).feasible);
    }
  }
}

TEST(MinErrFixedM, FullAcceptanceAgreesWithCubeOracle) {
  // n_fil = 1, n_ph = s_alpha^2: no outcome distribution reaches it.
  for (double a2 : {0.5, 1e-3}) {
    const auto consts = subspace_constants(ProtocolParams{a2, 0.01, 1});
    const auto k = oracle::consts_for(a2, 0.01);
    const auto sol = min_err_fixed_m(1.0, k.s_alpha2, 0.0, 0.0, consts);
    const auto cube = oracle::fixed_m_cube_oracle(1.0, k.s_alpha2, 0.0, 0.0, k, 200, 1.0 / 199);
    EXPECT_FALSE(sol.feasible);
    EXPECT_FALSE(std::isfinite(cube.value));
    EXPECT_GT(cube.min_residual, 0.1);
  }
}

TEST(MinErrFixedM, MatchesGeneratingStateAndCubeOracle) {
  std::mt19937_64 rng(17);
  for (const auto& [a2, eta] : {Point{0.5, 0.01}, Point{0.23, 0.5}, Point{2.0, 0.5}}) {
    const auto consts = subspace_constants(ProtocolParams{a2, eta, 1});
    const auto k = oracle::consts_for(a2, eta);
    for (int i = 0; i < 3; ++i) {
      const auto f = oracle::random_fractions(rng, k, 0.3);
      const double n_fil = oracle::fil_of(f, k), n_ph = oracle::ph_of(f, k);
      const auto sol = min_err_fixed_m(n_fil, n_ph, f.m0, f.m1, consts);
      ASSERT_TRUE(sol.feasible);
      // at fixed m the equalities pin the outcome distribution
      EXPECT_NEAR(sol.min_err, oracle::err_of(f, k), 1e-12);
      const double slack = 3e-3;
      const auto cube = oracle::fixed_m_cube_oracle(n_fil, n_ph, f.m0, f.m1, k, 200, slack);
      if (std::isfinite(cube.value)) {
        EXPECT_LE(sol.min_err, cube.value + 6 * slack);
        EXPECT_GE(sol.min_err, cube.value - 6 * slack);
      }
    }
  }
}

TEST(MinErrFixedM, SolutionSatisfiesEqualities) {
  std::mt19937_64 rng(23);
  for (const auto& [a2, eta] : {Point{0.5, 0.01}, Point{1e-3, 0.01}, Point{2.0, 1.0}}) {
    const auto consts = subspace_constants(ProtocolParams{a2, eta, 1});
    const auto k = oracle::consts_for(a2, eta);
    for (int i = 0; i < 50; ++i) {
      const auto f = oracle::random_fractions(rng, k, 0.05);
      const double n_fil = oracle::fil_of(f, k), n_ph = oracle::ph_of(f, k);
      const auto sol = min_err(n_fil, n_ph, consts);
      ASSERT_TRUE(sol.feasible);
      const auto g = to_fractions(sol.vars);
      EXPECT_NEAR(g.n_plus + g.n_minus + g.m0 + g.m1, 1.0, 1e-12);
      EXPECT_NEAR(oracle::fil_of(g, k), n_fil, 1e-12);
      EXPECT_NEAR(oracle::ph_of(g, k), n_ph, 1e-12);
      EXPECT_NEAR(oracle::marginal_of(g), k.s_alpha2, 1e-12);
      EXPECT_NEAR(oracle::err_of(g, k), sol.min_err, 1e-12);
      // the state that produced the tallies is one candidate
      EXPECT_LE(sol.min_err, oracle::err_of(f, k) + 1e-13);
    }
  }
}

TEST(MinErr, DominatesOrigin) {
  std::mt19937_64 rng(29);
  const auto consts = subspace_constants(ProtocolParams{0.5, 0.01, 1});
  const auto k = oracle::consts_for(0.5, 0.01);
  for (int i = 0; i < 100; ++i) {
    const auto f = oracle::random_fractions(rng, k, 0.05);
    const double n_fil = oracle::fil_of(f, k), n_ph = oracle::ph_of(f, k);
    const auto at0 = min_err_fixed_m(n_fil, n_ph, 0.0, 0.0, consts);
    const auto best = min_err(n_fil, n_ph, consts);
    if (at0.feasible) {
      EXPECT_LE(best.min_err, at0.min_err);
    }
    if (best.origin_optimal) {
      EXPECT_EQ(best.min_err, at0.min_err);
    }
  }
}

// Off-origin optima appear once the tallies are far from the no-attack
// point. A dense (m0, m1) oracle must not beat the engine.
TEST(MinErr, AgreesWithDenseGridOffOrigin) {
  std::mt19937_64 rng(31);
  int off_origin = 0;
  for (const auto& [a2, eta] : {Point{0.5, 0.01}, Point{2.0, 0.3}, Point{1e-3, 0.3}}) {
    const auto consts = subspace_constants(ProtocolParams{a2, eta, 1});
    const auto k = oracle::consts_for(a2, eta);
    for (int i = 0; i < 12; ++i) {
      const auto f = oracle::random_fractions(rng, k, 0.5);
      if (!oracle::physical(f)) continue;
      const double n_fil = oracle::fil_of(f, k), n_ph = oracle::ph_of(f, k);
      const auto sol = min_err(n_fil, n_ph, consts);
      ASSERT_TRUE(sol.feasible);
      if (!sol.origin_optimal) ++off_origin;
      const auto grid = oracle::m_grid_oracle(n_fil, n_ph, k, 150);
      if (std::isfinite(grid.value)) {
        EXPECT_LE(sol.min_err, grid.value + 1e-12);
        EXPECT_GE(sol.min_err, grid.value - std::max(grid.resolution, 2e-3 * n_fil));
      }
      EXPECT_LE(sol.min_err, oracle::err_of(f, k) + 1e-13);
    }
  }
  EXPECT_GT(off_origin, 0);
}

TEST(MinErr, GradientMatchesFiniteDifference) {
  const auto consts = subspace_constants(ProtocolParams{0.5, 0.3, 1});
  std::mt19937_64 rng(37);
  const auto k = oracle::consts_for(0.5, 0.3);
  for (int i = 0; i < 20; ++i) {
    const auto f = oracle::random_fractions(rng, k, 0.2);
    const double n_fil = oracle::fil_of(f, k), n_ph = oracle::ph_of(f, k);
    const double m0 = 0.3 * f.m0 + 1e-3, m1 = 0.3 * f.m1 + 1e-3;
    const auto at = detail::solve_outcomes(n_fil, n_ph, m0, m1, consts);
    if (!(at.p00 > 1e-4 && at.p11 > 1e-4 && at.p10 > 1e-4 && at.p01 > 1e-4)) continue;
    const auto g = detail::err_gradient_m(at, consts);
    const double h = 1e-7;
    const double d0 = (detail::err_at(n_fil, n_ph, m0 + h, m1, consts) - detail::err_at(n_fil, n_ph, m0 - h, m1, consts)) / (2 * h);
    const double d1 = (detail::err_at(n_fil, n_ph, m0, m1 + h, consts) - detail::err_at(n_fil, n_ph, m0, m1 - h, consts)) / (2 * h);
    EXPECT_NEAR(g[0], d0, 1e-5 * std::max(1.0, std::abs(d0)));
    EXPECT_NEAR(g[1], d1, 1e-5 * std::max(1.0, std::abs(d1)));
  }
}

TEST(MinErr, SlopesAreTheLinearPart) {
  const auto consts = subspace_constants(ProtocolParams{0.23, 0.01, 1});
  const auto base = detail::solve_outcomes(0.01, 0.003, 0.001, 0.0005, consts);
  const auto moved = detail::solve_outcomes(0.01 + 0.002, 0.003 - 0.001, 0.001 + 0.0004, 0.0005 + 0.0003, consts);
  const auto d = detail::outcome_slopes(0.002, -0.001, 0.0004, 0.0003, consts);
  const auto b = base.qubit(), m = moved.qubit();
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(m[i] - b[i], d[i], 1e-15);
}

TEST(MinErr, RisingBranchIsMonotone) {
  // min_err is convex in n_ph, hence nondecreasing above its minimizer.
  for (const auto& [a2, eta] : {Point{0.5, 0.01}, Point{1e-3, 0.01}}) {
    const ProtocolParams p{a2, eta, 1};
    const auto consts = subspace_constants(p);
    const double f0 = no_attack_acceptance(p);
    for (double x : {0.8, 1.0, 1.3, 2.0}) {
      const double n_fil = x * f0;
      double prev = -1.0, prev_ph = -1.0;
      bool rising = false;
      for (int i = 0; i <= 400; ++i) {
        const double n_ph = n_fil * i / 400.0;
        const auto s = min_err(n_fil, n_ph, consts);
        if (!s.feasible) continue;
        if (prev >= 0.0 && s.min_err > prev + 1e-15) rising = true;
        if (rising) {
          EXPECT_GE(s.min_err, prev - 1e-13 * n_fil) << "x=" << x << " n_ph=" << n_ph << " prev " << prev_ph;
        }
        prev = s.min_err;
        prev_ph = n_ph;
      }
    }
  }
}

TEST(MinErr, ShorPreskillStyleInequalityAtOrigin) {
  std::mt19937_64 rng(41);
  for (const auto& [a2, eta] : {Point{0.5, 0.01}, Point{1e-3, 0.01}}) {
    const auto consts = subspace_constants(ProtocolParams{a2, eta, 1});
    const auto k = oracle::consts_for(a2, eta);
    const double c = k.c, s = k.s;
    for (int i = 0; i < 50; ++i) {
      const auto f = oracle::random_fractions(rng, k, 0.01);
      const double n_fil = oracle::fil_of(f, k), n_ph = oracle::ph_of(f, k);
      const auto sol = min_err_fixed_m(n_fil, n_ph, 0.0, 0.0, consts);
      if (!sol.feasible) continue;
      const auto& v = sol.vars;
      const double rhs = n_fil - 2 * c * s *
                                     (v.n_plus * std::sqrt(v.delta_plus) * std::sqrt(1 - v.delta_plus) +
                                      v.n_minus * std::sqrt(v.delta_minus) * std::sqrt(1 - v.delta_minus));
      EXPECT_GE(2 * sol.min_err, rhs - 1e-14);
    }
  }
}

TEST(MinErr, ScaleConsistencyWithCounts) {
  // Counts divided by N reproduce the same fractions, and the engine sees
  // only fractions.
  const auto consts = subspace_constants(ProtocolParams{0.5, 0.01, 1});
  const long n = 1000000;
  const long fil = 10234, ph = 3400;
  const auto a = min_err(static_cast<double>(fil) / n, static_cast<double>(ph) / n, consts);
  const auto b = min_err(static_cast<double>(2 * fil) / (2 * n), static_cast<double>(2 * ph) / (2 * n), consts);
  EXPECT_EQ(a.min_err, b.min_err);
  EXPECT_NEAR(a.min_err * n, b.min_err * n, 1e-12 * n);
}

TEST(PhaseErrorBound, InversionRoundTrip) {
  for (const auto& [a2, eta] : {Point{0.5, 0.01}, Point{1e-3, 0.01}, Point{0.23, 1e-3}}) {
    const ProtocolParams p{a2, eta, 1};
    const auto consts = subspace_constants(p);
    const double f0 = no_attack_acceptance(p);
    BoundSolverConfig cfg;
    for (double x : {0.9, 1.0, 1.2, 1.6}) {
      const double n_fil = x * f0;
      for (double frac : {0.2, 0.35, 0.5, 0.7, 0.9}) {
        const double n_ph = frac * n_fil;
        const auto s = min_err(n_fil, n_ph, consts);
        if (!s.feasible) continue;
        const auto bound = try_phase_error_bound(n_fil, s.min_err, consts, cfg);
        ASSERT_TRUE(bound.has_value());
        EXPECT_GE(*bound, n_ph - cfg.ph_tolerance * n_fil) << a2 << " x=" << x << " frac=" << frac;
        EXPECT_LE(*bound, n_fil);
      }
    }
  }
}

TEST(PhaseErrorBound, ExactInverseOnRisingBranch) {
  const ProtocolParams p{0.5, 0.01, 1};
  const auto consts = subspace_constants(p);
  const double n_fil = no_attack_acceptance(p) * 1.1;
  // pick n_ph well above the minimizer of min_err
  const double n_ph = 0.6 * n_fil;
  const auto s = min_err(n_fil, n_ph, consts);
  ASSERT_TRUE(s.feasible);
  ASSERT_GT(s.min_err, min_err(n_fil, 0.5 * n_fil, consts).min_err);
  const double bound = phase_error_bound(n_fil, s.min_err, consts);
  EXPECT_NEAR(bound, n_ph, 1e-8 * n_fil);
}

TEST(PhaseErrorBound, NeverExceedsFilter) {
  const ProtocolParams p{1e-3, 0.01, 1};
  const auto consts = subspace_constants(p);
  const double f0 = no_attack_acceptance(p);
  for (double x : {0.7, 1.0, 1.5, 2.0}) {
    for (double y : {0.0, 0.02, 0.08, 0.2, 0.5}) {
      const auto b = try_phase_error_bound(x * f0, y * x * f0, consts);
      if (b) {
        EXPECT_LE(*b, x * f0);
        EXPECT_GE(*b, 0.0);
      }
    }
  }
}

TEST(PhaseErrorBound, NoAttackTallies) {
  for (const auto& [a2, eta] : {Point{0.5, 0.01}, Point{0.23, 1e-3}}) {
    const ProtocolParams p{a2, eta, 1};
    const auto consts = subspace_constants(p);
    const auto truth = oracle::no_attack_density_matrix(a2, eta);
    const double bound = phase_error_bound(no_attack_acceptance(p), 0.0, consts);
    EXPECT_GE(bound, truth.n_ph - 1e-9 * truth.n_fil);
    EXPECT_LT(2 * bound, truth.n_fil);
  }
}

TEST(PhaseErrorBound, InconsistentTalliesThrow) {
  const ProtocolParams p{0.5, 0.01, 1};
  const auto consts = subspace_constants(p);
  const double f0 = no_attack_acceptance(p);
  // zero errors force n_fil = n_fil0 exactly
  EXPECT_THROW(phase_error_bound(0.5 * f0, 0.0, consts), InconsistentTallies);
  EXPECT_THROW(phase_error_bound(1.5 * f0, 0.0, consts), InconsistentTallies);
  EXPECT_FALSE(try_phase_error_bound(0.5 * f0, 0.0, consts).has_value());
  EXPECT_NO_THROW(phase_error_bound(f0, 0.0, consts));
}

TEST(PhaseErrorBound, DomainAndDegenerateInputs) {
  const auto consts = subspace_constants(ProtocolParams{0.5, 0.01, 1});
  EXPECT_THROW(phase_error_bound(0.01, 0.02, consts), DomainError);
  EXPECT_THROW(phase_error_bound(-0.01, 0.0, consts), DomainError);
  EXPECT_THROW(phase_error_bound(1.01, 0.0, consts), DomainError);
  EXPECT_EQ(phase_error_bound(0.0, 0.0, consts), 0.0);
  BoundSolverConfig bad;
  bad.epsilon_slack = -1.0;
  EXPECT_THROW(phase_error_bound(0.01, 0.0, consts, bad), DomainError);
}

TEST(PhaseErrorBound, SlackOnlyLoosens) {
  const ProtocolParams p{0.5, 0.01, 1};
  const auto consts = subspace_constants(p);
  const double f0 = no_attack_acceptance(p);
  const double n_fil = 1.05 * f0, n_err = 0.003 * n_fil;
  double prev = phase_error_bound(n_fil, n_err, consts);
  for (double eps : {1e-6, 1e-5, 1e-4}) {
    BoundSolverConfig cfg;
    cfg.epsilon_slack = eps;
    const double b = phase_error_bound(n_fil, n_err, consts, cfg);
    EXPECT_GE(b, prev - 1e-9 * n_fil);
    prev = b;
  }
  // zero errors with a mismatched n_fil become consistent under slack
  BoundSolverConfig cfg;
  cfg.epsilon_slack = 0.2 * f0;
  EXPECT_TRUE(try_phase_error_bound(1.1 * f0, 0.0, consts, cfg).has_value());
}

TEST(PhaseErrorBound, CoarseMonotonicityScanGivesSameAnswer) {
  const ProtocolParams p{1e-3, 0.01, 1};
  const auto consts = subspace_constants(p);
  const double f0 = no_attack_acceptance(p);
  BoundSolverConfig coarse;
  coarse.monotonicity_scan = 2;
  for (double y : {0.01, 0.04, 0.07}) {
    const double a = phase_error_bound(1.2 * f0, y * 1.2 * f0, consts);
    const double b = phase_error_bound(1.2 * f0, y * 1.2 * f0, consts, coarse);
    EXPECT_NEAR(a, b, 2e-9 * f0);
  }
}
