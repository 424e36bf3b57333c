#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace mctest;

namespace {

constexpr double pi = std::numbers::pi;

Scenario generic_multiwarped(int grid) {
  auto sc = builtin_scenario("multiwarped_diagonal", grid);
  sc.theta = {1.0, 2.0, 0.1, 0.2, 0.15, -0.1};
  return sc;
}

}  // namespace

TEST(Variational, ZeroDirectionHasNoVariation) {
  const auto sc = builtin_scenario("block_conformal", 4);
  const auto fv = family_metric(sc, sc.theta, {0.0, 0.0});
  const auto B = variation_tensor<3>(fv, std::vector<double>{0.5, 1.5, 2.5});
  for (const auto& r : B)
    for (double v : r) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(dj_block(sc.family, {0.0, 0.0}), 0);
  EXPECT_THROW(family_metric(sc, sc.theta, {1.0}), InadmissibleTheta);
}

TEST(Variational, ConformalBlockScalingGivesTwiceTheBlockMetric) {
  const auto sc = builtin_scenario("block_conformal", 4);
  for (int j = 0; j < 2; ++j) {
    std::vector<double> dir = {0.0, 0.0};
    dir[static_cast<std::size_t>(j)] = 1.0;
    EXPECT_EQ(dj_block(sc.family, dir), j);
    for (const auto& x : sample_points(3)) {
      const auto pg = geom<3>(sc, x, &dir);
      ASSERT_TRUE(pg.has_variation);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          const double want = (a == b && pg.frame.block_of[a] == j) ? 2.0 * pg.eps[a] : 0.0;
          EXPECT_NEAR(pg.B[a][b].v, want, 1e-13);
        }
    }
  }
}

TEST(Variational, VariationTensorMatchesFiniteDifferences) {
  const auto sc = generic_multiwarped(4);
  const std::vector<double> dir = {0.3, 0.5, 0.0, 1.0, -0.7, 0.4};
  const auto fv = family_metric(sc, sc.theta, dir);
  auto shifted = [&](double t) {
    auto th = sc.theta;
    for (std::size_t m = 0; m < th.size(); ++m) th[m] += t * dir[m];
    return th;
  };
  // Richardson-extrapolated central differences, O(h^4)
  auto fd = [&](const std::vector<double>& x, double h) {
    const auto p = sc.field(shifted(h)).values<3>(x), m = sc.field(shifted(-h)).values<3>(x);
    Mat<double, 3> d{};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) d[a][b] = (p[a][b] - m[a][b]) / (2 * h);
    return d;
  };
  for (const auto& x : sample_points(3)) {
    const auto B = variation_tensor<3>(fv, x);
    const auto d1 = fd(x, 1e-3), d2 = fd(x, 5e-4);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) EXPECT_NEAR(B[a][b], (4 * d2[a][b] - d1[a][b]) / 3, 1e-8);
  }
}

TEST(Variational, DirectionsMovingTwoBlocksAreRejected) {
  const auto sc = generic_multiwarped(4);
  EXPECT_EQ(dj_block(sc.family, {0, 0, 1, 0, 0, 0}), 0);
  EXPECT_EQ(dj_block(sc.family, {1, 0, 0, 0, 0, 0}), 1);
  EXPECT_THROW(dj_block(sc.family, {1, 0, 1, 0, 0, 0}), NotDjVariation);
  EXPECT_THROW(variation_suite(sc, {0, 1, 1, 0, 0, 0}), NotDjVariation);
}

TEST(Variational, ActionValues) {
  const auto flat = builtin_scenario("flat_product", 6);
  EXPECT_EQ(action_value(flat).value, 0.0);
  ActionConfig cfg;
  cfg.Lambda = 0.5;
  cfg.coupling = 2.0;
  const auto a = action_value(flat, cfg, flat.theta);
  EXPECT_NEAR(a.volume, 8 * pi * pi * pi, 1e-10);
  EXPECT_NEAR(a.value, -(cfg.Lambda / cfg.coupling) * a.volume, 1e-10);

  // dx^2 + f^2 (dy^2 + dz^2), f = 2 + sin x: S_mix = -2 f''/f, S = -4 f''/f - 2 (f'/f)^2
  const auto mw = builtin_scenario("multiwarped_diagonal", 16);
  const auto b = action_value(mw);
  EXPECT_NEAR(b.volume, 36 * pi * pi * pi, 1e-9);
  EXPECT_NEAR(b.total_mixed, 8 * pi * pi * pi, 1e-9);
  EXPECT_NEAR(b.total_scalar, 8 * pi * pi * pi, 1e-9);
  EXPECT_NEAR(b.value, b.total_mixed / 2, 1e-9);
  ActionConfig pert;
  pert.perturbed = true;
  pert.epsilon = 0.25;
  EXPECT_NEAR(action_value(mw, pert, mw.theta).value, (b.total_scalar + 0.25 * b.total_mixed) / 2, 1e-9);
}

TEST(Variational, FrameEvolutionIsSecondOrder) {
  for (const auto& [name, dir] : {std::pair<const char*, std::vector<double>>{"block_conformal", {0.0, 1.0}},
                                  {"nonintegrable_heisenberg", {0.0, 1.0, 0.0}}}) {
    const auto sc = builtin_scenario(name, 6);
    const double e1 = frame_evolution_check(sc, dir, 1e-3);
    const double e2 = frame_evolution_check(sc, dir, 5e-4);
    EXPECT_LT(e1, 5e-6) << name;
    EXPECT_GT(e1 / e2, 3.5) << name;
    EXPECT_LT(e1 / e2, 4.5) << name;
  }
}

TEST(Variational, PointwiseVariationFormulas) {
  struct Case {
    Scenario sc;
    std::vector<double> dir;
  };
  std::vector<Case> cases;
  cases.push_back({generic_multiwarped(6), {0, 0, 1, 0, 0, 0}});
  cases.push_back({generic_multiwarped(6), {0.3, 0.5, 0, 1, -0.7, 0.4}});
  cases.push_back({builtin_scenario("nonintegrable_heisenberg", 6), {0, 1, 0}});
  cases.push_back({builtin_scenario("block_conformal", 6), {1, 0}});
  for (const auto& c : cases) {
    const auto rep = variation_suite(c.sc, c.dir);
    ASSERT_FALSE(rep.checks.empty());
    for (const auto& ch : rep.checks) {
      EXPECT_TRUE(ch.oracle_ok) << c.sc.name << ": " << ch.name;
      EXPECT_LT(ch.rel_error, 1e-5) << c.sc.name << ": " << ch.name;
      // truncation-dominated: Richardson estimate tracks the error
      EXPECT_LT(ch.richardson_gap, 2e-5) << c.sc.name << ": " << ch.name;
    }
  }
}

TEST(Variational, FirstVariationFormula) {
  const auto sc = generic_multiwarped(10);
  for (const auto& dir : random_directions(sc, 3)) {
    const auto r = first_variation_identity(sc, dir, 1e-3);
    EXPECT_LT(r.rel_error, 1e-4);
    EXPECT_LT(r.divergence_shift, 1e-6);
    EXPECT_GT(std::abs(r.lhs), 1e-3);
  }
  const auto h = builtin_scenario("nonintegrable_heisenberg", 10);
  for (const auto& dir : random_directions(h, 2)) {
    const auto r = first_variation_identity(h, dir, 1e-3);
    EXPECT_LT(r.rel_error, 1e-4);
    EXPECT_LT(r.divergence_shift, 1e-6);
  }
}

TEST(Variational, RandomDirectionsAreReproducible) {
  const auto sc = generic_multiwarped(4);
  const auto a = random_directions(sc, 4), b = random_directions(sc, 4);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 4u);
  for (const auto& d : a) {
    ASSERT_EQ(d.size(), sc.family.num_params());
    double n = 0;
    for (double v : d) n += v * v;
    EXPECT_NEAR(n, 1.0, 1e-14);
  }
  auto other = sc;
  other.seed += 1;
  EXPECT_NE(random_directions(other, 4), a);
}

TEST(Variational, EulerLagrangeResidual) {
  const auto flat = el_residual(builtin_scenario("flat_product", 4), ELMode::free);
  for (double r : flat.residual_max) EXPECT_LT(r, 1e-14);
  for (double r : flat.discrepancy_max) EXPECT_LT(r, 1e-14);

  const auto h = el_residual(builtin_scenario("nonintegrable_heisenberg", 6), ELMode::free);
  ASSERT_EQ(h.discrepancy_max.size(), 3u);
  for (double d : h.discrepancy_max) EXPECT_LT(d, 1e-8);
  // a generic metric is not critical
  double worst = 0;
  for (double r : h.residual_max) worst = std::max(worst, r);
  EXPECT_GT(worst, 1e-3);

  const auto v = el_residual(builtin_scenario("block_conformal", 6), ELMode::volume_preserving);
  ASSERT_EQ(v.lambda.size(), 2u);
  for (double d : v.discrepancy_max) EXPECT_LT(d, 1e-8);
}

TEST(Variational, EinsteinOnFlatTorus) {
  const auto sc = builtin_scenario("flat_product", 4);
  ActionConfig cfg;
  EXPECT_LT(assemble_einstein(sc, cfg, ELMode::free).einstein_max, 1e-14);
  cfg.Lambda = 0.3;
  const auto r = assemble_einstein(sc, cfg, ELMode::free);
  ASSERT_TRUE(r.has_einstein);
  EXPECT_NEAR(r.einstein_max, 0.3, 1e-14);
  EXPECT_LT(r.mu_system_residual, 1e-12);
}

TEST(Variational, OptimizerAtCriticalPoints) {
  const auto flat = builtin_scenario("flat_product", 4);
  const auto r = optimize(flat, flat.action);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_LT(r.grad_norm, 1e-10);

  auto w = builtin_scenario("warp2d", 32);
  const auto s = optimize(w, w.action);
  EXPECT_TRUE(s.converged);
  EXPECT_LT(s.grad_norm, 1e-6);
  EXPECT_LT(s.grad_norm_recheck, 1e-6);
  EXPECT_LE(s.evaluations, 200);
}

TEST(Variational, OptimizerReportsNonConvergence) {
  auto sc = builtin_scenario("multiwarped_diagonal", 6);
  sc.theta = {1.0, 2.0, 0.1, 0.2, 0.15, -0.1};
  ActionConfig cfg;
  cfg.Lambda = 0.2;
  OptimizeOptions opt;
  opt.max_evals = 15;
  const auto r = optimize(sc, cfg, opt);
  EXPECT_FALSE(r.converged);
  EXPECT_GT(r.grad_norm, opt.grad_tol);
  EXPECT_LE(r.evaluations, opt.max_evals + 2 * static_cast<int>(sc.family.num_params()) * 2);
}
