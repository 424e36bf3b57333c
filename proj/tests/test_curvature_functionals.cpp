#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace mctest;

namespace {

double tolerance_for(const std::string& name) {
  if (name.rfind("E-PW3-k - sum", 0) == 0) return 1e-10;
  if (name.rfind("E-PW", 0) == 0) return 1e-7;
  return 1e-9;
}

template <int N>
double frame_ricci(const PointGeometry<N>& pg, int a) {
  double s = 0;
  for (int m = 0; m < N; ++m)
    for (int n = 0; n < N; ++n) s += pg.E[a][m] * pg.E[a][n] * pg.curv.ricci[m][n];
  return s;
}

template <int N>
double integrate_S_mix(const Scenario& sc) {
  const MetricField g = sc.field();
  double s = 0;
  for (std::size_t p = 0; p < sc.chart.num_points(); ++p) {
    const auto pg = point_geometry<N>(sc.chart.point(p), g);
    s += mixed_scalar(pg).S_mix * pg.vol_density;
  }
  return s * sc.chart.cell_volume();
}

}  // namespace

TEST(CurvatureFunctionals, FlatProductIsIdenticallyZero) {
  const auto rep = identity_suite(builtin_scenario("flat_product", 6));
  for (std::size_t c = 0; c < rep.names.size(); ++c) EXPECT_LT(rep.summary[c].max_abs, 1e-14) << rep.names[c];
  EXPECT_EQ(rep.min_S_mix, 0.0);
  EXPECT_EQ(rep.max_S_mix, 0.0);
  EXPECT_LT(std::abs(rep.integral), 1e-14);
  for (const auto& [name, v] : rep.tensor_max) EXPECT_LT(v, 1e-14) << name;
}

TEST(CurvatureFunctionals, IdentitiesHoldOnAllBuiltins) {
  for (const char* name : {"multiwarped_diagonal", "nonintegrable_heisenberg", "block_conformal", "warp2d"}) {
    const auto rep = identity_suite(builtin_scenario(name, 8));
    ASSERT_FALSE(rep.names.empty());
    for (std::size_t c = 0; c < rep.names.size(); ++c)
      EXPECT_LT(rep.summary[c].max_abs, tolerance_for(rep.names[c])) << name << ": " << rep.names[c];
  }
}

TEST(CurvatureFunctionals, IdentitiesHoldAwayFromBaseParameters) {
  auto sc = builtin_scenario("multiwarped_diagonal", 8);
  sc.theta = {1.0, 2.0, 0.1, 0.2, 0.15, -0.1};
  const auto rep = identity_suite(sc);
  for (std::size_t c = 0; c < rep.names.size(); ++c)
    EXPECT_LT(rep.summary[c].max_abs, tolerance_for(rep.names[c])) << rep.names[c];
  // nonzero geometry: the check is not vacuous
  EXPECT_GT(rep.max_S_mix - rep.min_S_mix, 0.1);
}

TEST(CurvatureFunctionals, Warp2dMixedCurvatureIsGaussCurvature) {
  const auto sc = builtin_scenario("warp2d", 8);
  const double th = sc.theta[0];
  for (double x : {0.1, 1.2, 2.8, 4.5}) {
    const auto pg = geom<2>(sc, {x, 3.0});
    const double K = th * std::sin(x) / (1 + th * std::sin(x));
    EXPECT_NEAR(mixed_scalar(pg).S_mix, K, 1e-13);
    EXPECT_NEAR(pg.curv.scalar, 2 * K, 1e-13);
  }
}

TEST(CurvatureFunctionals, MultiwarpedClosedForm) {
  const auto sc = builtin_scenario("multiwarped_diagonal", 8);
  for (double x : {0.1, 1.2, 2.8, 4.5}) {
    const auto pg = geom<3>(sc, {x, 0.4, 5.0});
    const auto m = mixed_scalar(pg);
    EXPECT_NEAR(m.S_mix, 2 * std::sin(x) / (2 + std::sin(x)), 1e-13);
    EXPECT_NEAR(m.S_i_perp[0], m.S_mix, 1e-13);
    EXPECT_NEAR(m.S_i_perp[1], m.S_mix, 1e-13);
  }
}

TEST(CurvatureFunctionals, LineFieldMixedCurvatureIsRicci) {
  const auto sc = builtin_scenario("nonintegrable_heisenberg", 8);
  for (const auto& x : sample_points(3)) {
    const auto pg = geom<3>(sc, x);
    const auto m = mixed_scalar(pg);
    for (int i = 0; i < 3; ++i) {
      const double ric = frame_ricci(pg, i);
      EXPECT_NEAR(m.S_i_perp[static_cast<std::size_t>(i)], ric, 1e-12);
      // r_i^perp on the line D_i is Ric(N,N) g_i
      const auto rp = partial_ricci(pg, pg.perp(i));
      EXPECT_NEAR(rp[i][i], ric, 1e-12);
    }
  }
}

TEST(CurvatureFunctionals, LorentzianLineField) {
  const auto sc = scenario_json(R"J({"metric": {"family": "custom", "dims": [1, 2],
      "blocks": [[["-1 - 0.3*sin(y)"]], [["1 + 0.2*cos(x)", "0.1*sin(z)"], ["0.1*sin(z)", "1.4"]]]}, "chart": {"grid": 6}})J");
  for (const auto& x : sample_points(3)) {
    const auto pg = geom<3>(sc, x);
    ASSERT_EQ(pg.eps[0], -1.0);
    const double ric = frame_ricci(pg, 0);
    const auto m = mixed_scalar(pg);
    EXPECT_NEAR(m.S_i_perp[0], pg.eps[0] * ric, 1e-12);
    EXPECT_NEAR(partial_ricci(pg, pg.perp(0))[0][0], ric, 1e-12);
  }
  const auto rep = identity_suite(sc);
  for (std::size_t c = 0; c < rep.names.size(); ++c)
    EXPECT_LT(rep.summary[c].max_abs, tolerance_for(rep.names[c])) << rep.names[c];
}

TEST(CurvatureFunctionals, IntegralIdentity) {
  for (const char* name : {"multiwarped_diagonal", "nonintegrable_heisenberg", "block_conformal"}) {
    const auto [I, norm] = integral_identity(builtin_scenario(name, 16));
    ASSERT_GT(norm, 0.0);
    EXPECT_LT(std::abs(I) / norm, 1e-6) << name;
  }
  // quadrature error of a non-trigonometric metric shrinks with the grid
  const auto [I12, n12] = integral_identity(builtin_scenario("block_conformal", 12));
  const auto [I20, n20] = integral_identity(builtin_scenario("block_conformal", 20));
  EXPECT_LT(std::abs(I20) / n20, 1e-2 * std::abs(I12) / n12);
  const auto [I, norm] = integral_identity(builtin_scenario("warp2d", 64));
  EXPECT_LT(std::abs(I) / norm, 1e-8);
}

TEST(CurvatureFunctionals, GridDoublingConverges) {
  // trigonometric integrands: the rectangle rule is spectrally accurate
  const auto s8 = integrate_S_mix<3>(builtin_scenario("nonintegrable_heisenberg", 8));
  const auto s16 = integrate_S_mix<3>(builtin_scenario("nonintegrable_heisenberg", 16));
  const auto s24 = integrate_S_mix<3>(builtin_scenario("nonintegrable_heisenberg", 24));
  EXPECT_LT(std::abs(s24 - s16), std::max(std::abs(s16 - s8), 1e-12));
  EXPECT_LT(std::abs(s24 - s16), 1e-8 * std::max(1.0, std::abs(s24)));
}

TEST(CurvatureFunctionals, ThreadedRunsAgree) {
  const auto sc = builtin_scenario("block_conformal", 8);
  const auto a = identity_suite(sc, {1, true});
  const auto b = identity_suite(sc, {4, true});
  const auto c = identity_suite(sc, {3, false});
  EXPECT_EQ(a.integral, b.integral);
  EXPECT_EQ(a.integral_norm, b.integral_norm);
  for (std::size_t i = 0; i < a.names.size(); ++i) {
    EXPECT_EQ(a.fields[i], b.fields[i]);
    EXPECT_EQ(a.summary[i].l2, b.summary[i].l2);
    EXPECT_EQ(a.fields[i], c.fields[i]);
  }
  EXPECT_NEAR(a.integral, c.integral, 1e-12 * a.integral_norm);
}
