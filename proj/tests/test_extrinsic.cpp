#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace mctest;

namespace {

template <int N>
using CoordField = std::function<std::array<Jet1<N>, N>(const std::array<Jet1<N>, N>&)>;

// Frame components (with partials) of a coordinate vector field.
template <int N>
FrameVec<N> field_at(const Scenario& sc, const PointGeometry<N>& pg, const CoordField<N>& F) {
  const MetricField g = sc.field();
  std::array<double, N> x = pg.x;
  const auto mj = g.jets<N>(x);
  std::array<Jet1<N>, N> xj;
  for (int i = 0; i < N; ++i) xj[i] = Jet1<N>::variable(x[i], i);
  return frame_components(pg, mj, F(xj));
}

template <int N>
double max_abs(const Mat<double, N>& m) {
  double s = 0;
  for (const auto& r : m)
    for (double v : r) s = std::max(s, std::abs(v));
  return s;
}

}  // namespace

TEST(Extrinsic, FlatProductHasNoExtrinsicGeometry) {
  const auto sc = builtin_scenario("flat_product", 4);
  for (const auto& x : sample_points(3)) {
    const auto pg = geom<3>(sc, x);
    for (int i = 0; i < 3; ++i) {
      const auto f = fundamental_forms(pg, pg.block(i));
      const auto q = quadratic_invariants(pg, f, pg.block(i));
      EXPECT_EQ(q.h_sq, 0.0);
      EXPECT_EQ(q.T_sq, 0.0);
      EXPECT_EQ(q.h_perp_sq, 0.0);
      EXPECT_EQ(q.T_perp_sq, 0.0);
      EXPECT_EQ(q.H_sq, 0.0);
    }
  }
}

TEST(Extrinsic, Warp2dMeanCurvatures) {
  const auto sc = builtin_scenario("warp2d", 8);
  const double th = sc.theta[0];
  for (double x : {0.2, 1.3, 3.9, 5.5}) {
    const auto pg = geom<2>(sc, {x, 0.7});
    const auto f = fundamental_forms(pg, pg.block(0));
    const double w = 1 + th * std::sin(x);
    // x-lines are geodesics, y-lines have curvature -f'/f along d_x
    EXPECT_NEAR(f.H[0].v, 0.0, 1e-14);
    EXPECT_NEAR(f.H[1].v, 0.0, 1e-14);
    EXPECT_NEAR(f.H_perp[0].v, -th * std::cos(x) / w, 1e-13);
    EXPECT_NEAR(f.H_perp[1].v, 0.0, 1e-14);
    // E_1-derivative of H_perp is available through the jet
    const double dfw = (-th * -std::sin(x) * w + th * std::cos(x) * th * std::cos(x)) / (w * w);
    EXPECT_NEAR(pg.along(f.H_perp[0], 0), dfw, 1e-12);
  }
}

TEST(Extrinsic, CoordinateSplittingsAreIntegrable) {
  const auto sc = builtin_scenario("multiwarped_diagonal", 8);
  auto th = sc.theta;
  th[2] = 0.2, th[3] = 0.1, th[4] = -0.15, th[5] = 0.05;
  const MetricField g = sc.field(th);
  for (const auto& x : sample_points(3)) {
    const auto pg = point_geometry<3>(x, g);
    for (int i = 0; i < 2; ++i) {
      const auto q = quadratic_invariants(pg, fundamental_forms(pg, pg.block(i)), pg.block(i));
      EXPECT_NEAR(q.T_sq, 0.0, 1e-24);
      EXPECT_NEAR(q.T_perp_sq, 0.0, 1e-24);
    }
  }
}

TEST(Extrinsic, HeisenbergIsNonIntegrable) {
  const auto sc = builtin_scenario("nonintegrable_heisenberg", 8);
  for (const auto& x : sample_points(3)) {
    const auto pg = geom<3>(sc, x);
    // D_1 + D_2 = span{d_x, d_y + cos x d_z}: bracket has a d_z part whenever sin x != 0
    Mask<3> D12 = {true, true, false};
    const auto q = quadratic_invariants(pg, fundamental_forms(pg, D12), D12);
    EXPECT_GT(q.T_sq, 1e-3) << x[0];
    // the complement of a line field is the sum of two lines
    const auto q1 = quadratic_invariants(pg, fundamental_forms(pg, pg.block(2)), pg.block(2));
    EXPECT_NEAR(q1.T_perp_sq, q.T_sq, 1e-12);
  }
}

TEST(Extrinsic, ShapeOperatorsSymmetry) {
  const auto sc = builtin_scenario("block_conformal", 8);
  const auto pg = geom<3>(sc, {0.9, 2.1, 4.0});
  const auto D = pg.perp(1);  // the 2-dimensional block, complement of block 1
  const auto f = fundamental_forms(pg, pg.block(0));
  const auto h = values(f.h), T = values(f.T);
  const auto [A, Ts] = shape_operators(pg, h, T, pg.block(0), Vec<double, 3>{0, 0, 1.7});
  const auto Af = flat(pg, A), Tf = flat(pg, Ts);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      if (!D[a] || !D[b]) continue;
      EXPECT_NEAR(Af[a][b], Af[b][a], 1e-13);
      EXPECT_NEAR(Tf[a][b], -Tf[b][a], 1e-13);
    }
  EXPECT_GT(max_abs<3>(Tf), 1e-3);
  EXPECT_THROW(shape_operators(pg, h, T, pg.block(0), Vec<double, 3>{0.1, 0, 1}), NotInComplement);
}

TEST(Extrinsic, UpsilonDuality) {
  const auto sc = builtin_scenario("nonintegrable_heisenberg", 8);
  const auto pg = geom<3>(sc, {1.0, 2.0, 0.5});
  const Mask<3> D = {true, true, false};
  const auto f = fundamental_forms(pg, D);
  const auto h = values(f.h), T = values(f.T), hp = values(f.h_perp);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    Mat<double, 3> S{};
    for (int a = 0; a < 3; ++a)
      for (int b = a; b < 3; ++b) S[a][b] = S[b][a] = u(rng);
    for (const auto& [q1, q2] : {std::pair{h, T}, std::pair{h, h}, std::pair{T, hp}}) {
      const double lhs = dot(pg, upsilon(pg, q1, q2), S);
      double rhs = 0;
      for (int l = 0; l < 3; ++l)
        for (int m = 0; m < 3; ++m)
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) rhs += 2 * pg.eps[l] * pg.eps[m] * S[a][b] * q1[a][l][m] * q2[b][l][m];
      EXPECT_NEAR(lhs, rhs, 1e-12);
    }
  }
  // Riemannian: Upsilon_{h,h} is positive semidefinite and its trace is 2 <h,h>
  const auto Uh = upsilon(pg, h, h);
  EXPECT_NEAR(trace(pg, Uh), 2 * norm_sq(pg, h), 1e-12);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec<double, 3> X = {u(rng), u(rng), u(rng)};
    double s = 0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) s += Uh[a][b] * X[a] * X[b];
    EXPECT_GE(s, -1e-14);
  }
}

TEST(Extrinsic, DeformationTraceIsPartialDivergence) {
  const auto sc = builtin_scenario("block_conformal", 8);
  const CoordField<3> Z = [](const auto& x) {
    return std::array<Jet1<3>, 3>{sin(x[1]) * cos(x[2]), 0.5 + cos(x[0] + x[2]), sin(x[0]) * sin(x[1])};
  };
  for (const auto& x : sample_points(3)) {
    const auto pg = geom<3>(sc, x);
    const auto z = field_at<3>(sc, pg, Z);
    for (int i = 0; i < 2; ++i) {
      const auto def = deformation(pg, z, pg.block(i));
      EXPECT_NEAR(trace(pg, def), divergence(pg, z, pg.block(i)), 1e-12);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) EXPECT_NEAR(def[a][b], def[b][a], 1e-14);
    }
  }
}

TEST(Extrinsic, DivergenceMatchesCoordinateFormula) {
  for (const char* name : {"nonintegrable_heisenberg", "block_conformal", "multiwarped_diagonal"}) {
    const auto sc = builtin_scenario(name, 8);
    const MetricField g = sc.field();
    auto Xd = [](const std::array<double, 3>& x) {
      return std::array<double, 3>{std::sin(x[1]) + 0.3, std::cos(x[0] * 2) * std::sin(x[2]), std::exp(0.2 * std::sin(x[0] + x[1]))};
    };
    const CoordField<3> X = [](const auto& x) {
      return std::array<Jet1<3>, 3>{sin(x[1]) + 0.3, cos(x[0] * 2.0) * sin(x[2]), exp(0.2 * sin(x[0] + x[1]))};
    };
    auto flux = [&](std::array<double, 3> x, int m) {
      return std::sqrt(std::abs(determinant<double, 3>(g.values<3>(x)))) * Xd(x)[m];
    };
    for (const auto& xv : sample_points(3)) {
      const auto pg = geom<3>(sc, xv);
      const std::array<double, 3> x = {xv[0], xv[1], xv[2]};
      const double h = 1e-5;
      double div = 0;
      for (int m = 0; m < 3; ++m) {
        auto xp = x, xm = x;
        xp[m] += h, xm[m] -= h;
        div += (flux(xp, m) - flux(xm, m)) / (2 * h);
      }
      div /= pg.vol_density;
      EXPECT_NEAR(divergence(pg, field_at<3>(sc, pg, X), PointGeometry<3>::all()), div, 1e-8) << name;
    }
  }
}

TEST(Extrinsic, PartialDivergenceAndMeanCurvature) {
  // Div_i X = Div X + <X, H_i^perp> for X tangent to D_i
  const auto sc = builtin_scenario("warp2d", 8);
  const CoordField<2> along_y = [](const auto& x) { return std::array<Jet1<2>, 2>{Jet1<2>(0.0), 1.0 + 0.3 * sin(x[0])}; };
  const CoordField<2> along_x = [](const auto& x) { return std::array<Jet1<2>, 2>{sin(x[1]) + 2.0 * cos(x[0]), Jet1<2>(0.0)}; };
  for (const auto& x : sample_points(2)) {
    const auto pg = geom<2>(sc, x);
    EXPECT_NEAR(divn_residual(pg, field_at<2>(sc, pg, along_y), pg.block(1)), 0.0, 1e-13);
    EXPECT_NEAR(divn_residual(pg, field_at<2>(sc, pg, along_x), pg.block(0)), 0.0, 1e-13);
    // the same residual with the roles of D and D^perp crossed is not zero
    const auto fx = field_at<2>(sc, pg, along_x);
    const auto ff = fundamental_forms(pg, pg.block(0));
    const double crossed = divergence(pg, fx, pg.block(0)) - divergence(pg, fx, PointGeometry<2>::all()) -
                           dot(pg, values(fx), values(ff.H));
    const double expected = dot(pg, values(fx), values(ff.H_perp));
    EXPECT_NEAR(crossed, expected, 1e-12);
    EXPECT_GT(std::abs(crossed), 1e-3);
    EXPECT_THROW(divn_residual(pg, fx, pg.block(1)), std::invalid_argument);
  }
  const auto sh = builtin_scenario("block_conformal", 8);
  const CoordField<3> in_d1 = [](const auto& x) {
    // c1 E-span: a d_x + b (d_y + cos x d_z)
    const auto a = sin(x[2]) + 0.5, b = cos(x[1] - x[0]);
    return std::array<Jet1<3>, 3>{a, b, b * cos(x[0])};
  };
  for (const auto& x : sample_points(3)) {
    const auto pg = geom<3>(sh, x);
    EXPECT_NEAR(divn_residual(pg, field_at<3>(sh, pg, in_d1), pg.block(0)), 0.0, 1e-12);
  }
}

TEST(Extrinsic, PartialDivergenceOfComplementValuedForms) {
  // (Div_i Q)(X,Y) = -<Q(X,Y), H_i> for Q with values in D_i^perp; Q = h_i^perp, T_i^perp restricted
  for (const char* name : {"nonintegrable_heisenberg", "block_conformal"}) {
    const auto sc = builtin_scenario(name, 8);
    for (const auto& x : sample_points(3)) {
      const auto pg = geom<3>(sc, x);
      for (int i = 0; i < pg.k; ++i) {
        const auto D = pg.block(i);
        const auto f = fundamental_forms(pg, D);
        EXPECT_LT(max_abs<3>(divn_tensor_residual(pg, f.h, D)), 1e-12) << name << " block " << i;
        EXPECT_LT(max_abs<3>(divn_tensor_residual(pg, f.T, D)), 1e-12) << name << " block " << i;
      }
    }
  }
}
