#pragma once

// Everything known about (M, g; D_1..D_k) at one grid point, in the adapted
// frame: connection coefficients with first partials, frame curvature, and
// the variation tensor when the metric comes with a parameter direction.

#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "mixedcurv/curvature.hpp"
#include "mixedcurv/frame.hpp"
#include "mixedcurv/metric.hpp"

namespace mixedcurv {

template <int N>
using Mask = std::type_identity_t<std::array<bool, N>>;
// Frame components of a vector-valued bilinear form: Q[c][a][b] = Q^c(E_a, E_b).
template <int N>
using FrameT3 = std::type_identity_t<std::array<Mat<Jet1<N>, N>, N>>;
template <int N>
using FrameVec = std::type_identity_t<std::array<Jet1<N>, N>>;

template <int N>
struct PointGeometry {
  std::array<double, N> x{};
  Mat<double, N> g{};
  CurvatureAtPoint<N> curv;
  AdaptedFrame<N> frame;
  Mat<double, N> E{};  // frame vector values E[a][mu]
  std::array<double, N> eps{};
  int k = 0;
  FrameT3<N> conn{};  // nabla_{E_a} E_b = sum_c conn[c][a][b] E_c
  Rank4<N> R{};       // R[a][b][c][d] = <R(E_a,E_b)E_c, E_d>, mixed-curvature sign
  double vol_density = 0.0;
  bool has_variation = false;
  Mat<Jet1<N>, N> B{};  // B(E_a, E_b)

  Mask<N> block(int i) const {
    Mask<N> m{};
    for (int a = 0; a < N; ++a) m[a] = frame.block_of[a] == i;
    return m;
  }
  Mask<N> perp(int i) const {
    Mask<N> m{};
    for (int a = 0; a < N; ++a) m[a] = frame.block_of[a] != i;
    return m;
  }
  static Mask<N> all() {
    Mask<N> m{};
    m.fill(true);
    return m;
  }

  // E_e(f)
  double along(const Jet1<N>& f, int e) const {
    double s = 0.0;
    for (int m = 0; m < N; ++m) s += E[e][m] * f.d[m];
    return s;
  }
};

template <std::size_t M>
std::array<bool, M> complement(const std::array<bool, M>& m) {
  std::array<bool, M> c{};
  for (std::size_t a = 0; a < M; ++a) c[a] = !m[a];
  return c;
}

template <int N>
PointGeometry<N> geometry_from_jets(std::span<const double> point, const MetricJets<N>& mj, const SplittingFrame& split) {
  PointGeometry<N> pg;
  for (int m = 0; m < N; ++m) pg.x[m] = point[static_cast<std::size_t>(m)];
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) pg.g[a][b] = mj.g[a][b].v;
  pg.k = split.k();

  Mat<Jet1<N>, N> ginv{};
  const auto gam = christoffel_jet<N>(mj.g, &ginv);
  pg.curv = curvature_from_christoffel<N>(mj.g, gam, ginv);
  pg.frame = orthonormalize<N>(mj.g, mj.seeds, split);
  pg.eps = pg.frame.eps;
  for (int a = 0; a < N; ++a)
    for (int m = 0; m < N; ++m) pg.E[a][m] = pg.frame.E[a][m].v;
  pg.vol_density = std::sqrt(std::abs(determinant<double, N>(pg.g)));

  Mat<Jet1<N>, N> E1{}, g1{};
  for (int a = 0; a < N; ++a)
    for (int m = 0; m < N; ++m) {
      E1[a][m] = truncate(pg.frame.E[a][m]);
      g1[a][m] = truncate(mj.g[a][m]);
    }

  // (nabla_a E_b)^mu = E_a^nu d_nu E_b^mu + Gamma^mu_{nu rho} E_a^nu E_b^rho
  std::array<Mat<Jet1<N>, N>, N> W{};  // W[a][b][mu]
  for (int a = 0; a < N; ++a) {
    Mat<Jet1<N>, N> GA{};  // GA[mu][rho] = Gamma^mu_{nu rho} E_a^nu
    for (int mu = 0; mu < N; ++mu)
      for (int rho = 0; rho < N; ++rho) {
        Jet1<N> s(0.0);
        for (int nu = 0; nu < N; ++nu)
          if (!is_exact_zero(E1[a][nu]) && !is_exact_zero(gam[mu][nu][rho])) s += gam[mu][nu][rho] * E1[a][nu];
        GA[mu][rho] = s;
      }
    for (int b = 0; b < N; ++b)
      for (int mu = 0; mu < N; ++mu) {
        Jet1<N> s(0.0);
        for (int nu = 0; nu < N; ++nu) {
          if (is_exact_zero(E1[a][nu])) continue;
          const Jet1<N> dE = partial(pg.frame.E[b][mu], nu);
          if (!is_exact_zero(dE)) s += E1[a][nu] * dE;
        }
        for (int rho = 0; rho < N; ++rho)
          if (!is_exact_zero(GA[mu][rho]) && !is_exact_zero(E1[b][rho])) s += GA[mu][rho] * E1[b][rho];
        W[a][b][mu] = s;
      }
  }
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      std::array<Jet1<N>, N> low{};
      for (int s = 0; s < N; ++s) {
        Jet1<N> v(0.0);
        for (int mu = 0; mu < N; ++mu)
          if (!is_exact_zero(g1[s][mu]) && !is_exact_zero(W[a][b][mu])) v += g1[s][mu] * W[a][b][mu];
        low[s] = v;
      }
      for (int c = 0; c < N; ++c) {
        Jet1<N> v(0.0);
        for (int s = 0; s < N; ++s)
          if (!is_exact_zero(E1[c][s]) && !is_exact_zero(low[s])) v += E1[c][s] * low[s];
        pg.conn[c][a][b] = v * pg.eps[c];
      }
    }

  // R[a][b][c][d] = -R_std(E_d, E_c, E_a, E_b), contracted one slot at a time.
  const auto& Rs = pg.curv.riemann;
  Rank4<N> t1{}, t2{}, t3{};
  for (int d = 0; d < N; ++d)
    for (int q = 0; q < N; ++q)
      for (int r = 0; r < N; ++r)
        for (int s = 0; s < N; ++s) {
          double v = 0.0;
          for (int p = 0; p < N; ++p) v += pg.E[d][p] * Rs[p][q][r][s];
          t1[d][q][r][s] = v;
        }
  for (int d = 0; d < N; ++d)
    for (int c = 0; c < N; ++c)
      for (int r = 0; r < N; ++r)
        for (int s = 0; s < N; ++s) {
          double v = 0.0;
          for (int q = 0; q < N; ++q) v += pg.E[c][q] * t1[d][q][r][s];
          t2[d][c][r][s] = v;
        }
  for (int d = 0; d < N; ++d)
    for (int c = 0; c < N; ++c)
      for (int a = 0; a < N; ++a)
        for (int s = 0; s < N; ++s) {
          double v = 0.0;
          for (int r = 0; r < N; ++r) v += pg.E[a][r] * t2[d][c][r][s];
          t3[d][c][a][s] = v;
        }
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < N; ++c)
        for (int d = 0; d < N; ++d) {
          double v = 0.0;
          for (int s = 0; s < N; ++s) v += pg.E[b][s] * t3[d][c][a][s];
          pg.R[a][b][c][d] = -v;
        }

  if (mj.has_variation) {
    pg.has_variation = true;
    for (int a = 0; a < N; ++a)
      for (int b = a; b < N; ++b) {
        Jet1<N> v(0.0);
        for (int m = 0; m < N; ++m)
          for (int n = 0; n < N; ++n)
            if (!is_exact_zero(mj.B[m][n])) v += mj.B[m][n] * E1[a][m] * E1[b][n];
        pg.B[a][b] = v;
        pg.B[b][a] = v;
      }
  }
  return pg;
}

inline std::string format_point(std::span<const double> x) {
  std::string s = "(";
  char buf[32];
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.6g", i ? ", " : "", x[i]);
    s += buf;
  }
  return s + ")";
}

template <int N>
PointGeometry<N> point_geometry(std::span<const double> point, const MetricField& g,
                                const std::vector<double>* direction = nullptr) {
  try {
    return geometry_from_jets<N>(point, g.jets<N>(point, direction), g.family().split);
  } catch (const DegenerateBlock& e) {
    throw DegenerateBlock(std::string(e.what()) + " at point " + format_point(point));
  } catch (const InadmissibleTheta&) {
    throw;
  } catch (const DegenerateMetric& e) {
    throw DegenerateMetric(std::string(e.what()) + " at point " + format_point(point));
  }
}

}  // namespace mixedcurv
