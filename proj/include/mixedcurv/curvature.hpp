#pragma once

// Levi-Civita connection and curvature from metric jets.
//
// riemann[a][b][c][d] = R_{abcd} = g_{ae} R^e_{bcd} with
//   R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb} + Gamma^a_{ce} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{cb},
// i.e. <R(d_c, d_d) d_b, d_a> for R(X,Y) = [nabla_X, nabla_Y] - nabla_[X,Y].
// The mixed-curvature pairing <R(E_a,E_b)E_a,E_b> of the splitting calculus is
// taken with the opposite sign (see frame_riemann), which is what makes the
// mixed scalar curvature of a plane its sectional curvature.

#include <array>
#include <span>

#include "mixedcurv/jet.hpp"
#include "mixedcurv/linalg.hpp"
#include "mixedcurv/metric.hpp"

namespace mixedcurv {

template <int N>
using Rank3 = std::type_identity_t<std::array<Mat<double, N>, N>>;
template <int N>
using Rank4 = std::type_identity_t<std::array<std::array<Mat<double, N>, N>, N>>;

// Gamma[c][a][b] = Gamma^c_{ab} with first partials.
template <int N>
std::array<Mat<Jet1<N>, N>, N> christoffel_jet(const Mat<Jet2<N>, N>& g2, Mat<Jet1<N>, N>* ginv_out = nullptr) {
  Mat<Jet1<N>, N> g1{}, ginv{};
  std::array<Mat<Jet1<N>, N>, N> dg{};  // dg[c][a][b] = d_c g_ab
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      g1[a][b] = truncate(g2[a][b]);
      for (int c = 0; c < N; ++c) dg[c][a][b] = partial(g2[a][b], c);
    }
  if (!invert<Jet1<N>, N>(g1, ginv, nullptr, 1e-14)) throw DegenerateMetric("metric is not invertible");
  std::array<Mat<Jet1<N>, N>, N> lower{};  // Gamma_{dab} = 1/2 (d_a g_db + d_b g_da - d_d g_ab)
  for (int d = 0; d < N; ++d)
    for (int a = 0; a < N; ++a)
      for (int b = a; b < N; ++b) {
        Jet1<N> v = 0.5 * (dg[a][d][b] + dg[b][d][a] - dg[d][a][b]);
        lower[d][a][b] = v;
        lower[d][b][a] = v;
      }
  std::array<Mat<Jet1<N>, N>, N> gam{};
  for (int c = 0; c < N; ++c)
    for (int a = 0; a < N; ++a)
      for (int b = a; b < N; ++b) {
        Jet1<N> s(0.0);
        for (int d = 0; d < N; ++d)
          if (!is_exact_zero(lower[d][a][b])) s += ginv[c][d] * lower[d][a][b];
        gam[c][a][b] = s;
        gam[c][b][a] = s;
      }
  if (ginv_out) *ginv_out = ginv;
  return gam;
}

template <int N>
struct CurvatureAtPoint {
  Rank3<N> christoffel{};  // christoffel[c][a][b] = Gamma^c_{ab}
  Rank4<N> riemann{};      // R_{abcd}, all indices down
  Mat<double, N> ricci{};  // Ric_{bd} = R^a_{bad}
  double scalar = 0.0;
};

template <int N>
CurvatureAtPoint<N> curvature_from_christoffel(const Mat<Jet2<N>, N>& g2, const std::array<Mat<Jet1<N>, N>, N>& gam,
                                              const Mat<Jet1<N>, N>& ginv1) {
  CurvatureAtPoint<N> out;
  for (int c = 0; c < N; ++c)
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) out.christoffel[c][a][b] = gam[c][a][b].v;
  const auto& G = out.christoffel;

  Rank4<N> up{};  // up[a][b][c][d] = R^a_{bcd}
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < N; ++c)
        for (int d = c + 1; d < N; ++d) {
          double v = gam[a][d][b].d[c] - gam[a][c][b].d[d];
          for (int e = 0; e < N; ++e) v += G[a][c][e] * G[e][d][b] - G[a][d][e] * G[e][c][b];
          up[a][b][c][d] = v;
          up[a][b][d][c] = -v;
        }
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < N; ++c)
        for (int d = 0; d < N; ++d) {
          double v = 0.0;
          for (int e = 0; e < N; ++e) v += g2[a][e].v * up[e][b][c][d];
          out.riemann[a][b][c][d] = v;
        }
  for (int b = 0; b < N; ++b)
    for (int d = 0; d < N; ++d) {
      double v = 0.0;
      for (int a = 0; a < N; ++a) v += up[a][b][a][d];
      out.ricci[b][d] = v;
    }
  double s = 0.0;
  for (int b = 0; b < N; ++b)
    for (int d = 0; d < N; ++d) s += ginv1[b][d].v * out.ricci[b][d];
  out.scalar = s;
  return out;
}

template <int N>
CurvatureAtPoint<N> curvature_from_jets(const Mat<Jet2<N>, N>& g2) {
  Mat<Jet1<N>, N> ginv1{};
  const auto gam = christoffel_jet<N>(g2, &ginv1);
  return curvature_from_christoffel<N>(g2, gam, ginv1);
}

template <int N>
CurvatureAtPoint<N> curvature_at(std::span<const double> point, const MetricField& g) {
  return curvature_from_jets<N>(g.jets<N>(point).g);
}

}  // namespace mixedcurv
