#pragma once

// Mixed scalar curvature, partial Ricci tensors and the residuals of the
// integral/pointwise identities of an almost k-product structure.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mixedcurv/chart.hpp"
#include "mixedcurv/extrinsic.hpp"
#include "mixedcurv/geometry.hpp"
#include "mixedcurv/scenario.hpp"

namespace mixedcurv {

// S(D, D') = sum_{a in D, b in D'} eps_a eps_b <R(E_a,E_b)E_a, E_b>
template <int N>
double mixed_pair(const PointGeometry<N>& pg, const Mask<N>& D, const Mask<N>& Dp) {
  double s = 0.0;
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      if (D[a] && Dp[b]) s += pg.eps[a] * pg.eps[b] * pg.R[a][b][a][b];
  return s;
}

// r_D(X,Y) = sum_{a in D} eps_a <R(E_a, P^perp X) E_a, P^perp Y>
template <int N>
Mat<double, N> partial_ricci(const PointGeometry<N>& pg, const Mask<N>& D) {
  Mat<double, N> r{};
  for (int x = 0; x < N; ++x)
    for (int y = 0; y < N; ++y) {
      if (D[x] || D[y]) continue;
      double s = 0.0;
      for (int a = 0; a < N; ++a)
        if (D[a]) s += pg.eps[a] * pg.R[a][x][a][y];
      r[x][y] = s;
    }
  return r;
}

struct MixedCurvatureReport {
  std::vector<std::vector<double>> S_pairwise;
  double S_mix = 0.0;
  std::vector<double> S_i_perp;
};

template <int N>
MixedCurvatureReport mixed_scalar(const PointGeometry<N>& pg) {
  MixedCurvatureReport m;
  const auto k = static_cast<std::size_t>(pg.k);
  m.S_pairwise.assign(k, std::vector<double>(k, 0.0));
  m.S_i_perp.assign(k, 0.0);
  for (int i = 0; i < pg.k; ++i)
    for (int j = 0; j < pg.k; ++j)
      if (i != j) m.S_pairwise[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = mixed_pair(pg, pg.block(i), pg.block(j));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      m.S_i_perp[i] += m.S_pairwise[i][j];
      if (i < j) m.S_mix += m.S_pairwise[i][j];
    }
  return m;
}

// Full per-block extrinsic package at a point.
template <int N>
struct BlockData {
  Mask<N> D{}, P{};
  FundamentalForms<N> f;
  Rank3<N> h{}, T{}, hp{}, Tp{};
  std::array<double, N> H{}, Hp{};
  QuadraticInvariants<N> q;       // of D_i
  QuadraticInvariants<N> q_perp;  // of D_i^perp
};

template <int N>
BlockData<N> block_data(const PointGeometry<N>& pg, int i) {
  BlockData<N> b;
  b.D = pg.block(i);
  b.P = pg.perp(i);
  b.f = fundamental_forms(pg, b.D);
  b.h = values(b.f.h);
  b.T = values(b.f.T);
  b.hp = values(b.f.h_perp);
  b.Tp = values(b.f.T_perp);
  b.H = values(b.f.H);
  b.Hp = values(b.f.H_perp);
  b.q = quadratic_invariants(pg, b.f, b.D);
  FundamentalForms<N> fp{b.f.h_perp, b.f.T_perp, b.f.h, b.f.T, b.f.H_perp, b.f.H};
  b.q_perp = quadratic_invariants(pg, fp, b.P);
  return b;
}

template <class T, std::size_t M>
std::array<T, M> add(const std::array<T, M>& a, const std::array<T, M>& b) {
  std::array<T, M> r{};
  for (std::size_t c = 0; c < M; ++c) r[c] = a[c] + b[c];
  return r;
}

// Sum of the quadratic extrinsic terms of the pair (D_i, D_i^perp):
// <h,h> - <H,H> - <T,T> + the same for D_i^perp.
template <int N>
double pw_quadratic(const BlockData<N>& b) {
  return b.q.h_sq - b.q.H_sq - b.q.T_sq + b.q.h_perp_sq - b.q.H_perp_sq - b.q.T_perp_sq;
}

// Right side of the partial Ricci presentation for D_i, on D_i x D_i:
// Div h_i + <h_i, H_i> - A_i - T_i - Psi_i^perp + Def_{D_i} H_i^perp
template <int N>
Mat<double, N> partial_ricci_presentation(const PointGeometry<N>& pg, const BlockData<N>& b) {
  const auto all = PointGeometry<N>::all();
  const auto divh = divergence(pg, b.f.h, all);
  const auto hH = pair_with(pg, b.h, b.H);
  const auto A = flat(pg, b.q.casorati_A);
  const auto Tc = flat(pg, b.q.casorati_T);
  const auto def = deformation(pg, b.f.H_perp, b.D);
  Mat<double, N> r{};
  for (int x = 0; x < N; ++x)
    for (int y = 0; y < N; ++y)
      if (b.D[x] && b.D[y]) r[x][y] = divh[x][y] + hH[x][y] - A[x][y] - Tc[x][y] - b.q_perp.psi[x][y] + def[x][y];
  return r;
}

template <class M>
double max_abs(const M& m) {
  double s = 0.0;
  for (const auto& row : m)
    for (double v : row) s = std::max(s, std::abs(v));
  return s;
}

// All pointwise identity residuals at one point, keyed by check name.
template <int N>
struct PointIdentities {
  std::vector<std::pair<std::string, double>> residuals;  // signed where meaningful
  double integrand = 0.0;
  double S_mix = 0.0;
};

template <int N>
PointIdentities<N> point_identities(const PointGeometry<N>& pg) {
  PointIdentities<N> out;
  auto put = [&](std::string name, double v) { out.residuals.emplace_back(std::move(name), v); };
  const auto all = PointGeometry<N>::all();
  const auto mix = mixed_scalar(pg);
  out.S_mix = mix.S_mix;

  FrameVec<N> Vsum{};
  double quad_sum = 0.0, pw_sum = 0.0, half_perp = 0.0;
  Mat<double, N> r_total{};
  for (int i = 0; i < pg.k; ++i) {
    const auto b = block_data(pg, i);
    const std::string tag = std::to_string(i + 1);
    const auto V = add(b.f.H, b.f.H_perp);
    Vsum = add(Vsum, V);
    const double quad = pw_quadratic(b);
    quad_sum += quad;
    const double S_ip = mix.S_i_perp[static_cast<std::size_t>(i)];
    half_perp += 0.5 * S_ip;
    const double pw = divergence(pg, V, all) - (S_ip + quad);
    pw_sum += pw;
    put("E-PW[" + tag + "]", pw);

    // partial Ricci r_i (sum over D_i, lives on D_i^perp) and the complement
    const auto ri = partial_ricci(pg, b.D);
    const auto ri_perp = partial_ricci(pg, b.P);
    for (int x = 0; x < N; ++x)
      for (int y = 0; y < N; ++y) r_total[x][y] += 0.5 * ri[x][y];
    put("trace r_i = S_i_perp[" + tag + "]", trace(pg, ri) - S_ip);
    put("trace r_i_perp = S_i_perp[" + tag + "]", trace(pg, ri_perp) - S_ip);

    // partial Ricci presentation
    const auto pres = partial_ricci_presentation(pg, b);
    Mat<double, N> diff{};
    for (int x = 0; x < N; ++x)
      for (int y = 0; y < N; ++y) diff[x][y] = ri_perp[x][y] - pres[x][y];
    put("E-genRicN[" + tag + "]", max_abs(diff));

    // the six trace equalities
    const auto divh = divergence(pg, b.f.h, all);
    put("trace Div h = Div H[" + tag + "]", trace(pg, restrict_to(divh, b.D)) - divergence(pg, b.f.H, all));
    put("trace <h,H> = <H,H>[" + tag + "]", trace(pg, pair_with(pg, b.h, b.H)) - b.q.H_sq);
    put("trace Psi_perp[" + tag + "]", trace(pg, b.q_perp.psi) - (b.q.h_perp_sq - b.q.T_perp_sq));
    put("trace A = <h,h>[" + tag + "]", trace_endo(b.q.casorati_A) - b.q.h_sq);
    put("trace T = -<T,T>[" + tag + "]", trace_endo(b.q.casorati_T) + b.q.T_sq);
    put("trace Def H_perp[" + tag + "]",
        trace(pg, deformation(pg, b.f.H_perp, b.D)) - (divergence(pg, b.f.H_perp, all) + b.q.H_perp_sq));
  }
  const double pw3 = divergence(pg, Vsum, all) - (2.0 * mix.S_mix + quad_sum);
  put("E-PW3-k", pw3);
  put("E-PW3-k - sum E-PW", pw3 - pw_sum);
  put("S_mix - trace r", mix.S_mix - trace(pg, r_total));
  put("S_mix - half sum S_i_perp", mix.S_mix - half_perp);
  out.integrand = 2.0 * mix.S_mix + quad_sum;
  return out;
}

// Largest component of each extrinsic/curvature tensor at a point, over all blocks.
template <int N>
std::vector<std::pair<std::string, double>> tensor_magnitudes(const PointGeometry<N>& pg) {
  double h = 0, T = 0, H = 0, A = 0, Tc = 0, psi = 0, K = 0, r = 0;
  auto m3 = [](const Rank3<N>& q) {
    double s = 0.0;
    for (const auto& m : q) s = std::max(s, max_abs(m));
    return s;
  };
  auto mv = [](const std::array<double, N>& v) {
    double s = 0.0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
  };
  for (int i = 0; i < pg.k; ++i) {
    const auto b = block_data(pg, i);
    h = std::max({h, m3(b.h), m3(b.hp)});
    T = std::max({T, m3(b.T), m3(b.Tp)});
    H = std::max({H, mv(b.H), mv(b.Hp)});
    A = std::max({A, max_abs(b.q.casorati_A), max_abs(b.q_perp.casorati_A)});
    Tc = std::max({Tc, max_abs(b.q.casorati_T), max_abs(b.q_perp.casorati_T)});
    psi = std::max({psi, max_abs(b.q.psi), max_abs(b.q_perp.psi)});
    K = std::max({K, max_abs(b.q.kappa), max_abs(b.q_perp.kappa)});
    r = std::max({r, max_abs(partial_ricci(pg, b.D)), max_abs(partial_ricci(pg, b.P))});
  }
  return {{"h", h}, {"T", T}, {"H", H}, {"A", A}, {"T-Casorati", Tc}, {"Psi", psi}, {"K", K}, {"r", r},
          {"S_mix", std::abs(mixed_scalar(pg).S_mix)}};
}

struct ResidualSummary {
  double max_abs = 0.0;
  double l2 = 0.0;
};

struct IdentityResidualReport {
  std::vector<std::string> names;
  std::vector<std::vector<double>> fields;  // fields[check][point]
  std::vector<ResidualSummary> summary;
  double integral = 0.0, integral_norm = 0.0;
  double min_S_mix = 0.0, max_S_mix = 0.0;
  std::vector<std::pair<std::string, double>> tensor_max;  // max over the grid of tensor_magnitudes
};

template <int N>
IdentityResidualReport identity_suite_n(const Scenario& sc, const ExecPolicy& pol) {
  const MetricField g = sc.field();
  const std::size_t np = sc.chart.num_points();
  std::vector<PointIdentities<N>> pts(np);
  std::vector<double> dvol(np);
  std::vector<std::vector<std::pair<std::string, double>>> mags(np);
  parallel_for(np, pol, [&](std::size_t p) {
    const auto x = sc.chart.point(p);
    const auto pg = point_geometry<N>(x, g);
    pts[p] = point_identities(pg);
    mags[p] = tensor_magnitudes(pg);
    dvol[p] = pg.vol_density * sc.chart.cell_volume();
  });
  IdentityResidualReport rep;
  for (const auto& [name, v] : pts[0].residuals) rep.names.push_back(name);
  rep.fields.assign(rep.names.size(), std::vector<double>(np));
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t c = 0; c < rep.names.size(); ++c) rep.fields[c][p] = pts[p].residuals[c].second;
  for (const auto& f : rep.fields) {
    ResidualSummary s;
    std::vector<double> sq(np);
    for (std::size_t p = 0; p < np; ++p) {
      s.max_abs = std::max(s.max_abs, std::abs(f[p]));
      sq[p] = f[p] * f[p] * dvol[p];
    }
    s.l2 = std::sqrt(reduce_sum(sq, pol));
    rep.summary.push_back(s);
  }
  std::vector<double> I(np), A(np);
  rep.min_S_mix = rep.max_S_mix = pts[0].S_mix;
  for (std::size_t p = 0; p < np; ++p) {
    I[p] = pts[p].integrand * dvol[p];
    A[p] = std::abs(I[p]);
    rep.min_S_mix = std::min(rep.min_S_mix, pts[p].S_mix);
    rep.max_S_mix = std::max(rep.max_S_mix, pts[p].S_mix);
  }
  rep.tensor_max = mags[0];
  for (std::size_t p = 1; p < np; ++p)
    for (std::size_t c = 0; c < rep.tensor_max.size(); ++c)
      rep.tensor_max[c].second = std::max(rep.tensor_max[c].second, mags[p][c].second);
  rep.integral = reduce_sum(I, pol);
  rep.integral_norm = reduce_sum(A, pol);
  return rep;
}

inline IdentityResidualReport identity_suite(const Scenario& sc, const ExecPolicy& pol = {}) {
  return with_dimension(sc.chart.n, [&]<int N>() { return identity_suite_n<N>(sc, pol); });
}

// Integral of the closed-manifold integrand, with its L1 normalizer.
inline std::pair<double, double> integral_identity(const Scenario& sc, const ExecPolicy& pol = {}) {
  const auto rep = identity_suite(sc, pol);
  return {rep.integral, rep.integral_norm};
}

}  // namespace mixedcurv
