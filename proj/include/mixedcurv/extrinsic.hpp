#pragma once

// Extrinsic calculus of a distribution D (given as a mask of adapted-frame
// indices) and of its complement: fundamental forms, shape operators,
// Casorati-type operators, Upsilon tensors, deformation tensors and
// divergences. (0,2)-tensors are frame matrices C[a][b] = C(E_a, E_b);
// endomorphisms are matrices L[b][a] with L E_a = sum_b L[b][a] E_b.

#include <algorithm>
#include <array>
#include <stdexcept>
#include <utility>

#include "mixedcurv/geometry.hpp"

namespace mixedcurv {

class NotInComplement : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <int V, std::size_t M>
std::array<std::array<std::array<double, M>, M>, M> values(const std::array<std::array<std::array<Jet1<V>, M>, M>, M>& q) {
  std::array<std::array<std::array<double, M>, M>, M> r{};
  for (std::size_t c = 0; c < M; ++c)
    for (std::size_t a = 0; a < M; ++a)
      for (std::size_t b = 0; b < M; ++b) r[c][a][b] = q[c][a][b].v;
  return r;
}
template <int V, std::size_t M>
std::array<double, M> values(const std::array<Jet1<V>, M>& v) {
  std::array<double, M> r{};
  for (std::size_t a = 0; a < M; ++a) r[a] = v[a].v;
  return r;
}

// h_D(E_a,E_b) = 1/2 P_D^perp (nabla_a E_b + nabla_b E_a), zero off D x D.
template <int N>
FrameT3<N> second_fundamental_form(const PointGeometry<N>& pg, const Mask<N>& D) {
  FrameT3<N> h{};
  for (int c = 0; c < N; ++c) {
    if (D[c]) continue;
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b)
        if (D[a] && D[b]) h[c][a][b] = 0.5 * (pg.conn[c][a][b] + pg.conn[c][b][a]);
  }
  return h;
}

// T_D(E_a,E_b) = 1/2 P_D^perp [E_a, E_b]
template <int N>
FrameT3<N> integrability_tensor(const PointGeometry<N>& pg, const Mask<N>& D) {
  FrameT3<N> t{};
  for (int c = 0; c < N; ++c) {
    if (D[c]) continue;
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b)
        if (D[a] && D[b]) t[c][a][b] = 0.5 * (pg.conn[c][a][b] - pg.conn[c][b][a]);
  }
  return t;
}

template <int N>
FrameVec<N> mean_curvature(const PointGeometry<N>& pg, const FrameT3<N>& h, const Mask<N>& D) {
  FrameVec<N> H{};
  for (int c = 0; c < N; ++c)
    for (int a = 0; a < N; ++a)
      if (D[a]) H[c] += h[c][a][a] * pg.eps[a];
  return H;
}

template <int N>
struct FundamentalForms {
  FrameT3<N> h, T, h_perp, T_perp;
  FrameVec<N> H, H_perp;
};

template <int N>
FundamentalForms<N> fundamental_forms(const PointGeometry<N>& pg, const Mask<N>& D) {
  const Mask<N> P = complement(D);
  FundamentalForms<N> f;
  f.h = second_fundamental_form(pg, D);
  f.T = integrability_tensor(pg, D);
  f.H = mean_curvature(pg, f.h, D);
  f.h_perp = second_fundamental_form(pg, P);
  f.T_perp = integrability_tensor(pg, P);
  f.H_perp = mean_curvature(pg, f.h_perp, P);
  return f;
}

// <Q,Q> = sum eps_a eps_b <Q(E_a,E_b), Q(E_a,E_b)>
template <int N>
double norm_sq(const PointGeometry<N>& pg, const Rank3<N>& q) {
  double s = 0.0;
  for (int c = 0; c < N; ++c)
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) s += pg.eps[a] * pg.eps[b] * pg.eps[c] * q[c][a][b] * q[c][a][b];
  return s;
}
template <int N>
double dot(const PointGeometry<N>& pg, const Vec<double, N>& x, const Vec<double, N>& y) {
  double s = 0.0;
  for (int c = 0; c < N; ++c) s += pg.eps[c] * x[c] * y[c];
  return s;
}
// <C, D> for (0,2)-tensors
template <int N>
double dot(const PointGeometry<N>& pg, const Mat<double, N>& x, const Mat<double, N>& y) {
  double s = 0.0;
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) s += pg.eps[a] * pg.eps[b] * x[a][b] * y[a][b];
  return s;
}
template <int N>
double trace(const PointGeometry<N>& pg, const Mat<double, N>& c) {
  double s = 0.0;
  for (int a = 0; a < N; ++a) s += pg.eps[a] * c[a][a];
  return s;
}
template <std::size_t M>
double trace_endo(const std::array<std::array<double, M>, M>& L) {
  double s = 0.0;
  for (std::size_t a = 0; a < M; ++a) s += L[a][a];
  return s;
}

// (A_D)_{E_c}: <A E_a, E_b> = <h(E_a,E_b), E_c>, for c outside D.
template <int N>
Mat<double, N> shape_operator(const PointGeometry<N>& pg, const Rank3<N>& q, int c) {
  Mat<double, N> A{};
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) A[b][a] = pg.eps[b] * pg.eps[c] * q[c][a][b];
  return A;
}

// Shape operators for an arbitrary Z in D^perp (coordinate-free frame components z).
template <int N>
std::pair<Mat<double, N>, Mat<double, N>> shape_operators(const PointGeometry<N>& pg, const Rank3<N>& h,
                                                          const Rank3<N>& T, const Mask<N>& D,
                                                          const Vec<double, N>& z) {
  double inside = 0.0, scale = 0.0;
  for (int a = 0; a < N; ++a) {
    scale += z[a] * z[a];
    if (D[a]) inside += z[a] * z[a];
  }
  if (inside > 1e-20 * std::max(scale, 1.0)) throw NotInComplement("Z is not in the orthogonal complement of the distribution");
  Mat<double, N> A{}, Ts{};
  for (int c = 0; c < N; ++c) {
    if (D[c] || z[c] == 0.0) continue;
    const auto Ac = shape_operator(pg, h, c);
    const auto Tc = shape_operator(pg, T, c);
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) {
        A[a][b] += z[c] * Ac[a][b];
        Ts[a][b] += z[c] * Tc[a][b];
      }
  }
  return {A, Ts};
}

template <int N>
Mat<double, N> flat(const PointGeometry<N>& pg, const Mat<double, N>& L) {
  Mat<double, N> c{};
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) c[a][b] = pg.eps[b] * L[b][a];
  return c;
}

template <int N>
struct QuadraticInvariants {
  Mat<double, N> casorati_A{}, casorati_T{}, kappa{};  // endomorphisms of D
  Mat<double, N> psi{};                                // (0,2) on D^perp
  double h_sq = 0, T_sq = 0, H_sq = 0, h_perp_sq = 0, T_perp_sq = 0, H_perp_sq = 0;
};

// Casorati operators, Psi and K of the distribution D from its forms h, T.
template <int N>
void casorati(const PointGeometry<N>& pg, const Rank3<N>& h, const Rank3<N>& T, const Mask<N>& D,
              Mat<double, N>& cA, Mat<double, N>& cT, Mat<double, N>& K, Mat<double, N>& psi) {
  cA = {}, cT = {}, K = {}, psi = {};
  std::array<Mat<double, N>, N> A{}, S{};
  for (int c = 0; c < N; ++c) {
    if (D[c]) continue;
    A[c] = shape_operator(pg, h, c);
    S[c] = shape_operator(pg, T, c);
    const auto AA = matmul<double, N>(A[c], A[c]);
    const auto SS = matmul<double, N>(S[c], S[c]);
    const auto SA = matmul<double, N>(S[c], A[c]);
    const auto AS = matmul<double, N>(A[c], S[c]);
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) {
        cA[a][b] += pg.eps[c] * AA[a][b];
        cT[a][b] += pg.eps[c] * SS[a][b];
        K[a][b] += pg.eps[c] * (SA[a][b] - AS[a][b]);
      }
  }
  for (int c = 0; c < N; ++c)
    for (int d = 0; d < N; ++d) {
      if (D[c] || D[d]) continue;
      psi[c][d] = trace_endo<N>(matmul<double, N>(A[d], A[c])) + trace_endo<N>(matmul<double, N>(S[d], S[c]));
    }
}

template <int N>
QuadraticInvariants<N> quadratic_invariants(const PointGeometry<N>& pg, const FundamentalForms<N>& f, const Mask<N>& D) {
  QuadraticInvariants<N> q;
  const auto h = values(f.h), T = values(f.T);
  casorati(pg, h, T, D, q.casorati_A, q.casorati_T, q.kappa, q.psi);
  q.h_sq = norm_sq(pg, h);
  q.T_sq = norm_sq(pg, T);
  q.H_sq = dot(pg, values(f.H), values(f.H));
  q.h_perp_sq = norm_sq(pg, values(f.h_perp));
  q.T_perp_sq = norm_sq(pg, values(f.T_perp));
  q.H_perp_sq = dot(pg, values(f.H_perp), values(f.H_perp));
  return q;
}

// Upsilon_{Q1,Q2}(E_u,E_v) = sum eps_l eps_m [<Q1(l,m),E_u><Q2(l,m),E_v> + <Q2(l,m),E_u><Q1(l,m),E_v>]
template <int N>
Mat<double, N> upsilon(const PointGeometry<N>& pg, const Rank3<N>& q1, const Rank3<N>& q2) {
  Mat<double, N> u{};
  for (int a = 0; a < N; ++a)
    for (int b = a; b < N; ++b) {
      double s = 0.0;
      for (int l = 0; l < N; ++l)
        for (int m = 0; m < N; ++m) s += pg.eps[l] * pg.eps[m] * (q1[a][l][m] * q2[b][l][m] + q2[a][l][m] * q1[b][l][m]);
      u[a][b] = u[b][a] = s * pg.eps[a] * pg.eps[b];
    }
  return u;
}

// <Q, X>(E_a,E_b) = <Q(E_a,E_b), X>
template <int N>
Mat<double, N> pair_with(const PointGeometry<N>& pg, const Rank3<N>& q, const Vec<double, N>& x) {
  Mat<double, N> r{};
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < N; ++c) r[a][b] += pg.eps[c] * q[c][a][b] * x[c];
  return r;
}

// X^flat (x) X^flat
template <int N>
Mat<double, N> flat_square(const PointGeometry<N>& pg, const Vec<double, N>& x) {
  Mat<double, N> r{};
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) r[a][b] = pg.eps[a] * pg.eps[b] * x[a] * x[b];
  return r;
}

// P_D applied to the values of Q.
template <class Q, std::size_t M>
Q project_values(Q q, const std::array<bool, M>& D) {
  for (std::size_t c = 0; c < M; ++c)
    if (!D[c]) q[c] = {};
  return q;
}
// D x D block of a (0,2)-tensor or endomorphism
template <std::size_t M>
std::array<std::array<double, M>, M> restrict_to(const std::array<std::array<double, M>, M>& m, const std::array<bool, M>& D) {
  std::array<std::array<double, M>, M> r{};
  for (std::size_t a = 0; a < M; ++a)
    for (std::size_t b = 0; b < M; ++b) r[a][b] = (D[a] && D[b]) ? m[a][b] : 0.0;
  return r;
}
// metric restricted to D (g_D in frame components)
template <int N>
Mat<double, N> metric_on(const PointGeometry<N>& pg, const Mask<N>& D) {
  Mat<double, N> r{};
  for (int a = 0; a < N; ++a) r[a][a] = D[a] ? pg.eps[a] : 0.0;
  return r;
}

// (nabla_e X)^c for frame components X (with partials)
template <int N>
Mat<double, N> covariant_derivative(const PointGeometry<N>& pg, const FrameVec<N>& X) {
  Mat<double, N> r{};
  for (int e = 0; e < N; ++e)
    for (int c = 0; c < N; ++c) {
      double s = pg.along(X[c], e);
      for (int d = 0; d < N; ++d) s += pg.conn[c][e][d].v * X[d].v;
      r[e][c] = s;
    }
  return r;
}

// Div X summed over frame directions in `dirs` (all: full divergence; a block: Div_i).
template <int N>
double divergence(const PointGeometry<N>& pg, const FrameVec<N>& X, const Mask<N>& dirs) {
  const auto nx = covariant_derivative(pg, X);
  double s = 0.0;
  for (int e = 0; e < N; ++e)
    if (dirs[e]) s += nx[e][e];
  return s;
}

// (Div Q)(E_a,E_b) = sum_{e in dirs} eps_e <(nabla_e Q)(E_a,E_b), E_e>
template <int N>
Mat<double, N> divergence(const PointGeometry<N>& pg, const FrameT3<N>& Q, const Mask<N>& dirs) {
  Mat<double, N> r{};
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      double s = 0.0;
      for (int e = 0; e < N; ++e) {
        if (!dirs[e]) continue;
        s += pg.along(Q[e][a][b], e);
        for (int d = 0; d < N; ++d)
          s += pg.conn[e][e][d].v * Q[d][a][b].v - pg.conn[d][e][a].v * Q[e][d][b].v - pg.conn[d][e][b].v * Q[e][a][d].v;
      }
      r[a][b] = s;
    }
  return r;
}

// Def_D Z on D x D: 2 Def(X,Y) = <nabla_X Z, Y> + <nabla_Y Z, X>
template <int N>
Mat<double, N> deformation(const PointGeometry<N>& pg, const FrameVec<N>& Z, const Mask<N>& D) {
  const auto nz = covariant_derivative(pg, Z);
  Mat<double, N> r{};
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      if (D[a] && D[b]) r[a][b] = 0.5 * (pg.eps[b] * nz[a][b] + pg.eps[a] * nz[b][a]);
  return r;
}

// Frame components (with partials) of a coordinate vector field given as jets.
template <int N>
FrameVec<N> frame_components(const PointGeometry<N>& pg, const MetricJets<N>& mj, const FrameVec<N>& X) {
  FrameVec<N> r{};
  for (int a = 0; a < N; ++a) {
    Jet1<N> s(0.0);
    for (int m = 0; m < N; ++m)
      for (int n = 0; n < N; ++n) s += truncate(mj.g[m][n]) * X[m] * truncate(pg.frame.E[a][n]);
    r[a] = s * pg.eps[a];
  }
  return r;
}

// For X in D: Div_D X - Div X - <X, H_D^perp>, identically zero.
template <int N>
double divn_residual(const PointGeometry<N>& pg, const FrameVec<N>& X, const Mask<N>& D) {
  double scale = 0.0;
  for (int a = 0; a < N; ++a) scale = std::max(scale, std::abs(X[a].v));
  for (int a = 0; a < N; ++a)
    if (!D[a] && std::abs(X[a].v) > 1e-12 * scale) throw std::invalid_argument("divn_residual: X must be tangent to the distribution");
  const auto f = fundamental_forms(pg, D);
  return divergence(pg, X, D) - divergence(pg, X, PointGeometry<N>::all()) - dot(pg, values(X), values(f.H_perp));
}

// For Q with values in D^perp: (Div_D Q)(X,Y) + <Q(X,Y), H_D>, identically zero.
template <int N>
Mat<double, N> divn_tensor_residual(const PointGeometry<N>& pg, const FrameT3<N>& Q, const Mask<N>& D) {
  double scale = 0.0;
  for (const auto& m : Q)
    for (const auto& row : m)
      for (const auto& q : row) scale = std::max(scale, std::abs(q.v));
  for (int c = 0; c < N; ++c)
    if (D[c])
      for (const auto& row : Q[c])
        for (const auto& q : row)
          if (std::abs(q.v) > 1e-12 * scale) throw std::invalid_argument("divn_tensor_residual: Q must take values in the complement");
  const auto f = fundamental_forms(pg, D);
  auto r = divergence(pg, Q, D);
  const auto qh = pair_with(pg, values(Q), values(f.H));
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) r[a][b] += qh[a][b];
  return r;
}

}  // namespace mixedcurv
