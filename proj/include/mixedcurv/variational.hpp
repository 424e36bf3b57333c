#pragma once

// Adapted variations of the metric: action values, frame evolution, the
// variation formulas of the extrinsic invariants, the first variation of the
// total mixed scalar curvature, Euler-Lagrange residuals, the mu-system,
// the Ricci-type tensor Ric_D and the Einstein-type residual, and a small
// optimizer over finite-dimensional metric families.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixedcurv/functionals.hpp"

namespace mixedcurv {

class NotDjVariation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnsupportedDimension : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------- families

// g_theta together with a parameter direction; B = d/dt g_{theta + t v}.
struct FamilyVariation {
  MetricField field;
  std::vector<double> direction;
};

inline FamilyVariation family_metric(const Scenario& sc, const std::vector<double>& theta,
                                     const std::vector<double>& direction) {
  if (direction.size() != sc.family.num_params()) throw InadmissibleTheta("direction has wrong number of entries");
  return FamilyVariation{sc.field(theta), direction};
}

// Coordinate components of B at a point.
template <int N>
Mat<double, N> variation_tensor(const FamilyVariation& fv, std::span<const double> x) {
  const auto mj = fv.field.jets<N>(x, &fv.direction);
  Mat<double, N> B{};
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) B[a][b] = mj.B[a][b].v;
  return B;
}

// Blocks whose coefficients move along `dir`.
inline std::vector<int> variation_blocks(const MetricFamily& f, const std::vector<double>& dir) {
  std::vector<bool> hit(static_cast<std::size_t>(f.k()), false);
  for (std::size_t m = 0; m < dir.size(); ++m)
    if (dir[m] != 0.0)
      for (int i : f.blocks_using_param(static_cast<int>(m))) hit[static_cast<std::size_t>(i)] = true;
  std::vector<int> out;
  for (int i = 0; i < f.k(); ++i)
    if (hit[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

// The block j of a D_j-variation (0 for the zero direction).
inline int dj_block(const MetricFamily& f, const std::vector<double>& dir) {
  const auto b = variation_blocks(f, dir);
  if (b.size() > 1) throw NotDjVariation("direction moves more than one distribution block");
  return b.empty() ? 0 : b.front();
}

template <int N>
Mat<double, N> mat_values(const Mat<Jet1<N>, N>& m) {
  Mat<double, N> r{};
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) r[a][b] = m[a][b].v;
  return r;
}

template <int N>
Mat<double, N> operator_sum(std::initializer_list<std::pair<double, Mat<double, N>>> terms) {
  Mat<double, N> r{};
  for (const auto& [c, m] : terms)
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) r[a][b] += c * m[a][b];
  return r;
}

// ------------------------------------------------------------------ action

struct ActionValue {
  double value = 0.0;         // the configured action
  double total_mixed = 0.0;   // integral of S_mix
  double total_scalar = 0.0;  // integral of S
  double volume = 0.0;
};

template <int N>
ActionValue action_value_n(const Scenario& sc, const ActionConfig& cfg, const std::vector<double>& theta,
                           const ExecPolicy& pol) {
  const MetricField g = sc.field(theta);
  const std::size_t np = sc.chart.num_points();
  std::vector<double> smix(np), s(np), vol(np);
  parallel_for(np, pol, [&](std::size_t p) {
    const auto x = sc.chart.point(p);
    const auto pg = point_geometry<N>(x, g);
    const double dv = pg.vol_density * sc.chart.cell_volume();
    smix[p] = mixed_scalar(pg).S_mix * dv;
    s[p] = pg.curv.scalar * dv;
    vol[p] = dv;
  });
  ActionValue a;
  a.total_mixed = reduce_sum(smix, pol);
  a.total_scalar = reduce_sum(s, pol);
  a.volume = reduce_sum(vol, pol);
  const double core = cfg.perturbed ? a.total_scalar + cfg.epsilon * a.total_mixed : a.total_mixed;
  a.value = (core - 2.0 * cfg.Lambda * a.volume) / (2.0 * cfg.coupling) + cfg.L_matter * a.volume;
  return a;
}

inline ActionValue action_value(const Scenario& sc, const ActionConfig& cfg, const std::vector<double>& theta,
                                const ExecPolicy& pol = {}) {
  return with_dimension(sc.chart.n, [&]<int N>() { return action_value_n<N>(sc, cfg, theta, pol); });
}
inline ActionValue action_value(const Scenario& sc, const ExecPolicy& pol = {}) {
  return action_value(sc, sc.action, sc.theta, pol);
}

// --------------------------------------------------------- frame evolution

// One explicit Euler step dE_a/dt = -1/2 B^sharp(E_a) of size dt; returns
// max |g_dt(E_a, E_b) - eps_a delta_ab| over the grid.
template <int N>
double frame_evolution_check_n(const Scenario& sc, const std::vector<double>& dir, double dt, const ExecPolicy& pol) {
  const MetricField g0 = sc.field(sc.theta);
  std::vector<double> th = sc.theta;
  for (std::size_t m = 0; m < th.size(); ++m) th[m] += dt * dir[m];
  const MetricField g1 = sc.field(th);
  const std::size_t np = sc.chart.num_points();
  std::vector<double> worst(np);
  parallel_for(np, pol, [&](std::size_t p) {
    const auto x = sc.chart.point(p);
    const auto pg = point_geometry<N>(x, g0, &dir);
    const auto gt = g1.values<N>(x);
    Mat<double, N> En{};
    for (int a = 0; a < N; ++a)
      for (int m = 0; m < N; ++m) {
        double s = pg.E[a][m];
        for (int b = 0; b < N; ++b) s -= 0.5 * dt * pg.eps[b] * pg.B[a][b].v * pg.E[b][m];
        En[a][m] = s;
      }
    double w = 0.0;
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) {
        double s = 0.0;
        for (int m = 0; m < N; ++m)
          for (int n = 0; n < N; ++n) s += gt[m][n] * En[a][m] * En[b][n];
        w = std::max(w, std::abs(s - (a == b ? pg.eps[a] : 0.0)));
      }
    worst[p] = w;
  });
  return *std::max_element(worst.begin(), worst.end());
}

inline double frame_evolution_check(const Scenario& sc, const std::vector<double>& dir, double dt = 1e-3,
                                    const ExecPolicy& pol = {}) {
  return with_dimension(sc.chart.n, [&]<int N>() { return frame_evolution_check_n<N>(sc, dir, dt, pol); });
}

// ------------------------------------------------- per-point EL structure

template <int N>
struct ELPoint {
  std::vector<Mat<double, N>> U;      // left side of the EL equation, direct assembly
  std::vector<Mat<double, N>> U_alt;  // same through partial Ricci tensors
  std::vector<double> c;              // scalar coefficient of g_j in the first variation
  std::vector<double> rhs_unmodified;      // S_mix - Div(H_j + sum_{i != j} H_i^perp)
  std::vector<Mask<N>> D;
  std::vector<double> div_Hperp_minus_H;  // Div(H_j^perp - H_j)
  std::array<double, N> eps{};
  double S_mix = 0.0;
};

// Coordinate-free helpers on frame (1,2)-tensors and vectors with partials.
template <int N>
FrameVec<N> add_vec(const FrameVec<N>& a, const FrameVec<N>& b, double sb = 1.0) {
  FrameVec<N> r{};
  for (int c = 0; c < N; ++c) r[c] = a[c] + b[c] * sb;
  return r;
}

template <int N>
Vec<double, N> project_vec(const Vec<double, N>& x, const Mask<N>& D) {
  Vec<double, N> r{};
  for (int c = 0; c < N; ++c) r[c] = D[c] ? x[c] : 0.0;
  return r;
}

template <int N>
ELPoint<N> el_point(const PointGeometry<N>& pg) {
  const auto all = PointGeometry<N>::all();
  const int k = pg.k;
  std::vector<BlockData<N>> bd;
  for (int i = 0; i < k; ++i) bd.push_back(block_data(pg, i));
  const double S = mixed_scalar(pg).S_mix;

  FrameVec<N> total{};
  for (int i = 0; i < k; ++i) total = add_vec<N>(total, add_vec<N>(bd[i].f.H, bd[i].f.H_perp));
  const double div_total = divergence(pg, total, all);

  ELPoint<N> e;
  e.S_mix = S;
  e.eps = pg.eps;
  for (int j = 0; j < k; ++j) {
    const auto& b = bd[static_cast<std::size_t>(j)];
    const Mask<N>& Dj = b.D;
    e.D.push_back(Dj);

    // direct assembly
    Mat<double, N> U = operator_sum<N>({{1.0, divergence(pg, b.f.h, all)},
                                        {1.0, flat(pg, b.q.kappa)},
                                        {-0.5, upsilon(pg, b.hp, b.hp)},
                                        {1.0, flat_square(pg, b.Hp)},
                                        {-0.5, upsilon(pg, b.Tp, b.Tp)},
                                        {-2.0, flat(pg, b.q.casorati_T)}});
    // through partial Ricci tensors
    Mat<double, N> V = operator_sum<N>({{1.0, partial_ricci(pg, b.P)},
                                        {-1.0, pair_with(pg, b.h, b.H)},
                                        {1.0, flat(pg, b.q.casorati_A)},
                                        {-1.0, flat(pg, b.q.casorati_T)},
                                        {1.0, b.q_perp.psi},
                                        {-1.0, deformation(pg, b.f.H_perp, Dj)},
                                        {1.0, flat(pg, b.q.kappa)},
                                        {1.0, flat_square(pg, b.Hp)},
                                        {-0.5, upsilon(pg, b.hp, b.hp)},
                                        {-0.5, upsilon(pg, b.Tp, b.Tp)}});
    FrameVec<N> side = b.f.H;
    for (int i = 0; i < k; ++i) {
      if (i == j) continue;
      const auto& o = bd[static_cast<std::size_t>(i)];
      const auto Pjh = project_values(o.h, Dj);
      const auto PjT = project_values(o.T, Dj);
      const auto PjH = project_vec<N>(o.H, Dj);
      const auto common = operator_sum<N>({{1.0, flat(pg, o.q_perp.kappa)},
                                           {1.0, flat_square(pg, PjH)},
                                           {-0.5, upsilon(pg, Pjh, Pjh)},
                                           {-0.5, upsilon(pg, PjT, PjT)}});
      U = operator_sum<N>({{1.0, U},
                           {1.0, divergence(pg, o.f.h_perp, all)},
                           {1.0, common},
                           {-2.0, flat(pg, o.q_perp.casorati_T)}});
      V = operator_sum<N>({{1.0, V},
                           {1.0, partial_ricci(pg, o.D)},
                           {-1.0, pair_with(pg, o.hp, o.Hp)},
                           {1.0, flat(pg, o.q_perp.casorati_A)},
                           {-1.0, flat(pg, o.q_perp.casorati_T)},
                           {1.0, o.q.psi},
                           {-1.0, deformation(pg, o.f.H, Dj)},
                           {1.0, common}});
      side = add_vec<N>(side, o.f.H_perp);
    }
    e.U.push_back(restrict_to(U, Dj));
    e.U_alt.push_back(restrict_to(V, Dj));
    const double div_side = divergence(pg, side, all);
    e.c.push_back(S + div_side - 0.5 * div_total);
    e.rhs_unmodified.push_back(S - div_side);
    e.div_Hperp_minus_H.push_back(divergence(pg, add_vec<N>(b.f.H_perp, b.f.H, -1.0), all));
  }
  return e;
}

// <-U_j + c_j g_j, B_j> / 2 summed over blocks: the first-variation density.
template <int N>
double first_variation_density(const PointGeometry<N>& pg, const ELPoint<N>& e) {
  const auto B = mat_values<N>(pg.B);
  double s = 0.0;
  for (int j = 0; j < pg.k; ++j) {
    const auto Bj = restrict_to(B, e.D[static_cast<std::size_t>(j)]);
    const auto gj = metric_on(pg, e.D[static_cast<std::size_t>(j)]);
    s += 0.5 * (dot(pg, Bj, gj) * e.c[static_cast<std::size_t>(j)] - dot(pg, Bj, e.U[static_cast<std::size_t>(j)]));
  }
  return s;
}

// The divergence terms dropped from the pointwise variation of the
// integrand: Div of sum_j (<h_j, B_j> - tr(B_j) H_j) + sum_{i != j} (<h_i^perp, B_j> - tr(B_j) H_i^perp).
template <int N>
double dropped_divergence(const PointGeometry<N>& pg) {
  const auto all = PointGeometry<N>::all();
  FrameVec<N> Y{};
  for (int j = 0; j < pg.k; ++j) {
    const auto Dj = pg.block(j);
    Jet1<N> trB(0.0);
    for (int a = 0; a < N; ++a)
      if (Dj[a]) trB += pg.B[a][a] * pg.eps[a];
    for (int i = 0; i < pg.k; ++i) {
      const auto f = fundamental_forms(pg, pg.block(i));
      const FrameT3<N>& q = i == j ? f.h : f.h_perp;
      const FrameVec<N>& H = i == j ? f.H : f.H_perp;
      for (int c = 0; c < N; ++c) {
        Jet1<N> v(0.0);
        for (int a = 0; a < N; ++a)
          for (int b = 0; b < N; ++b)
            if (Dj[a] && Dj[b]) v += pg.B[a][b] * q[c][a][b] * (pg.eps[a] * pg.eps[b]);
        Y[c] += v - trB * H[c];
      }
    }
  }
  return divergence(pg, Y, all);
}

// ------------------------------------------------------- variation suite

struct VariationCheck {
  std::string name;
  std::vector<double> lhs;  // central FD in t, step delta
  std::vector<double> rhs;  // analytic right side at t = 0
  double rel_error = 0.0;   // max |lhs - rhs| / max(scale, floor)
  double richardson_gap = 0.0;  // max |D(delta) - Richardson(delta, delta/2)| / max(scale, floor)
  bool oracle_ok = true;
};

struct VariationSuiteReport {
  int block = 0;  // j of the D_j-variation
  std::vector<VariationCheck> checks;
  double delta = 1e-3;
  double scale_floor = 1e-6;
};

namespace detail {

// Scalars whose t-derivatives are checked, in the order of variation_rhs.
template <int N>
std::vector<double> variation_scalars(const PointGeometry<N>& pg, int j) {
  std::vector<double> q;
  auto push = [&](const QuadraticInvariants<N>& v) {
    q.insert(q.end(), {v.h_perp_sq, v.h_sq, v.H_perp_sq, v.H_sq, v.T_perp_sq, v.T_sq});
  };
  push(block_data(pg, j).q);
  for (int i = 0; i < pg.k; ++i)
    if (i != j) push(block_data(pg, i).q);
  q.push_back(pg.vol_density);
  FrameVec<N> X{};
  for (int i = 0; i < pg.k; ++i) {
    const auto f = fundamental_forms(pg, pg.block(i));
    X = add_vec<N>(X, add_vec<N>(f.H, f.H_perp));
  }
  q.push_back(divergence(pg, X, PointGeometry<N>::all()));
  return q;
}

inline std::vector<std::string> variation_names(int k, int j) {
  const std::string J = std::to_string(j + 1);
  std::vector<std::string> n = {"d<h_j^perp,h_j^perp>", "d<h_j,h_j>", "d g(H_j^perp,H_j^perp)",
                                "d g(H_j,H_j)",         "d<T_j^perp,T_j^perp>", "d<T_j,T_j>"};
  for (auto& s : n) s += "[j=" + J + "]";
  for (int i = 0; i < k; ++i) {
    if (i == j) continue;
    const std::string I = "[j=" + J + ",i=" + std::to_string(i + 1) + "]";
    for (const char* s : {"d<h_i^perp,h_i^perp>", "d<h_i,h_i>", "d g(H_i^perp,H_i^perp)", "d g(H_i,H_i)",
                          "d<T_i^perp,T_i^perp>", "d<T_i,T_i>"})
      n.push_back(std::string(s) + I);
  }
  n.push_back("dvol");
  n.push_back("d Div X");
  return n;
}

// Coordinate components (with partials) of a frame vector field.
template <int N>
std::array<Jet1<N>, N> coordinate_field(const PointGeometry<N>& pg, const FrameVec<N>& X) {
  std::array<Jet1<N>, N> r{};
  for (int m = 0; m < N; ++m)
    for (int c = 0; c < N; ++c) r[m] += X[c] * truncate(pg.frame.E[c][m]);
  return r;
}

template <int N>
FrameVec<N> total_mean_curvature(const PointGeometry<N>& pg) {
  FrameVec<N> X{};
  for (int i = 0; i < pg.k; ++i) {
    const auto f = fundamental_forms(pg, pg.block(i));
    X = add_vec<N>(X, add_vec<N>(f.H, f.H_perp));
  }
  return X;
}

}  // namespace detail

// Analytic right sides of the variation formulas at t = 0 for a D_j-variation.
// The last entry (d Div X) needs dX/dt and is filled in by the suite.
template <int N>
std::vector<double> variation_rhs(const PointGeometry<N>& pg, int j) {
  const auto all = PointGeometry<N>::all();
  const auto Dj = pg.block(j);
  const auto B = mat_values<N>(pg.B);
  const auto Bj = restrict_to(B, Dj);
  const auto gj = metric_on(pg, Dj);
  Jet1<N> trB(0.0);
  for (int a = 0; a < N; ++a)
    if (Dj[a]) trB += pg.B[a][a] * pg.eps[a];
  // <Q, B_j> as a vector field, with partials
  auto contract = [&](const FrameT3<N>& q) {
    FrameVec<N> v{};
    for (int c = 0; c < N; ++c)
      for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b)
          if (Dj[a] && Dj[b]) v[c] += pg.B[a][b] * q[c][a][b] * (pg.eps[a] * pg.eps[b]);
    return v;
  };
  auto scaled = [&](const FrameVec<N>& H) {
    FrameVec<N> v{};
    for (int c = 0; c < N; ++c) v[c] = trB * H[c];
    return v;
  };

  std::vector<double> r;
  const auto b = block_data(pg, j);
  r.push_back(-0.5 * dot(pg, upsilon(pg, b.hp, b.hp), Bj));
  r.push_back(dot(pg, operator_sum<N>({{1.0, divergence(pg, b.f.h, all)}, {1.0, flat(pg, b.q.kappa)}}), Bj) -
              divergence(pg, contract(b.f.h), all));
  r.push_back(-dot(pg, flat_square(pg, b.Hp), Bj));
  r.push_back(divergence(pg, b.f.H, all) * dot(pg, gj, Bj) - divergence(pg, scaled(b.f.H), all));
  r.push_back(0.5 * dot(pg, upsilon(pg, b.Tp, b.Tp), Bj));
  r.push_back(2.0 * dot(pg, flat(pg, b.q.casorati_T), Bj));
  for (int i = 0; i < pg.k; ++i) {
    if (i == j) continue;
    const auto o = block_data(pg, i);
    r.push_back(dot(pg, operator_sum<N>({{1.0, divergence(pg, o.f.h_perp, all)}, {1.0, flat(pg, o.q_perp.kappa)}}), Bj) -
                divergence(pg, contract(o.f.h_perp), all));
    r.push_back(-0.5 * dot(pg, upsilon(pg, o.h, o.h), Bj));
    r.push_back(divergence(pg, o.f.H_perp, all) * dot(pg, gj, Bj) - divergence(pg, scaled(o.f.H_perp), all));
    r.push_back(-dot(pg, flat_square(pg, o.H), Bj));
    r.push_back(2.0 * dot(pg, flat(pg, o.q_perp.casorati_T), Bj));
    r.push_back(0.5 * dot(pg, upsilon(pg, o.T, o.T), Bj));
  }
  r.push_back(0.5 * trace(pg, B) * pg.vol_density);
  r.push_back(0.0);
  return r;
}

template <int N>
VariationSuiteReport variation_suite_n(const Scenario& sc, const std::vector<double>& dir, double delta,
                                       const ExecPolicy& pol) {
  VariationSuiteReport rep;
  rep.delta = delta;
  rep.block = dj_block(sc.family, dir);
  const int j = rep.block;
  const int k = sc.family.k();
  const auto names = detail::variation_names(k, j);
  const std::size_t nc = names.size();
  const std::size_t np = sc.chart.num_points();

  auto shifted = [&](double t) {
    std::vector<double> th = sc.theta;
    for (std::size_t m = 0; m < th.size(); ++m) th[m] += t * dir[m];
    return th;
  };
  const MetricField g0 = sc.field(sc.theta);
  const std::array<double, 4> offs = {delta, -delta, 0.5 * delta, -0.5 * delta};
  std::vector<MetricField> gs;
  for (double t : offs) gs.push_back(sc.field(shifted(t)));

  std::vector<std::vector<double>> lhs(nc, std::vector<double>(np)), lhs2(nc, std::vector<double>(np)),
      rhs(nc, std::vector<double>(np));
  std::vector<char> bad(np, 0);
  parallel_for(np, pol, [&](std::size_t p) {
    const auto x = sc.chart.point(p);
    const auto mj = g0.jets<N>(x, &dir);
    const auto pg = geometry_from_jets<N>(x, mj, sc.family.split);
    // B must live on D_j x D_j
    double bmax = 0.0, off = 0.0;
    const auto Dj = pg.block(j);
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) {
        bmax = std::max(bmax, std::abs(pg.B[a][b].v));
        if (!(Dj[a] && Dj[b])) off = std::max(off, std::abs(pg.B[a][b].v));
      }
    if (off > 1e-10 * std::max(1.0, bmax)) bad[p] = 1;

    std::array<std::vector<double>, 4> q;
    std::array<std::array<Jet1<N>, N>, 4> X;
    for (std::size_t s = 0; s < 4; ++s) {
      const auto pgs = point_geometry<N>(x, gs[s]);
      q[s] = detail::variation_scalars(pgs, j);
      X[s] = detail::coordinate_field(pgs, detail::total_mean_curvature(pgs));
    }
    auto r = variation_rhs(pg, j);
    // dtdiv: Div(dX/dt) + 1/2 X(tr_g B)
    std::array<Jet1<N>, N> dX{};
    for (int m = 0; m < N; ++m) {
      const Jet1<N> d1 = (X[0][m] - X[1][m]) * (1.0 / (2.0 * delta));
      const Jet1<N> d2 = (X[2][m] - X[3][m]) * (1.0 / delta);
      dX[m] = (4.0 * d2 - d1) * (1.0 / 3.0);
    }
    const auto dXf = frame_components(pg, mj, dX);
    Jet1<N> trB(0.0);
    for (int a = 0; a < N; ++a) trB += pg.B[a][a] * pg.eps[a];
    const auto Xf = detail::total_mean_curvature(pg);
    double Xtr = 0.0;
    for (int c = 0; c < N; ++c) Xtr += Xf[c].v * pg.along(trB, c);
    r.back() = divergence(pg, dXf, PointGeometry<N>::all()) + 0.5 * Xtr;

    for (std::size_t c = 0; c < nc; ++c) {
      lhs[c][p] = (q[0][c] - q[1][c]) / (2.0 * delta);
      lhs2[c][p] = (q[2][c] - q[3][c]) / delta;
      rhs[c][p] = r[c];
    }
  });
  for (std::size_t p = 0; p < np; ++p)
    if (bad[p]) throw NotDjVariation("variation tensor has components outside D_j x D_j");

  for (std::size_t c = 0; c < nc; ++c) {
    VariationCheck ch;
    ch.name = names[c];
    double scale = 0.0, err = 0.0, gap = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
      scale = std::max({scale, std::abs(lhs[c][p]), std::abs(rhs[c][p])});
      err = std::max(err, std::abs(lhs[c][p] - rhs[c][p]));
      const double rich = (4.0 * lhs2[c][p] - lhs[c][p]) / 3.0;
      gap = std::max(gap, std::abs(lhs[c][p] - rich));
    }
    const double denom = std::max(scale, rep.scale_floor);
    ch.rel_error = err / denom;
    ch.richardson_gap = gap / denom;
    ch.oracle_ok = ch.richardson_gap < 1e-5;
    ch.lhs = std::move(lhs[c]);
    ch.rhs = std::move(rhs[c]);
    rep.checks.push_back(std::move(ch));
  }
  return rep;
}

inline VariationSuiteReport variation_suite(const Scenario& sc, const std::vector<double>& dir, double delta = 1e-3,
                                            const ExecPolicy& pol = {}) {
  return with_dimension(sc.chart.n, [&]<int N>() { return variation_suite_n<N>(sc, dir, delta, pol); });
}

// ------------------------------------------------------- first variation

struct FirstVariationReport {
  double lhs = 0.0;  // central FD of J = int S_mix dvol along the direction
  double rhs = 0.0;  // quadrature of the first-variation density
  double rhs_unmodified = 0.0;  // same pairing with the unmodified coefficient S_mix - Div(H_j + sum H_i^perp)
  double rel_error = 0.0;
  double divergence_integral = 0.0;  // quadrature of the dropped divergence terms
  double divergence_shift = 0.0;     // |rhs with divergence added - rhs|
};

template <int N>
FirstVariationReport first_variation_identity_n(const Scenario& sc, const std::vector<double>& dir, double delta,
                                                const ExecPolicy& pol) {
  ActionConfig geo;
  auto J = [&](double t) {
    std::vector<double> th = sc.theta;
    for (std::size_t m = 0; m < th.size(); ++m) th[m] += t * dir[m];
    return action_value_n<N>(sc, geo, th, pol).total_mixed;
  };
  FirstVariationReport r;
  r.lhs = (J(delta) - J(-delta)) / (2.0 * delta);

  const MetricField g = sc.field(sc.theta);
  const std::size_t np = sc.chart.num_points();
  std::vector<double> dens(np), dens_unmodified(np), divs(np);
  parallel_for(np, pol, [&](std::size_t p) {
    const auto x = sc.chart.point(p);
    const auto pg = point_geometry<N>(x, g, &dir);
    const auto e = el_point(pg);
    const double dv = pg.vol_density * sc.chart.cell_volume();
    dens[p] = first_variation_density(pg, e) * dv;
    const auto B = mat_values<N>(pg.B);
    double sp = 0.0;
    for (int j = 0; j < pg.k; ++j) {
      const auto Bj = restrict_to(B, e.D[static_cast<std::size_t>(j)]);
      sp += e.rhs_unmodified[static_cast<std::size_t>(j)] * dot(pg, Bj, metric_on(pg, e.D[static_cast<std::size_t>(j)])) -
            dot(pg, Bj, e.U[static_cast<std::size_t>(j)]);
    }
    dens_unmodified[p] = sp * dv;
    divs[p] = dropped_divergence(pg) * dv;
  });
  r.rhs = reduce_sum(dens, pol);
  r.rhs_unmodified = reduce_sum(dens_unmodified, pol);
  r.divergence_integral = reduce_sum(divs, pol);
  std::vector<double> shifted(np);
  for (std::size_t p = 0; p < np; ++p) shifted[p] = dens[p] + divs[p];
  r.divergence_shift = std::abs(reduce_sum(shifted, pol) - r.rhs);
  r.rel_error = std::abs(r.lhs - r.rhs) / (std::abs(r.lhs) + std::abs(r.rhs) + 1e-12);
  return r;
}

inline FirstVariationReport first_variation_identity(const Scenario& sc, const std::vector<double>& dir,
                                                     double delta = 1e-3, const ExecPolicy& pol = {}) {
  return with_dimension(sc.chart.n, [&]<int N>() { return first_variation_identity_n<N>(sc, dir, delta, pol); });
}

// Unit-norm random family directions from the scenario seed.
inline std::vector<std::vector<double>> random_directions(const Scenario& sc, int count) {
  std::mt19937_64 rng(sc.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<double>> out;
  for (int c = 0; c < count; ++c) {
    std::vector<double> d(sc.family.num_params());
    double nrm = 0.0;
    for (auto& v : d) {
      v = nd(rng);
      nrm += v * v;
    }
    nrm = std::sqrt(nrm);
    for (auto& v : d) v /= nrm;
    out.push_back(std::move(d));
  }
  return out;
}

// --------------------------------------------------------------- mu-system

struct MuSolution {
  std::vector<double> mu;           // dense solve (or the n = 2 convention)
  std::vector<double> closed_form;  // mu_i = -(sum_j (a_i - a_j) n_j - 2 a_i) / (2n - 4)
  double det = 0.0;                 // det A computed
  double det_formula = 0.0;         // 2^{k-1} (2 - n)
  double system_residual = 0.0;     // max |A mu - a|
};

inline std::vector<std::vector<double>> mu_matrix(const std::vector<int>& dims) {
  const std::size_t k = dims.size();
  std::vector<std::vector<double>> A(k, std::vector<double>(k));
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < k; ++i) A[j][i] = dims[i] - (i == j ? 2.0 : 0.0);
  return A;
}

inline MuSolution mu_solve(int n, const std::vector<int>& dims, const std::vector<double>& a) {
  const std::size_t k = dims.size();
  if (k < 2) throw std::invalid_argument("mu-system needs k >= 2");
  if (a.size() != k) throw std::invalid_argument("mu-system: need one coefficient a_j per distribution");
  int sum = 0;
  for (int d : dims) {
    if (d < 1) throw std::invalid_argument("mu-system: dimensions must be positive");
    sum += d;
  }
  if (sum != n) throw std::invalid_argument("mu-system: dimensions must sum to n");
  if (n == 2 && k > 2) throw UnsupportedDimension("mu-system with n = 2 and k > 2");

  MuSolution s;
  const auto A = mu_matrix(dims);
  s.det = determinant_dense(A);
  s.det_formula = std::ldexp(1.0, static_cast<int>(k) - 1) * (2.0 - n);
  if (n == 2) {
    s.mu.assign(k, 0.0);
    s.closed_form.assign(k, 0.0);
  } else {
    s.mu = solve_dense(A, a);
    s.closed_form.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      double t = -2.0 * a[i];
      for (std::size_t j = 0; j < k; ++j) t += (a[i] - a[j]) * dims[j];
      s.closed_form[i] = -t / (2.0 * n - 4.0);
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    double r = -a[j];
    for (std::size_t i = 0; i < k; ++i) r += A[j][i] * s.mu[i];
    s.system_residual = std::max(s.system_residual, std::abs(r));
  }
  return s;
}

// ------------------------------------------------ EL residual and Einstein

enum class ELMode { free, volume_preserving };

struct ELResidualReport {
  int k = 0;
  std::vector<int> dims;
  ELMode mode = ELMode::free;
  std::vector<double> lambda;         // fitted multipliers (0 in free mode)
  std::vector<double> lambda_spread;  // std of the pointwise multiplier / max(|mean|, 1e-300)
  std::vector<double> residual_max;   // max |U_j - (c_j + lambda_j) g_j|
  std::vector<double> residual_l2;
  std::vector<double> unmodified_residual_max;  // with rhs S_mix - Div(H_j + sum H_i^perp)
  std::vector<double> discrepancy_max;     // direct vs partial-Ricci assembly
  std::vector<std::vector<double>> residual_field;     // [j][p]
  std::vector<std::vector<double>> discrepancy_field;  // [j][p]
  std::vector<std::vector<double>> rhs_field;          // c_j at each point
  // Einstein-type assembly
  bool has_einstein = false;
  std::vector<std::vector<double>> mu;  // [j][p]
  std::vector<double> mu_spread;        // max - min of mu_j over the grid
  std::vector<double> einstein_field;   // max component of Ric_D - S_D g / 2 + Lambda g - a Theta
  double einstein_max = 0.0;
  double mu_example_diff = 0.0;          // k = 2: |mu_j - k = 2 closed forms|
  double mu_example_swapped_diff = 0.0;  // k = 2: same with the labels of mu exchanged
  double SD_example_diff = 0.0;          // k = 2: |S_D - S_mix - (n2 - n1)/(n - 2) Div(H^perp - H)|
  double mu_example_diff_unmodified_rhs = 0.0;  // k = 2: closed forms vs mu built from the unmodified rhs
  double mu_system_residual = 0.0;
};

namespace detail {

template <int N>
double max_abs_mat(const Mat<double, N>& m) {
  double s = 0.0;
  for (const auto& row : m)
    for (double v : row) s = std::max(s, std::abs(v));
  return s;
}

template <int N>
Mat<double, N> theta_frame(const PointGeometry<N>& pg, const ActionConfig& cfg) {
  Mat<double, N> th{};
  if (!cfg.Theta) return th;
  Mat<double, N> c{};
  for (int m = 0; m < N; ++m)
    for (int n = 0; n < N; ++n) c[m][n] = (*cfg.Theta)[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)].eval<double>(std::span<const double>(pg.x), std::span<const double>());
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      for (int m = 0; m < N; ++m)
        for (int n = 0; n < N; ++n) th[a][b] += pg.E[a][m] * pg.E[b][n] * c[m][n];
  return th;
}

}  // namespace detail

template <int N>
ELResidualReport el_residual_n(const Scenario& sc, ELMode mode, bool einstein, const ActionConfig& cfg,
                               const ExecPolicy& pol) {
  const MetricField g = sc.field(sc.theta);
  const std::size_t np = sc.chart.num_points();
  const int k = sc.family.k();
  const auto K = static_cast<std::size_t>(k);
  std::vector<ELPoint<N>> pts(np);
  std::vector<Mat<double, N>> theta(einstein ? np : 0);
  std::vector<double> w(np);
  parallel_for(np, pol, [&](std::size_t p) {
    const auto x = sc.chart.point(p);
    const auto pg = point_geometry<N>(x, g);
    pts[p] = el_point(pg);
    w[p] = pg.vol_density * sc.chart.cell_volume();
    if (einstein) theta[p] = detail::theta_frame(pg, cfg);
  });

  ELResidualReport r;
  r.k = k;
  r.dims = sc.family.split.dims;
  r.mode = mode;
  const double W = reduce_sum(w, pol);
  auto gj = [&](std::size_t p, std::size_t j) {
    Mat<double, N> m{};
    for (int a = 0; a < N; ++a) m[a][a] = pts[p].D[j][a] ? pts[p].eps[a] : 0.0;
    return m;
  };
  auto trU = [&](std::size_t p, std::size_t j) {
    double t = 0.0;
    for (int a = 0; a < N; ++a)
      if (pts[p].D[j][a]) t += pts[p].eps[a] * pts[p].U[j][a][a];
    return t;
  };
  // Least-squares multiplier for the rhs coefficient `coef`, plus spread of the pointwise one.
  auto fit = [&](std::size_t j, const std::function<double(std::size_t)>& coef, double& spread) {
    const double nj = r.dims[j];
    std::vector<double> lw(np), l2(np);
    for (std::size_t p = 0; p < np; ++p) {
      const double l = (trU(p, j) - coef(p) * nj) / nj;
      lw[p] = l * w[p];
      l2[p] = l * l * w[p];
    }
    const double mean = reduce_sum(lw, pol) / W;
    spread = std::sqrt(std::max(0.0, reduce_sum(l2, pol) / W - mean * mean));
    return mean;
  };

  r.lambda.assign(K, 0.0);
  r.lambda_spread.assign(K, 0.0);
  r.residual_field.assign(K, std::vector<double>(np));
  r.discrepancy_field.assign(K, std::vector<double>(np));
  r.rhs_field.assign(K, std::vector<double>(np));
  for (std::size_t j = 0; j < K; ++j) {
    double spread = 0.0, spread_p = 0.0;
    const double lam = fit(j, [&](std::size_t p) { return pts[p].c[j]; }, spread);
    const double lam_p = fit(j, [&](std::size_t p) { return pts[p].rhs_unmodified[j]; }, spread_p);
    r.lambda_spread[j] = spread;
    if (mode == ELMode::volume_preserving) r.lambda[j] = lam;
    const double lp = mode == ELMode::volume_preserving ? lam_p : 0.0;
    double rmax = 0.0, pmax = 0.0, dmax = 0.0;
    std::vector<double> sq(np);
    for (std::size_t p = 0; p < np; ++p) {
      const auto G = gj(p, j);
      const double res = detail::max_abs_mat<N>(operator_sum<N>({{1.0, pts[p].U[j]}, {-(pts[p].c[j] + r.lambda[j]), G}}));
      const double resp = detail::max_abs_mat<N>(operator_sum<N>({{1.0, pts[p].U[j]}, {-(pts[p].rhs_unmodified[j] + lp), G}}));
      const double dis = detail::max_abs_mat<N>(operator_sum<N>({{1.0, pts[p].U[j]}, {-1.0, pts[p].U_alt[j]}}));
      r.residual_field[j][p] = res;
      r.discrepancy_field[j][p] = dis;
      r.rhs_field[j][p] = pts[p].c[j];
      rmax = std::max(rmax, res);
      pmax = std::max(pmax, resp);
      dmax = std::max(dmax, dis);
      sq[p] = res * res * w[p];
    }
    r.residual_max.push_back(rmax);
    r.residual_l2.push_back(std::sqrt(reduce_sum(sq, pol)));
    r.unmodified_residual_max.push_back(pmax);
    r.discrepancy_max.push_back(dmax);
  }
  if (!einstein) return r;

  r.has_einstein = true;
  const int n = sc.chart.n;
  r.mu.assign(K, std::vector<double>(np));
  r.einstein_field.assign(np, 0.0);
  for (std::size_t p = 0; p < np; ++p) {
    double tr_sum = 0.0;
    for (std::size_t i = 0; i < K; ++i) tr_sum += trU(p, i);
    std::vector<double> a(K);
    for (std::size_t j = 0; j < K; ++j) a[j] = 2.0 * (pts[p].c[j] + r.lambda[j]) - tr_sum;
    const auto sol = mu_solve(n, r.dims, a);
    r.mu_system_residual = std::max(r.mu_system_residual, sol.system_residual);
    Mat<double, N> ric{}, gfull{};
    double SD = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      r.mu[j][p] = sol.mu[j];
      const auto G = gj(p, j);
      ric = operator_sum<N>({{1.0, ric}, {1.0, pts[p].U[j]}, {sol.mu[j], G}});
      gfull = operator_sum<N>({{1.0, gfull}, {1.0, G}});
      SD += trU(p, j) + sol.mu[j] * r.dims[j];
    }
    const auto E = operator_sum<N>({{1.0, ric}, {-0.5 * SD + cfg.Lambda, gfull}, {-cfg.coupling, theta[p]}});
    r.einstein_field[p] = detail::max_abs_mat<N>(E);
    r.einstein_max = std::max(r.einstein_max, r.einstein_field[p]);
    if (K == 2 && n > 2) {
      const double d = pts[p].div_Hperp_minus_H[0];
      const double n1 = r.dims[0], n2 = r.dims[1];
      const double m1 = -(n1 - 1.0) / (n - 2.0) * d, m2 = (n2 - 1.0) / (n - 2.0) * d;
      r.mu_example_diff = std::max({r.mu_example_diff, std::abs(sol.mu[0] - m1), std::abs(sol.mu[1] - m2)});
      r.mu_example_swapped_diff =
          std::max({r.mu_example_swapped_diff, std::abs(sol.mu[1] - m1), std::abs(sol.mu[0] - m2)});
      r.SD_example_diff = std::max(r.SD_example_diff, std::abs(SD - pts[p].S_mix - (n2 - n1) / (n - 2.0) * d));
      std::vector<double> ap(K);
      for (std::size_t j = 0; j < K; ++j) ap[j] = 2.0 * pts[p].rhs_unmodified[j] - tr_sum;
      const auto solp = mu_solve(n, r.dims, ap);
      r.mu_example_diff_unmodified_rhs =
          std::max({r.mu_example_diff_unmodified_rhs, std::abs(solp.mu[0] - m1), std::abs(solp.mu[1] - m2)});
    }
  }
  r.mu_spread.assign(K, 0.0);
  for (std::size_t j = 0; j < K; ++j) {
    const auto [lo, hi] = std::minmax_element(r.mu[j].begin(), r.mu[j].end());
    r.mu_spread[j] = *hi - *lo;
  }
  return r;
}

inline ELResidualReport el_residual(const Scenario& sc, ELMode mode, const ExecPolicy& pol = {}) {
  return with_dimension(sc.chart.n, [&]<int N>() { return el_residual_n<N>(sc, mode, false, sc.action, pol); });
}

inline ELResidualReport assemble_einstein(const Scenario& sc, const ActionConfig& cfg, ELMode mode,
                                          const ExecPolicy& pol = {}) {
  return with_dimension(sc.chart.n, [&]<int N>() { return el_residual_n<N>(sc, mode, true, cfg, pol); });
}

// --------------------------------------------------------------- optimizer

struct OptimizeResult {
  std::vector<double> theta;
  double value = 0.0;
  double grad_norm = 0.0;
  double grad_norm_recheck = 0.0;  // with half the FD step
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
  std::string method = "gradient";
};

inline OptimizeResult optimize(const Scenario& sc, const ActionConfig& cfg, const OptimizeOptions& opt = {},
                               const ExecPolicy& pol = {}) {
  const std::size_t p = sc.family.num_params();
  OptimizeResult res;
  double vol0 = 0.0;
  auto F = [&](const std::vector<double>& th) {
    ++res.evaluations;
    const auto a = action_value(sc, cfg, th, pol);
    if (!opt.volume_constraint) return a.value;
    const double lv = std::log(a.volume / vol0);
    return a.value + opt.penalty * lv * lv;
  };
  if (opt.volume_constraint) vol0 = action_value(sc, cfg, sc.theta, pol).volume;
  auto grad = [&](const std::vector<double>& th, double h) {
    std::vector<double> gr(p);
    for (std::size_t m = 0; m < p; ++m) {
      auto a = th, b = th;
      a[m] += h;
      b[m] -= h;
      gr[m] = (F(a) - F(b)) / (2.0 * h);
    }
    return gr;
  };
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };

  std::vector<double> th = sc.theta;
  double f = F(th);
  double step = 1.0;
  bool stalled = false;
  while (res.evaluations < opt.max_evals) {
    const auto gr = grad(th, opt.fd_step);
    res.grad_norm = norm(gr);
    if (res.grad_norm < opt.grad_tol) {
      res.converged = true;
      break;
    }
    // Armijo backtracking
    bool accepted = false;
    for (int ls = 0; ls < 40 && res.evaluations < opt.max_evals; ++ls) {
      std::vector<double> cand(p);
      for (std::size_t m = 0; m < p; ++m) cand[m] = th[m] - step * gr[m];
      double fc;
      try {
        fc = F(cand);
      } catch (const NumericalFault&) {
        step *= 0.5;
        continue;
      }
      if (fc <= f - 1e-4 * step * res.grad_norm * res.grad_norm) {
        th = cand;
        f = fc;
        accepted = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    ++res.iterations;
    if (!accepted) {
      stalled = true;
      break;
    }
  }

  if (!res.converged && stalled && res.evaluations < opt.max_evals) {
    // Nelder-Mead on the remaining budget
    res.method = "nelder-mead";
    std::vector<std::vector<double>> s(p + 1, th);
    std::vector<double> fs(p + 1, f);
    for (std::size_t m = 0; m < p; ++m) {
      s[m + 1][m] += 0.05 * std::max(1.0, std::abs(th[m]));
      fs[m + 1] = F(s[m + 1]);
    }
    while (res.evaluations + 2 < opt.max_evals) {
      std::vector<std::size_t> idx(p + 1);
      for (std::size_t i = 0; i <= p; ++i) idx[i] = i;
      std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return fs[x] < fs[y]; });
      const auto best = idx.front(), worst = idx.back();
      if (std::abs(fs[worst] - fs[best]) < 1e-14 * (1.0 + std::abs(fs[best]))) break;
      std::vector<double> cen(p, 0.0);
      for (std::size_t i = 0; i <= p; ++i)
        if (i != worst)
          for (std::size_t m = 0; m < p; ++m) cen[m] += s[i][m] / static_cast<double>(p);
      auto along = [&](double t) {
        std::vector<double> v(p);
        for (std::size_t m = 0; m < p; ++m) v[m] = cen[m] + t * (s[worst][m] - cen[m]);
        return v;
      };
      const auto xr = along(-1.0);
      const double fr = F(xr);
      if (fr < fs[best]) {
        const auto xe = along(-2.0);
        const double fe = F(xe);
        if (fe < fr) s[worst] = xe, fs[worst] = fe;
        else s[worst] = xr, fs[worst] = fr;
      } else if (fr < fs[idx[p - 1]]) {
        s[worst] = xr, fs[worst] = fr;
      } else {
        const auto xc = along(0.5);
        const double fc = F(xc);
        if (fc < fs[worst]) {
          s[worst] = xc, fs[worst] = fc;
        } else {
          for (std::size_t i = 0; i <= p; ++i) {
            if (i == best) continue;
            for (std::size_t m = 0; m < p; ++m) s[i][m] = s[best][m] + 0.5 * (s[i][m] - s[best][m]);
            fs[i] = F(s[i]);
          }
        }
      }
      ++res.iterations;
    }
    const auto bi = static_cast<std::size_t>(std::min_element(fs.begin(), fs.end()) - fs.begin());
    th = s[bi];
    f = fs[bi];
    if (res.evaluations + 2 * static_cast<int>(p) <= opt.max_evals) {
      res.grad_norm = norm(grad(th, opt.fd_step));
      res.converged = res.grad_norm < opt.grad_tol;
    }
  }
  res.theta = th;
  res.value = f;
  // stationarity re-check with half the step (not counted against the budget)
  const int used = res.evaluations;
  res.grad_norm_recheck = norm(grad(th, 0.5 * opt.fd_step));
  res.evaluations = used;
  return res;
}

}  // namespace mixedcurv
