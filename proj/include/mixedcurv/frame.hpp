#pragma once

// Blockwise Gram-Schmidt adapted frames, carried in Jet2 so that the frame
// vectors come with their first and second coordinate partials.

#include <array>
#include <cmath>
#include <string>

#include "mixedcurv/jet.hpp"
#include "mixedcurv/linalg.hpp"
#include "mixedcurv/metric.hpp"

namespace mixedcurv {

class DegenerateBlock : public NumericalFault {
 public:
  using NumericalFault::NumericalFault;
};

inline constexpr double kTolPivot = 1e-10;

template <int N>
struct AdaptedFrame {
  Mat<Jet2<N>, N> E{};  // E[a][mu]
  std::array<double, N> eps{};
  std::array<int, N> block_of{};
};

template <int N, class S>
S metric_pair(const Mat<S, N>& g, const std::array<S, N>& x, const std::array<S, N>& y) {
  S s(0.0);
  for (int m = 0; m < N; ++m) {
    if (is_exact_zero(x[m])) continue;
    for (int n = 0; n < N; ++n)
      if (!is_exact_zero(y[n]) && !is_exact_zero(g[m][n])) s += g[m][n] * x[m] * y[n];
  }
  return s;
}

// Two-pass modified Gram-Schmidt inside each block of the splitting.
template <int N>
AdaptedFrame<N> orthonormalize(const Mat<Jet2<N>, N>& g, const Mat<Jet2<N>, N>& seeds, const SplittingFrame& split) {
  AdaptedFrame<N> fr;
  for (int a = 0; a < N; ++a) {
    const int blk = split.block_of(a);
    const int start = split.block_start(blk);
    fr.block_of[a] = blk;
    std::array<Jet2<N>, N> v = seeds[a];
    for (int pass = 0; pass < 2; ++pass)
      for (int b = start; b < a; ++b) {
        const Jet2<N> c = metric_pair<N>(g, v, fr.E[b]) * fr.eps[b];
        if (is_exact_zero(c)) continue;
        for (int m = 0; m < N; ++m) v[m] -= c * fr.E[b][m];
      }
    const Jet2<N> q = metric_pair<N>(g, v, v);
    if (!(std::abs(q.v) >= kTolPivot))
      throw DegenerateBlock("Gram-Schmidt pivot below tolerance in block " + std::to_string(blk + 1));
    fr.eps[a] = q.v > 0 ? 1.0 : -1.0;
    const Jet2<N> inv = 1.0 / sqrt(q * fr.eps[a]);
    for (int m = 0; m < N; ++m) fr.E[a][m] = is_exact_zero(v[m]) ? Jet2<N>(0.0) : v[m] * inv;
  }
  return fr;
}

// P_i X (or P_i^perp X) for a coordinate vector X at the base point.
template <int N>
std::array<double, N> project(int i, const Vec<double, N>& X, const AdaptedFrame<N>& fr,
                              const Mat<double, N>& g, bool complement) {
  std::array<double, N> p{};
  for (int a = 0; a < N; ++a) {
    if (fr.block_of[a] != i) continue;
    std::array<double, N> e{};
    for (int m = 0; m < N; ++m) e[m] = fr.E[a][m].v;
    const double c = fr.eps[a] * metric_pair<N>(g, X, e);
    for (int m = 0; m < N; ++m) p[m] += c * e[m];
  }
  if (complement)
    for (int m = 0; m < N; ++m) p[m] = X[m] - p[m];
  return p;
}

}  // namespace mixedcurv
