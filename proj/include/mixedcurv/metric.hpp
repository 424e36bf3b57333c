#pragma once

// Splittings, adapted metric families and jet evaluation of the metric.
//
// A family fixes k blocks of smooth seed vector fields F_a (block i spans
// D_i) and, per block, a symmetric coefficient matrix G_i(x; theta) in the
// coframe dual to the seeds. The coordinate metric is
//     g = sum_i sum_{a,b in block i} G_i[a][b] theta^a (x) theta^b,
// so the distributions are pairwise orthogonal for every theta.

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "mixedcurv/chart.hpp"
#include "mixedcurv/expr.hpp"
#include "mixedcurv/jet.hpp"
#include "mixedcurv/linalg.hpp"

namespace mixedcurv {

class DegenerateMetric : public NumericalFault {
 public:
  using NumericalFault::NumericalFault;
};

class InadmissibleTheta : public NumericalFault {
 public:
  using NumericalFault::NumericalFault;
};

inline constexpr double kTolDegenerate = 1e-10;

struct SplittingFrame {
  std::vector<int> dims;
  // seeds[a][mu]: coordinate component mu of seed a; seeds are grouped by block.
  std::vector<std::vector<Expr>> seeds;

  int n() const { return static_cast<int>(seeds.size()); }
  int k() const { return static_cast<int>(dims.size()); }

  int block_of(int a) const {
    int acc = 0;
    for (int i = 0; i < k(); ++i) {
      acc += dims[static_cast<std::size_t>(i)];
      if (a < acc) return i;
    }
    throw std::out_of_range("frame index outside splitting");
  }
  int block_start(int i) const {
    int acc = 0;
    for (int j = 0; j < i; ++j) acc += dims[static_cast<std::size_t>(j)];
    return acc;
  }

  static SplittingFrame coordinate(std::vector<int> dims) {
    SplittingFrame s;
    int n = 0;
    for (int d : dims) n += d;
    s.dims = std::move(dims);
    s.seeds.assign(static_cast<std::size_t>(n), std::vector<Expr>(static_cast<std::size_t>(n)));
    for (int a = 0; a < n; ++a) s.seeds[static_cast<std::size_t>(a)][static_cast<std::size_t>(a)] = Expr::constant(1.0);
    return s;
  }

  void validate() const {
    if (k() < 2) throw std::invalid_argument("splitting needs k >= 2 distributions");
    int sum = 0;
    for (int d : dims) {
      if (d < 1) throw std::invalid_argument("distribution dimensions must be positive");
      sum += d;
    }
    if (sum != n()) throw std::invalid_argument("sum of distribution dimensions must equal n");
    for (const auto& s : seeds)
      if (static_cast<int>(s.size()) != n()) throw std::invalid_argument("seed vectors must have n components");
  }
};

struct MetricFamily {
  std::string name;
  SplittingFrame split;
  // blocks[i][a][b]: entry (a, b) of G_i, local indices within block i.
  std::vector<std::vector<std::vector<Expr>>> blocks;
  std::vector<std::string> param_names;
  std::vector<double> theta0;
  // Optional support window: parameter m acts as theta0_m + (theta_m - theta0_m) w(x).
  std::optional<Expr> window;
  bool volume_preserving = false;

  int n() const { return split.n(); }
  int k() const { return split.k(); }
  std::size_t num_params() const { return param_names.size(); }

  void validate() const {
    split.validate();
    if (static_cast<int>(blocks.size()) != k()) throw std::invalid_argument("need one coefficient block per distribution");
    for (int i = 0; i < k(); ++i) {
      const auto& G = blocks[static_cast<std::size_t>(i)];
      const auto d = static_cast<std::size_t>(split.dims[static_cast<std::size_t>(i)]);
      if (G.size() != d) throw std::invalid_argument("coefficient block has wrong size");
      for (const auto& row : G)
        if (row.size() != d) throw std::invalid_argument("coefficient block has wrong size");
    }
    if (theta0.size() != param_names.size()) throw std::invalid_argument("theta0 size must match parameter list");
  }

  // Blocks whose coefficients depend on parameter m.
  std::vector<int> blocks_using_param(int m) const {
    std::vector<int> out;
    for (int i = 0; i < k(); ++i) {
      bool uses = false;
      for (const auto& row : blocks[static_cast<std::size_t>(i)])
        for (const auto& e : row) uses = uses || uses_param(e, m);
      if (uses) out.push_back(i);
    }
    return out;
  }

 private:
  static bool uses_param(const Expr& e, int m) {
    // Probe by perturbing only parameter m at a generic point.
    const int np = std::max(e.max_param(), m) + 1;
    if (e.max_param() < m) return false;
    std::vector<Jet1<1>> p(static_cast<std::size_t>(np), Jet1<1>(0.37));
    p[static_cast<std::size_t>(m)] = Jet1<1>::variable(0.41, 0);
    std::vector<Jet1<1>> x(8);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = Jet1<1>(0.3 + 0.71 * static_cast<double>(i));
    return e.eval<Jet1<1>>(x, p).d[0] != 0.0;
  }
};

// Metric (and optional variation tensor) at one point, as jets in V >= N variables.
template <int N, class S>
struct MetricSample {
  Mat<S, N> g{};
  Mat<S, N> seeds{};  // seeds[a][mu]
};

// Evaluates seeds, coefficient blocks and the coordinate metric with scalar S.
template <int N, class S>
MetricSample<N, S> evaluate_family(const MetricFamily& fam, std::span<const S> x, std::span<const S> params) {
  MetricSample<N, S> out;
  Mat<S, N> fm{};  // fm[mu][a] = F_a^mu
  for (int a = 0; a < N; ++a)
    for (int mu = 0; mu < N; ++mu) {
      const Expr& e = fam.split.seeds[static_cast<std::size_t>(a)][static_cast<std::size_t>(mu)];
      out.seeds[a][mu] = e.is_constant() ? S(e.constant_value()) : e.eval<S>(x, params);
      fm[mu][a] = out.seeds[a][mu];
    }
  Mat<S, N> coframe{};  // coframe[a][mu]
  if (!invert<S, N>(fm, coframe, nullptr, 1e-12))
    throw DegenerateMetric("frame seeds are linearly dependent");

  Mat<S, N> G{};
  for (int i = 0; i < fam.k(); ++i) {
    const int s = fam.split.block_start(i);
    const int d = fam.split.dims[static_cast<std::size_t>(i)];
    for (int a = 0; a < d; ++a)
      for (int b = a; b < d; ++b) {
        const Expr& e = fam.blocks[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        S v = e.is_constant() ? S(e.constant_value()) : e.eval<S>(x, params);
        G[s + a][s + b] = v;
        G[s + b][s + a] = v;
      }
  }
  for (int mu = 0; mu < N; ++mu)
    for (int nu = mu; nu < N; ++nu) {
      S acc(0.0);
      for (int a = 0; a < N; ++a) {
        if (is_exact_zero(coframe[a][mu])) continue;
        for (int b = 0; b < N; ++b) {
          if (is_exact_zero(G[a][b]) || is_exact_zero(coframe[b][nu])) continue;
          acc += coframe[a][mu] * G[a][b] * coframe[b][nu];
        }
      }
      out.g[mu][nu] = acc;
      out.g[nu][mu] = acc;
    }
  return out;
}

// |det g| is judged against the Hadamard bound (product of row norms), which
// equals the product of diagonal magnitudes for diagonal metrics.
template <int N>
void check_nondegenerate(const Mat<double, N>& g) {
  double bound = 1.0;
  for (int i = 0; i < N; ++i) {
    double r = 0.0;
    for (int j = 0; j < N; ++j) r += g[i][j] * g[i][j];
    bound *= std::sqrt(r);
  }
  const double det = determinant<double, N>(g);
  if (!(std::abs(det) >= kTolDegenerate * bound) || bound == 0.0)
    throw DegenerateMetric("metric is degenerate (|det g| below tolerance)");
}

// Jets of the metric at a point plus, when a parameter direction is given,
// the variation tensor B = d/dt g_{theta + t v} and its first partials.
template <int N>
struct MetricJets {
  Mat<Jet2<N>, N> g{};
  Mat<Jet2<N>, N> seeds{};
  Mat<Jet1<N>, N> B{};
  bool has_variation = false;
};

// A concrete member g_theta of a family, on a chart.
class MetricField {
 public:
  MetricField(const PeriodicChart& chart, const MetricFamily& family, std::vector<double> theta)
      : chart_(&chart), family_(&family), theta_(std::move(theta)) {
    if (theta_.size() != family.num_params()) throw InadmissibleTheta("theta has wrong number of entries");
  }

  const PeriodicChart& chart() const { return *chart_; }
  const MetricFamily& family() const { return *family_; }
  const std::vector<double>& theta() const { return theta_; }
  int n() const { return family_->n(); }

  // Jets in the N spatial variables; with `direction`, also the t-derivative.
  template <int N>
  MetricJets<N> jets(std::span<const double> point, const std::vector<double>* direction = nullptr) const {
    MetricJets<N> out;
    if (direction == nullptr) {
      using S = Jet2<N>;
      std::array<S, N> x;
      for (int i = 0; i < N; ++i) x[i] = S::variable(point[static_cast<std::size_t>(i)], i);
      auto p = params<S>(x, nullptr);
      auto s = evaluate_family<N, S>(*family_, std::span<const S>(x), std::span<const S>(p));
      out.g = s.g;
      out.seeds = s.seeds;
    } else {
      using S = Jet2<N + 1>;
      std::array<S, N> x;
      for (int i = 0; i < N; ++i) x[i] = S::variable(point[static_cast<std::size_t>(i)], i);
      auto p = params<S>(x, direction);
      auto s = evaluate_family<N, S>(*family_, std::span<const S>(x), std::span<const S>(p));
      for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
          out.g[a][b] = restrict_vars<N>(s.g[a][b]);
          out.seeds[a][b] = restrict_vars<N>(s.seeds[a][b]);
          Jet1<N> Bab(s.g[a][b].d[N]);
          for (int i = 0; i < N; ++i) Bab.d[i] = s.g[a][b].h[N][i];
          out.B[a][b] = Bab;
        }
      out.has_variation = true;
    }
    Mat<double, N> gv{};
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) gv[a][b] = out.g[a][b].v;
    check_nondegenerate<N>(gv);
    return out;
  }

  // Metric values only (used by finite-difference oracles).
  template <int N>
  Mat<double, N> values(std::span<const double> point) const {
    std::array<double, N> x;
    for (int i = 0; i < N; ++i) x[i] = point[static_cast<std::size_t>(i)];
    auto p = params<double>(x, nullptr);
    auto s = evaluate_family<N, double>(*family_, std::span<const double>(x), std::span<const double>(p));
    return s.g;
  }

 private:
  template <class S, std::size_t M>
  std::vector<S> params(const std::array<S, M>& x, const std::vector<double>* direction) const {
    const std::size_t np = family_->num_params();
    std::vector<S> p(np);
    std::optional<S> w;
    if (family_->window) w = family_->window->eval<S>(std::span<const S>(x), std::span<const S>());
    for (std::size_t m = 0; m < np; ++m) {
      S delta(theta_[m] - family_->theta0[m]);
      if constexpr (!std::is_same_v<S, double>) {
        if (direction) {
          S t = S::variable(0.0, static_cast<int>(M));
          delta = delta + t * (*direction)[m];
        }
      }
      if (w) delta = delta * *w;
      p[m] = S(family_->theta0[m]) + delta;
    }
    return p;
  }

  const PeriodicChart* chart_;
  const MetricFamily* family_;
  std::vector<double> theta_;
};

// metric_jet: coordinate metric with exact first and second partials.
template <int N>
Mat<Jet2<N>, N> metric_jet(std::span<const double> point, const MetricField& g) {
  return g.jets<N>(point).g;
}

// Calls f.template operator()<N>() for the runtime dimension n.
template <class F>
decltype(auto) with_dimension(int n, F&& f) {
  switch (n) {
    case 2: return f.template operator()<2>();
    case 3: return f.template operator()<3>();
    case 4: return f.template operator()<4>();
    default: throw std::invalid_argument("supported manifold dimensions are 2, 3 and 4");
  }
}

}  // namespace mixedcurv
