#pragma once

// Periodic coordinate box (flat-torus topology) with a uniform quadrature
// grid, plus the grid-parallel map / deterministic reduce used everywhere.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <thread>
#include <vector>

namespace mixedcurv {

class NumericalFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PeriodicChart {
  int n = 0;
  std::vector<double> periods;
  std::vector<int> grid_res;

  static PeriodicChart torus(int n, int res, double period = 2.0 * std::numbers::pi) {
    return PeriodicChart{n, std::vector<double>(static_cast<std::size_t>(n), period),
                         std::vector<int>(static_cast<std::size_t>(n), res)};
  }

  void validate() const {
    if (n < 2) throw std::invalid_argument("chart dimension must be >= 2");
    if (periods.size() != static_cast<std::size_t>(n) || grid_res.size() != static_cast<std::size_t>(n))
      throw std::invalid_argument("chart periods/grid_res must have n entries");
    for (double p : periods)
      if (!(p > 0.0)) throw std::invalid_argument("chart periods must be positive");
    for (int r : grid_res)
      if (r < 4) throw std::invalid_argument("chart grid_res must be >= 4");
  }

  std::size_t num_points() const {
    std::size_t c = 1;
    for (int r : grid_res) c *= static_cast<std::size_t>(r);
    return c;
  }

  // Coordinate cell volume of the product trapezoidal (= rectangle) rule.
  double cell_volume() const {
    double w = 1.0;
    for (int i = 0; i < n; ++i) w *= periods[static_cast<std::size_t>(i)] / grid_res[static_cast<std::size_t>(i)];
    return w;
  }

  // Grid point with linear index `idx`; the first axis varies slowest.
  std::vector<double> point(std::size_t idx) const {
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int i = n - 1; i >= 0; --i) {
      const auto r = static_cast<std::size_t>(grid_res[static_cast<std::size_t>(i)]);
      x[static_cast<std::size_t>(i)] =
          static_cast<double>(idx % r) * periods[static_cast<std::size_t>(i)] / static_cast<double>(r);
      idx /= r;
    }
    return x;
  }

  // Wrap a point into the fundamental box.
  std::vector<double> wrap(std::vector<double> x) const {
    for (int i = 0; i < n; ++i) {
      const double L = periods[static_cast<std::size_t>(i)];
      double& v = x[static_cast<std::size_t>(i)];
      v = v - L * std::floor(v / L);
    }
    return x;
  }

  PeriodicChart with_resolution(int res) const {
    PeriodicChart c = *this;
    std::fill(c.grid_res.begin(), c.grid_res.end(), res);
    return c;
  }
};

struct ExecPolicy {
  int threads = 1;
  bool ordered_reduce = false;
};

// Runs body(i) for i in [0, count) over up to policy.threads workers with
// static contiguous chunks. The first exception thrown by any worker is rethrown.
inline void parallel_for(std::size_t count, const ExecPolicy& policy,
                         const std::function<void(std::size_t)>& body) {
  const int t = std::max(1, std::min<int>(policy.threads, static_cast<int>(std::max<std::size_t>(count, 1))));
  if (t == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(t));
  {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (count + static_cast<std::size_t>(t) - 1) / static_cast<std::size_t>(t);
    for (int w = 0; w < t; ++w) {
      workers.emplace_back([&, w] {
        const std::size_t lo = static_cast<std::size_t>(w) * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        try {
          for (std::size_t i = lo; i < hi; ++i) body(i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Deterministic sum of per-point values. Ordered mode sums in grid order;
// otherwise pairwise summation (still deterministic, fewer rounding errors).
inline double reduce_sum(const std::vector<double>& v, const ExecPolicy& policy) {
  if (policy.ordered_reduce) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  std::function<double(std::size_t, std::size_t)> pairwise = [&](std::size_t lo, std::size_t hi) -> double {
    if (hi - lo <= 64) {
      double s = 0.0;
      for (std::size_t i = lo; i < hi; ++i) s += v[i];
      return s;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    return pairwise(lo, mid) + pairwise(mid, hi);
  };
  return pairwise(0, v.size());
}

}  // namespace mixedcurv
