#pragma once

// Truncated multivariate Taylor arithmetic.
//
// Jet1<V> carries a value and its V first partials; Jet2<V> additionally
// carries the V x V (symmetric) Hessian. Both are closed under the ring
// operations and the elementary functions used by the expression grammar,
// so any function written generically over a scalar type returns exact
// first/second partials when fed jets seeded with the coordinates.

#include <array>
#include <cmath>
#include <cstddef>

namespace mixedcurv {

template <int V>
struct Jet1 {
  double v{};
  std::array<double, V> d{};

  constexpr Jet1() = default;
  constexpr Jet1(double value) : v(value) {}  // NOLINT: implicit constant lift

  static Jet1 variable(double value, int index) {
    Jet1 j(value);
    j.d[index] = 1.0;
    return j;
  }

  Jet1& operator+=(const Jet1& o) {
    v += o.v;
    for (int i = 0; i < V; ++i) d[i] += o.d[i];
    return *this;
  }
  Jet1& operator-=(const Jet1& o) {
    v -= o.v;
    for (int i = 0; i < V; ++i) d[i] -= o.d[i];
    return *this;
  }
  Jet1& operator*=(const Jet1& o) {
    for (int i = 0; i < V; ++i) d[i] = v * o.d[i] + o.v * d[i];
    v *= o.v;
    return *this;
  }
  Jet1& operator*=(double s) {
    v *= s;
    for (auto& x : d) x *= s;
    return *this;
  }
  Jet1& operator/=(const Jet1& o) {
    const double inv = 1.0 / o.v;
    for (int i = 0; i < V; ++i) d[i] = (d[i] - v * inv * o.d[i]) * inv;
    v *= inv;
    return *this;
  }
};

template <int V>
struct Jet2 {
  double v{};
  std::array<double, V> d{};
  std::array<std::array<double, V>, V> h{};

  constexpr Jet2() = default;
  constexpr Jet2(double value) : v(value) {}  // NOLINT: implicit constant lift

  static Jet2 variable(double value, int index) {
    Jet2 j(value);
    j.d[index] = 1.0;
    return j;
  }

  Jet2& operator+=(const Jet2& o) {
    v += o.v;
    for (int i = 0; i < V; ++i) {
      d[i] += o.d[i];
      for (int k = 0; k < V; ++k) h[i][k] += o.h[i][k];
    }
    return *this;
  }
  Jet2& operator-=(const Jet2& o) {
    v -= o.v;
    for (int i = 0; i < V; ++i) {
      d[i] -= o.d[i];
      for (int k = 0; k < V; ++k) h[i][k] -= o.h[i][k];
    }
    return *this;
  }
  Jet2& operator*=(const Jet2& o) {
    for (int i = 0; i < V; ++i)
      for (int k = 0; k < V; ++k)
        h[i][k] = v * o.h[i][k] + o.v * h[i][k] + d[i] * o.d[k] + o.d[i] * d[k];
    for (int i = 0; i < V; ++i) d[i] = v * o.d[i] + o.v * d[i];
    v *= o.v;
    return *this;
  }
  Jet2& operator*=(double s) {
    v *= s;
    for (int i = 0; i < V; ++i) {
      d[i] *= s;
      for (int k = 0; k < V; ++k) h[i][k] *= s;
    }
    return *this;
  }
  Jet2& operator/=(const Jet2& o);
};

// Chain rule for a unary function with value f0, slope f1 and curvature f2 at x.v
template <int V>
Jet1<V> chain(const Jet1<V>& x, double f0, double f1, double /*f2*/) {
  Jet1<V> r(f0);
  for (int i = 0; i < V; ++i) r.d[i] = f1 * x.d[i];
  return r;
}

template <int V>
Jet2<V> chain(const Jet2<V>& x, double f0, double f1, double f2) {
  Jet2<V> r(f0);
  for (int i = 0; i < V; ++i) {
    r.d[i] = f1 * x.d[i];
    for (int k = 0; k < V; ++k) r.h[i][k] = f1 * x.h[i][k] + f2 * x.d[i] * x.d[k];
  }
  return r;
}

inline double chain(double, double f0, double, double) { return f0; }

template <int V>
Jet2<V>& Jet2<V>::operator/=(const Jet2& o) {
  const double inv = 1.0 / o.v;
  return *this *= chain(o, inv, -inv * inv, 2.0 * inv * inv * inv);
}

#define MIXEDCURV_JET_BINOPS(J)                                                   \
  template <int V>                                                                \
  J<V> operator+(J<V> a, const J<V>& b) { return a += b; }                        \
  template <int V>                                                                \
  J<V> operator-(J<V> a, const J<V>& b) { return a -= b; }                        \
  template <int V>                                                                \
  J<V> operator*(J<V> a, const J<V>& b) { return a *= b; }                        \
  template <int V>                                                                \
  J<V> operator/(J<V> a, const J<V>& b) { return a /= b; }                        \
  template <int V>                                                                \
  J<V> operator+(J<V> a, double b) { return a += J<V>(b); }                       \
  template <int V>                                                                \
  J<V> operator+(double a, J<V> b) { return b += J<V>(a); }                       \
  template <int V>                                                                \
  J<V> operator-(J<V> a, double b) { return a -= J<V>(b); }                       \
  template <int V>                                                                \
  J<V> operator-(double a, const J<V>& b) { return J<V>(a) -= b; }                \
  template <int V>                                                                \
  J<V> operator*(J<V> a, double b) { return a *= b; }                             \
  template <int V>                                                                \
  J<V> operator*(double a, J<V> b) { return b *= a; }                             \
  template <int V>                                                                \
  J<V> operator/(J<V> a, double b) { return a *= (1.0 / b); }                     \
  template <int V>                                                                \
  J<V> operator/(double a, const J<V>& b) { return J<V>(a) /= b; }                \
  template <int V>                                                                \
  J<V> operator-(J<V> a) { return a *= -1.0; }                                    \
  template <int V>                                                                \
  J<V> sin(const J<V>& x) {                                                       \
    const double s = std::sin(x.v), c = std::cos(x.v);                            \
    return chain(x, s, c, -s);                                                    \
  }                                                                               \
  template <int V>                                                                \
  J<V> cos(const J<V>& x) {                                                       \
    const double s = std::sin(x.v), c = std::cos(x.v);                            \
    return chain(x, c, -s, -c);                                                   \
  }                                                                               \
  template <int V>                                                                \
  J<V> exp(const J<V>& x) {                                                       \
    const double e = std::exp(x.v);                                               \
    return chain(x, e, e, e);                                                     \
  }                                                                               \
  template <int V>                                                                \
  J<V> log(const J<V>& x) {                                                       \
    return chain(x, std::log(x.v), 1.0 / x.v, -1.0 / (x.v * x.v));                \
  }                                                                               \
  template <int V>                                                                \
  J<V> sqrt(const J<V>& x) {                                                      \
    const double s = std::sqrt(x.v);                                              \
    return chain(x, s, 0.5 / s, -0.25 / (s * x.v));                               \
  }

MIXEDCURV_JET_BINOPS(Jet1)
MIXEDCURV_JET_BINOPS(Jet2)
#undef MIXEDCURV_JET_BINOPS

// Uniform accessors so generic code can treat double, Jet1 and Jet2 alike.
inline double value(double x) { return x; }
template <int V>
double value(const Jet1<V>& x) { return x.v; }
template <int V>
double value(const Jet2<V>& x) { return x.v; }

inline bool is_exact_zero(double x) { return x == 0.0; }
template <int V>
bool is_exact_zero(const Jet1<V>& x) {
  if (x.v != 0.0) return false;
  for (double c : x.d)
    if (c != 0.0) return false;
  return true;
}
template <int V>
bool is_exact_zero(const Jet2<V>& x) {
  if (x.v != 0.0) return false;
  for (double c : x.d)
    if (c != 0.0) return false;
  for (const auto& row : x.h)
    for (double c : row)
      if (c != 0.0) return false;
  return true;
}

// Drop the Hessian.
template <int V>
Jet1<V> truncate(const Jet2<V>& x) {
  Jet1<V> r(x.v);
  r.d = x.d;
  return r;
}

// Partial derivative along variable i; loses one order.
template <int V>
Jet1<V> partial(const Jet2<V>& x, int i) {
  Jet1<V> r(x.d[i]);
  r.d = x.h[i];
  return r;
}
template <int V>
double partial(const Jet1<V>& x, int i) {
  return x.d[i];
}

// Restrict a jet in V variables to its first W variables (W <= V).
template <int W, int V>
Jet2<W> restrict_vars(const Jet2<V>& x) {
  static_assert(W <= V);
  Jet2<W> r(x.v);
  for (int i = 0; i < W; ++i) {
    r.d[i] = x.d[i];
    for (int k = 0; k < W; ++k) r.h[i][k] = x.h[i][k];
  }
  return r;
}

// Smooth compactly supported bump: exp(1 - 1/(1-u^2)) on |u| < 1, zero outside.
inline void bump_derivs(double u, double& f0, double& f1, double& f2) {
  if (std::abs(u) >= 1.0) {
    f0 = f1 = f2 = 0.0;
    return;
  }
  const double q = 1.0 - u * u;
  f0 = std::exp(1.0 - 1.0 / q);
  // d/du (-1/q) = -2u/q^2
  const double a = -2.0 * u / (q * q);
  f1 = f0 * a;
  // d/du a = -2/q^2 - 8u^2/q^3
  const double da = -2.0 / (q * q) - 8.0 * u * u / (q * q * q);
  f2 = f0 * (a * a + da);
}

inline double bump(double u) {
  double f0, f1, f2;
  bump_derivs(u, f0, f1, f2);
  return f0;
}
template <class J>
J bump(const J& x) {
  double f0, f1, f2;
  bump_derivs(value(x), f0, f1, f2);
  return chain(x, f0, f1, f2);
}

}  // namespace mixedcurv
