#pragma once

// Fixed-size dense helpers, generic over the scalar (double or jets).

#include <array>
#include <cmath>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include "mixedcurv/jet.hpp"

namespace mixedcurv {

// Aliases are non-deduced on purpose: N is always deduced from a class
// template (PointGeometry<N>, AdaptedFrame<N>, ...) or given explicitly.
template <class T, int N>
using Vec = std::type_identity_t<std::array<T, N>>;
template <class T, int N>
using Mat = std::type_identity_t<std::array<std::array<T, N>, N>>;

template <class T, int N>
Mat<T, N> identity_matrix() {
  Mat<T, N> m{};
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) m[i][j] = T(i == j ? 1.0 : 0.0);
  return m;
}

template <class T, int N>
Mat<T, N> matmul(const Mat<T, N>& a, const Mat<T, N>& b) {
  Mat<T, N> c{};
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      T s(0.0);
      for (int k = 0; k < N; ++k) s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
  return c;
}

template <class T, int N>
Mat<T, N> transpose(const Mat<T, N>& a) {
  Mat<T, N> t{};
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) t[i][j] = a[j][i];
  return t;
}

// Gauss-Jordan with partial pivoting on the primal values. Returns false if
// a pivot magnitude falls below `pivot_tol` times the largest entry.
template <class T, int N>
bool invert(Mat<T, N> a, Mat<T, N>& inv, T* det = nullptr, double pivot_tol = 1e-14) {
  inv = identity_matrix<T, N>();
  double scale = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) scale = std::max(scale, std::abs(value(a[i][j])));
  if (scale == 0.0) return false;
  T d(1.0);
  for (int c = 0; c < N; ++c) {
    int p = c;
    for (int r = c + 1; r < N; ++r)
      if (std::abs(value(a[r][c])) > std::abs(value(a[p][c]))) p = r;
    if (std::abs(value(a[p][c])) <= pivot_tol * scale) return false;
    if (p != c) {
      std::swap(a[p], a[c]);
      std::swap(inv[p], inv[c]);
      d = T(0.0) - d;
    }
    const T piv = a[c][c];
    d = d * piv;
    const T ip = T(1.0) / piv;
    for (int j = 0; j < N; ++j) {
      a[c][j] = a[c][j] * ip;
      inv[c][j] = inv[c][j] * ip;
    }
    for (int r = 0; r < N; ++r) {
      if (r == c) continue;
      const T f = a[r][c];
      for (int j = 0; j < N; ++j) {
        a[r][j] -= f * a[c][j];
        inv[r][j] -= f * inv[c][j];
      }
    }
  }
  if (det) *det = d;
  return true;
}

template <class T, int N>
T determinant(Mat<T, N> a) {
  T d(1.0);
  for (int c = 0; c < N; ++c) {
    int p = c;
    for (int r = c + 1; r < N; ++r)
      if (std::abs(value(a[r][c])) > std::abs(value(a[p][c]))) p = r;
    if (value(a[p][c]) == 0.0) return T(0.0);
    if (p != c) {
      std::swap(a[p], a[c]);
      d = T(0.0) - d;
    }
    d = d * a[c][c];
    const T ip = T(1.0) / a[c][c];
    for (int r = c + 1; r < N; ++r) {
      const T f = a[r][c] * ip;
      for (int j = c; j < N; ++j) a[r][j] -= f * a[c][j];
    }
  }
  return d;
}

// Runtime-size dense LU with partial pivoting: solves A x = b, optionally
// returning det A. Throws std::domain_error on an exactly singular pivot.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b, double* det = nullptr) {
  const std::size_t n = a.size();
  double d = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    if (a[p][c] == 0.0) throw std::domain_error("singular linear system");
    if (p != c) {
      std::swap(a[p], a[c]);
      std::swap(b[p], b[c]);
      d = -d;
    }
    d *= a[c][c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t j = c; j < n; ++j) a[r][j] -= f * a[c][j];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a[i][j] * x[j];
    x[i] = s / a[i][i];
  }
  if (det) *det = d;
  return x;
}

inline double determinant_dense(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  double d = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    if (a[p][c] == 0.0) return 0.0;
    if (p != c) {
      std::swap(a[p], a[c]);
      d = -d;
    }
    d *= a[c][c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t j = c; j < n; ++j) a[r][j] -= f * a[c][j];
    }
  }
  return d;
}

}  // namespace mixedcurv
