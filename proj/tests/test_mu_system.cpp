#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "mixedcurv/variational.hpp"

using namespace mixedcurv;

namespace {

Eigen::MatrixXd eigen_matrix(const std::vector<int>& dims) {
  const auto A = mu_matrix(dims);
  const auto k = static_cast<Eigen::Index>(dims.size());
  Eigen::MatrixXd M(k, k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < k; ++i) M(j, i) = A[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
  return M;
}

// All compositions of n into at least two positive parts.
std::vector<std::vector<int>> compositions(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  std::function<void(int)> rec = [&](int left) {
    if (left == 0) {
      if (cur.size() >= 2) out.push_back(cur);
      return;
    }
    for (int d = 1; d <= left; ++d) {
      cur.push_back(d);
      rec(left - d);
      cur.pop_back();
    }
  };
  rec(n);
  return out;
}

}  // namespace

TEST(MuSystem, ZeroRightSide) {
  const auto s = mu_solve(4, {2, 2}, {0.0, 0.0});
  EXPECT_EQ(s.mu, (std::vector<double>{0.0, 0.0}));
  EXPECT_DOUBLE_EQ(s.det, -4.0);
  EXPECT_DOUBLE_EQ(s.det_formula, -4.0);
  EXPECT_EQ(s.system_residual, 0.0);
}

TEST(MuSystem, MatchesEigenDenseSolve) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (const auto& dims : {std::vector<int>{2, 2, 1}, std::vector<int>{1, 1, 3}, std::vector<int>{3, 3},
                           std::vector<int>{1, 2, 1, 2}}) {
    int n = 0;
    for (int d : dims) n += d;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> a(dims.size());
      for (auto& v : a) v = u(rng);
      const auto s = mu_solve(n, dims, a);
      const Eigen::VectorXd ref = eigen_matrix(dims).fullPivLu().solve(Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size())));
      for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(s.mu[i], ref(static_cast<Eigen::Index>(i)), 1e-12);
        EXPECT_NEAR(s.closed_form[i], ref(static_cast<Eigen::Index>(i)), 1e-12);
      }
      EXPECT_LT(s.system_residual, 1e-12);
    }
  }
}

TEST(MuSystem, DeterminantAgainstEigen) {
  for (int n = 3; n <= 6; ++n)
    for (const auto& dims : compositions(n)) {
      const auto s = mu_solve(n, dims, std::vector<double>(dims.size(), 0.0));
      const double ref = eigen_matrix(dims).determinant();
      EXPECT_NEAR(s.det, ref, 1e-10 * std::max(1.0, std::abs(ref)));
      // det A = (-1)^k 2^(k-1) (2 - n)
      const int k = static_cast<int>(dims.size());
      EXPECT_NEAR(ref, (k % 2 ? -1.0 : 1.0) * std::ldexp(1.0, k - 1) * (2.0 - n), 1e-9);
    }
}

TEST(MuSystem, UnsignedDeterminantFormulaHoldsForEvenK) {
  for (int n = 3; n <= 6; ++n)
    for (const auto& dims : compositions(n)) {
      const auto s = mu_solve(n, dims, std::vector<double>(dims.size(), 0.0));
      if (dims.size() % 2 == 0)
        EXPECT_NEAR(s.det, s.det_formula, 1e-9);
      else
        EXPECT_NEAR(s.det, -s.det_formula, 1e-9);
    }
}

TEST(MuSystem, TwoDimensionalConvention) {
  const auto s = mu_solve(2, {1, 1}, {0.7, -0.2});
  EXPECT_EQ(s.mu, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(s.det, 0.0);
  EXPECT_THROW(mu_solve(2, {1, 1, 1}, {0, 0, 0}), std::invalid_argument);
}

TEST(MuSystem, RejectsBadInput) {
  EXPECT_THROW(mu_solve(3, {1, 1, 1}, {0, 0}), std::invalid_argument);
  EXPECT_THROW(mu_solve(4, {1, 1, 1}, {0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(mu_solve(3, {3}, {0}), std::invalid_argument);
  EXPECT_THROW(mu_solve(3, {0, 3}, {0, 0}), std::invalid_argument);
}
