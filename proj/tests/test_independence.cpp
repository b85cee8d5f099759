#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "fairpg/independence.hpp"
#include "fairpg/kernels.hpp"
#include "grad_check.hpp"
#include "test_util.hpp"

using namespace fairpg;
using fairpg::testing::random_matrix;

namespace {

// Dense reference: tr(K H L H) / (n - 1)^2 with explicit H.
double hsic_reference(const Matrix& f, const std::vector<int>& g, double sigma) {
  const std::size_t n = f.rows;
  Matrix K(n, n), L(n, n), H(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0;
      for (std::size_t c = 0; c < f.cols; ++c) d += (f(i, c) - f(j, c)) * (f(i, c) - f(j, c));
      K(i, j) = std::exp(-d / (2 * sigma * sigma));
      L(i, j) = g[i] == g[j] ? 1.0 : 0.0;
      H(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
    }
  auto mul = [n](const Matrix& a, const Matrix& b) {
    Matrix c(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j) c(i, j) += a(i, k) * b(k, j);
    return c;
  };
  const Matrix M = mul(mul(mul(K, H), L), H);
  double tr = 0;
  for (std::size_t i = 0; i < n; ++i) tr += M(i, i);
  return tr / static_cast<double>((n - 1) * (n - 1));
}

std::vector<double> flat(const Matrix& m) { return m.data; }

Matrix from_flat(const std::vector<double>& v, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  m.data = v;
  return m;
}

}  // namespace

TEST(MedianHeuristic, LowerMedianOfPairs) {
  Matrix x(4, 1);
  x(0, 0) = 0;
  x(1, 0) = 1;
  x(2, 0) = 3;
  x(3, 0) = 7;
  // Squared pair distances: 1, 9, 49, 4, 36, 16 -> sorted 1 4 9 16 36 49 -> lower median 9.
  EXPECT_DOUBLE_EQ(median_sq_distance(x), 9.0);
  EXPECT_DOUBLE_EQ(median_heuristic_sigma(x), 3.0);
  EXPECT_DOUBLE_EQ(median_heuristic_sigma(Matrix(5, 2)), 1.0);
}

TEST(Hsic, MatchesDenseReference) {
  SeededRng r(1);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 4 + r.uniform_index(20);
    const Matrix f = random_matrix(r, n, 3);
    std::vector<int> g(n);
    for (int& v : g) v = static_cast<int>(r.uniform_index(3));
    const double sigma = median_heuristic_sigma(f);
    EXPECT_NEAR(hsic(f, g), hsic_reference(f, g, sigma), 1e-12);
    EXPECT_NEAR(hsic(f, g, 0.7), hsic_reference(f, g, 0.7), 1e-12);
  }
}

TEST(Hsic, ConstantFeaturesOrGroupsGiveZero) {
  SeededRng r(2);
  Matrix c(10, 3, 1.5);
  std::vector<int> g{0, 1, 0, 1, 1, 0, 0, 1, 1, 0};
  EXPECT_NEAR(hsic(c, g), 0.0, 1e-12);
  const Matrix f = random_matrix(r, 10, 3);
  EXPECT_NEAR(hsic(f, std::vector<int>(10, 2)), 0.0, 1e-12);
}

TEST(Hsic, RequiresFourRows) {
  Matrix f(3, 2);
  std::vector<int> g{0, 1, 0};
  EXPECT_THROW(hsic(f, g), std::invalid_argument);
}

TEST(Hsic, DependentFeaturesExceedPermutationNull) {
  SeededRng r(3);
  const std::size_t n = 64;
  std::vector<int> g(n);
  Matrix f(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = static_cast<int>(i % 2);
    f(i, static_cast<std::size_t>(g[i])) = 1.0;
    f(i, 0) += 0.01 * r.normal();
    f(i, 1) += 0.01 * r.normal();
  }
  const double observed = hsic(f, g);
  std::vector<double> null;
  std::vector<int> perm = g;
  for (int k = 0; k < 1000; ++k) {
    r.shuffle(perm);
    null.push_back(hsic(f, perm));
  }
  std::sort(null.begin(), null.end());
  EXPECT_GT(observed, null[989]);
}

TEST(Hsic, NonNegativeAndPermutationInvariant) {
  SeededRng r(4);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 4 + r.uniform_index(30);
    const Matrix f = random_matrix(r, n, 4);
    std::vector<int> g(n);
    for (int& v : g) v = static_cast<int>(r.uniform_index(2));
    const double h = hsic(f, g);
    ASSERT_GE(h, -1e-9);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    r.shuffle(order);
    std::vector<int> pg;
    for (auto i : order) pg.push_back(g[i]);
    ASSERT_NEAR(hsic(gather_rows(f, order), pg), h, 1e-12);
  }
}

TEST(Hsic, GradientMatchesFiniteDifferences) {
  SeededRng r(5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 4 + r.uniform_index(12), h = 1 + r.uniform_index(4);
    const Matrix f = random_matrix(r, n, h);
    std::vector<int> g(n);
    for (int& v : g) v = static_cast<int>(r.uniform_index(3));
    const std::optional<double> sigma = t % 2 ? std::optional<double>(0.9) : std::nullopt;
    Matrix grad(n, h);
    const double v = hsic_with_grad(f, g, grad, sigma);
    EXPECT_NEAR(v, hsic(f, g, sigma), 1e-14);
    const double err = fairpg::testing::max_relative_error(
        [&](const std::vector<double>& p) { return hsic(from_flat(p, n, h), g, sigma); }, flat(f), flat(grad));
    EXPECT_LT(err, 1e-4) << "configuration " << t;
  }
}

TEST(Mmd, IdentityAndSymmetry) {
  SeededRng r(6);
  const Matrix a = random_matrix(r, 20, 3), b = random_matrix(r, 13, 3);
  EXPECT_NEAR(mmd2(a, a, 1.0), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(mmd2(a, b, 0.8), mmd2(b, a, 0.8));
  EXPECT_GE(mmd2(a, b, 0.8), -1e-9);
}

TEST(Mmd, SeparatedGaussiansAreFar) {
  SeededRng r(7);
  Matrix a = random_matrix(r, 128, 2), b = random_matrix(r, 128, 2);
  for (std::size_t i = 0; i < 128; ++i) b(i, 0) += 4.0;
  EXPECT_GT(mmd2(a, b, 1.0), 0.5);
}

TEST(Mmd, MatchesDirectDefinition) {
  SeededRng r(8);
  const Matrix a = random_matrix(r, 5, 2), b = random_matrix(r, 7, 2);
  const double s = 1.4;
  auto k = [&](std::span<const double> u, std::span<const double> v) {
    double d = 0;
    for (std::size_t c = 0; c < u.size(); ++c) d += (u[c] - v[c]) * (u[c] - v[c]);
    return std::exp(-d / (2 * s * s));
  };
  double aa = 0, bb = 0, ab = 0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) aa += k(a.row(i), a.row(j));
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j) bb += k(b.row(i), b.row(j));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 7; ++j) ab += k(a.row(i), b.row(j));
  EXPECT_NEAR(mmd2(a, b, s), aa / 25 + bb / 49 - 2 * ab / 35, 1e-13);
}

TEST(Mmd, GradientMatchesFiniteDifferences) {
  SeededRng r(9);
  for (int t = 0; t < 20; ++t) {
    const std::size_t na = 1 + r.uniform_index(8), nb = 1 + r.uniform_index(8), h = 1 + r.uniform_index(4);
    const Matrix a = random_matrix(r, na, h), b = random_matrix(r, nb, h);
    const double sigma = 0.5 + r.uniform();
    Matrix grad(na, h);
    mmd2_with_grad(a, b, sigma, grad);
    const double err = fairpg::testing::max_relative_error(
        [&](const std::vector<double>& p) { return mmd2(from_flat(p, na, h), b, sigma); }, flat(a), flat(grad));
    EXPECT_LT(err, 1e-4) << "configuration " << t;
  }
}
