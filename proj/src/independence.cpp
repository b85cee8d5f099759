#include "fairpg/independence.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fairpg/kernels.hpp"

namespace fairpg {

namespace {

struct MedianPair {
  double value = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
};

MedianPair median_pair(const Matrix& sq) {
  struct Entry {
    double d;
    std::size_t i, j;
  };
  std::vector<Entry> pairs;
  pairs.reserve(sq.rows * (sq.rows - 1) / 2);
  for (std::size_t i = 0; i < sq.rows; ++i) {
    for (std::size_t j = i + 1; j < sq.cols; ++j) pairs.push_back({sq(i, j), i, j});
  }
  if (pairs.empty()) return {};
  const auto mid = pairs.begin() + static_cast<std::ptrdiff_t>((pairs.size() - 1) / 2);
  std::nth_element(pairs.begin(), mid, pairs.end(), [](const Entry& x, const Entry& y) {
    if (x.d != y.d) return x.d < y.d;
    return x.i != y.i ? x.i < y.i : x.j < y.j;
  });
  return {mid->d, mid->i, mid->j};
}

// H L H for the one-hot linear kernel, already divided by (n - 1)^2.
Matrix centered_group_kernel(std::span<const int> groups) {
  const std::size_t n = groups.size();
  const int max_group = *std::max_element(groups.begin(), groups.end());
  std::vector<double> count(static_cast<std::size_t>(max_group) + 1, 0.0);
  for (int g : groups) {
    if (g < 0) throw std::invalid_argument("hsic: negative group label");
    count[static_cast<std::size_t>(g)] += 1.0;
  }
  const double nn = static_cast<double>(n);
  double grand = 0.0;
  for (double c : count) grand += c * c;
  grand /= nn * nn;
  const double scale = 1.0 / ((nn - 1.0) * (nn - 1.0));
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ri = count[static_cast<std::size_t>(groups[i])] / nn;
    for (std::size_t j = 0; j < n; ++j) {
      const double rj = count[static_cast<std::size_t>(groups[j])] / nn;
      const double lij = groups[i] == groups[j] ? 1.0 : 0.0;
      m(i, j) = (lij - ri - rj + grand) * scale;
    }
  }
  return m;
}

double hsic_impl(const Matrix& f, std::span<const int> groups, Matrix* grad,
                 std::optional<double> sigma) {
  const std::size_t n = f.rows;
  if (n < 4) throw std::invalid_argument("hsic: at least 4 rows are required");
  if (groups.size() != n) throw std::invalid_argument("hsic: groups not aligned with features");

  const Matrix sq = kernels::pairwise_sq_dists(f, f);
  double s;
  MedianPair med;
  bool through_median = false;
  if (sigma) {
    if (!(*sigma > 0.0)) throw std::invalid_argument("hsic: bandwidth must be positive");
    s = *sigma * *sigma;
  } else {
    med = median_pair(sq);
    through_median = med.value > 0.0;
    s = through_median ? med.value : 1.0;
  }
  const Matrix k = kernels::rbf_from_sq_dists(sq, s);
  const Matrix g = centered_group_kernel(groups);
  const double value = kernels::frobenius_dot(k, g);
  if (!grad) return value;

  if (grad->rows != n || grad->cols != f.cols) throw std::invalid_argument("hsic: gradient shape mismatch");
  // dHSIC/dD_ij = -G_ij K_ij / (2 s); dD_ij/dF_i = 2 (F_i - F_j), counted for (i, j) and (j, i).
  Matrix c(n, n);
  double ds = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double gk = g(i, j) * k(i, j);
      c(i, j) = -gk / (2.0 * s);
      ds += gk * sq(i, j);
    }
  }
  kernels::accumulate_pair_gradient(c, f, f, 4.0, *grad);
  if (through_median) {
    ds /= 2.0 * s * s;
    for (std::size_t t = 0; t < f.cols; ++t) {
      const double diff = 2.0 * (f(med.i, t) - f(med.j, t)) * ds;
      (*grad)(med.i, t) += diff;
      (*grad)(med.j, t) -= diff;
    }
  }
  return value;
}

double mmd2_impl(const Matrix& a, const Matrix& b, double sigma, Matrix* grad_a) {
  if (a.rows == 0 || b.rows == 0) throw std::invalid_argument("mmd2: both samples must be non-empty");
  if (a.cols != b.cols) throw std::invalid_argument("mmd2: feature dimensions differ");
  if (!(sigma > 0.0)) throw std::invalid_argument("mmd2: bandwidth must be positive");
  const double s = sigma * sigma;
  const Matrix kaa = kernels::rbf_from_sq_dists(kernels::pairwise_sq_dists(a, a), s);
  const Matrix kbb = kernels::rbf_from_sq_dists(kernels::pairwise_sq_dists(b, b), s);
  const Matrix kab = kernels::rbf_from_sq_dists(kernels::pairwise_sq_dists(a, b), s);
  const double value = kernels::mean(kaa) + kernels::mean(kbb) - 2.0 * kernels::mean(kab);
  if (grad_a) {
    if (grad_a->rows != a.rows || grad_a->cols != a.cols)
      throw std::invalid_argument("mmd2: gradient shape mismatch");
    const double na = static_cast<double>(a.rows);
    const double nb = static_cast<double>(b.rows);
    kernels::accumulate_pair_gradient(kaa, a, a, -2.0 / (s * na * na), *grad_a);
    kernels::accumulate_pair_gradient(kab, a, b, 2.0 / (s * na * nb), *grad_a);
  }
  return value;
}

}  // namespace

double median_sq_distance(const Matrix& x) {
  if (x.rows < 2) return 0.0;
  return median_pair(kernels::pairwise_sq_dists(x, x)).value;
}

double median_heuristic_sigma(const Matrix& x) {
  const double m = median_sq_distance(x);
  return m > 0.0 ? std::sqrt(m) : 1.0;
}

double hsic(const Matrix& features, std::span<const int> groups, std::optional<double> sigma) {
  return hsic_impl(features, groups, nullptr, sigma);
}

double hsic_with_grad(const Matrix& features, std::span<const int> groups, Matrix& grad,
                      std::optional<double> sigma) {
  return hsic_impl(features, groups, &grad, sigma);
}

double mmd2(const Matrix& a, const Matrix& b, double sigma) { return mmd2_impl(a, b, sigma, nullptr); }

double mmd2_with_grad(const Matrix& a, const Matrix& b, double sigma, Matrix& grad_a) {
  return mmd2_impl(a, b, sigma, &grad_a);
}

}  // namespace fairpg
