#include "fairpg/kernels.hpp"

#include <omp.h>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fairpg::kernels {

namespace {

// Row partial sums are summed serially afterwards; the split over rows keeps
// the result independent of the schedule.
double sum_partials(const std::vector<double>& partial) {
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b) {
  if (x.cols != w.cols || b.size() != w.rows) throw std::invalid_argument("affine: shape mismatch");
  Matrix out(x.rows, w.rows);
  const auto n = static_cast<long>(x.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const double* xi = x.data.data() + i * x.cols;
    double* oi = out.data.data() + i * out.cols;
    for (std::size_t k = 0; k < w.rows; ++k) {
      const double* wk = w.data.data() + k * w.cols;
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) s += xi[j] * wk[j];
      oi[k] = s + b[k];
    }
  }
  return out;
}

Matrix transpose_times(const Matrix& g, const Matrix& x) {
  if (g.rows != x.rows) throw std::invalid_argument("transpose_times: shape mismatch");
  Matrix out(g.cols, x.cols);
  const auto h = static_cast<long>(g.cols);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < h; ++k) {
    double* ok = out.data.data() + k * out.cols;
    for (std::size_t i = 0; i < g.rows; ++i) {
      const double gik = g.data[i * g.cols + k];
      if (gik == 0.0) continue;
      const double* xi = x.data.data() + i * x.cols;
      for (std::size_t j = 0; j < x.cols; ++j) ok[j] += gik * xi[j];
    }
  }
  return out;
}

Matrix times(const Matrix& g, const Matrix& w) {
  if (g.cols != w.rows) throw std::invalid_argument("times: shape mismatch");
  Matrix out(g.rows, w.cols);
  const auto n = static_cast<long>(g.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    double* oi = out.data.data() + i * out.cols;
    const double* gi = g.data.data() + i * g.cols;
    for (std::size_t k = 0; k < g.cols; ++k) {
      const double gik = gi[k];
      if (gik == 0.0) continue;
      const double* wk = w.data.data() + k * w.cols;
      for (std::size_t j = 0; j < w.cols; ++j) oi[j] += gik * wk[j];
    }
  }
  return out;
}

Matrix pairwise_sq_dists(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw std::invalid_argument("pairwise_sq_dists: shape mismatch");
  Matrix out(a.rows, b.rows);
  const auto n = static_cast<long>(a.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const double* ai = a.data.data() + i * a.cols;
    double* oi = out.data.data() + i * out.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* bj = b.data.data() + j * b.cols;
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) {
        const double diff = ai[k] - bj[k];
        s += diff * diff;
      }
      oi[j] = s;
    }
  }
  return out;
}

Matrix rbf_from_sq_dists(const Matrix& sq_dists, double sigma_sq) {
  if (!(sigma_sq > 0.0)) throw std::invalid_argument("rbf_from_sq_dists: bandwidth must be positive");
  Matrix out(sq_dists.rows, sq_dists.cols);
  const double inv = 1.0 / (2.0 * sigma_sq);
  const auto n = static_cast<long>(sq_dists.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < sq_dists.cols; ++j) {
      out.data[i * out.cols + j] = std::exp(-sq_dists.data[i * sq_dists.cols + j] * inv);
    }
  }
  return out;
}

void accumulate_pair_gradient(const Matrix& c, const Matrix& a, const Matrix& b, double scale,
                              Matrix& grad) {
  if (c.rows != a.rows || c.cols != b.rows || a.cols != b.cols || grad.rows != a.rows ||
      grad.cols != a.cols)
    throw std::invalid_argument("accumulate_pair_gradient: shape mismatch");
  const auto n = static_cast<long>(a.rows);
  const std::size_t h = a.cols;
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const double* ai = a.data.data() + i * h;
    double* gi = grad.data.data() + i * h;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double cij = c.data[i * c.cols + j] * scale;
      if (cij == 0.0) continue;
      const double* bj = b.data.data() + j * h;
      for (std::size_t k = 0; k < h; ++k) gi[k] += cij * (ai[k] - bj[k]);
    }
  }
}

double frobenius_dot(const Matrix& x, const Matrix& y) {
  if (x.rows != y.rows || x.cols != y.cols) throw std::invalid_argument("frobenius_dot: shape mismatch");
  std::vector<double> partial(x.rows, 0.0);
  const auto n = static_cast<long>(x.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) s += x.data[i * x.cols + j] * y.data[i * y.cols + j];
    partial[i] = s;
  }
  return sum_partials(partial);
}

double mean(const Matrix& x) {
  if (x.empty()) throw std::invalid_argument("mean: empty matrix");
  std::vector<double> partial(x.rows, 0.0);
  const auto n = static_cast<long>(x.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) s += x.data[i * x.cols + j];
    partial[i] = s;
  }
  return sum_partials(partial) / static_cast<double>(x.data.size());
}

}  // namespace fairpg::kernels
