#include <cmath>
#include <stdexcept>

#include "fairpg/kernels.hpp"

namespace fairpg::kernels::serial {

Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b) {
  if (x.cols != w.cols || b.size() != w.rows) throw std::invalid_argument("affine: shape mismatch");
  Matrix out(x.rows, w.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t k = 0; k < w.rows; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) s += x(i, j) * w(k, j);
      out(i, k) = s + b[k];
    }
  }
  return out;
}

Matrix transpose_times(const Matrix& g, const Matrix& x) {
  if (g.rows != x.rows) throw std::invalid_argument("transpose_times: shape mismatch");
  Matrix out(g.cols, x.cols);
  for (std::size_t k = 0; k < g.cols; ++k) {
    for (std::size_t i = 0; i < g.rows; ++i) {
      if (g(i, k) == 0.0) continue;
      for (std::size_t j = 0; j < x.cols; ++j) out(k, j) += g(i, k) * x(i, j);
    }
  }
  return out;
}

Matrix times(const Matrix& g, const Matrix& w) {
  if (g.cols != w.rows) throw std::invalid_argument("times: shape mismatch");
  Matrix out(g.rows, w.cols);
  for (std::size_t i = 0; i < g.rows; ++i) {
    for (std::size_t k = 0; k < g.cols; ++k) {
      if (g(i, k) == 0.0) continue;
      for (std::size_t j = 0; j < w.cols; ++j) out(i, j) += g(i, k) * w(k, j);
    }
  }
  return out;
}

Matrix pairwise_sq_dists(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw std::invalid_argument("pairwise_sq_dists: shape mismatch");
  Matrix out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) {
        const double diff = a(i, k) - b(j, k);
        s += diff * diff;
      }
      out(i, j) = s;
    }
  }
  return out;
}

Matrix rbf_from_sq_dists(const Matrix& sq_dists, double sigma_sq) {
  if (!(sigma_sq > 0.0)) throw std::invalid_argument("rbf_from_sq_dists: bandwidth must be positive");
  Matrix out(sq_dists.rows, sq_dists.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = std::exp(-sq_dists.data[i] * (1.0 / (2.0 * sigma_sq)));
  }
  return out;
}

void accumulate_pair_gradient(const Matrix& c, const Matrix& a, const Matrix& b, double scale,
                              Matrix& grad) {
  if (c.rows != a.rows || c.cols != b.rows || a.cols != b.cols || grad.rows != a.rows ||
      grad.cols != a.cols)
    throw std::invalid_argument("accumulate_pair_gradient: shape mismatch");
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double cij = c(i, j) * scale;
      if (cij == 0.0) continue;
      for (std::size_t k = 0; k < a.cols; ++k) grad(i, k) += cij * (a(i, k) - b(j, k));
    }
  }
}

double frobenius_dot(const Matrix& x, const Matrix& y) {
  if (x.rows != y.rows || x.cols != y.cols) throw std::invalid_argument("frobenius_dot: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) s += x(i, j) * y(i, j);
    total += s;
  }
  return total;
}

double mean(const Matrix& x) {
  if (x.empty()) throw std::invalid_argument("mean: empty matrix");
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) s += x(i, j);
    total += s;
  }
  return total / static_cast<double>(x.data.size());
}

}  // namespace fairpg::kernels::serial
