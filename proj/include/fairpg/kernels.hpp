#pragma once

#include <span>

#include "fairpg/matrix.hpp"

// Dense kernels behind the network and the kernel-independence penalties.
// fairpg::kernels is the OpenMP path; fairpg::kernels::serial is the plain
// reference kept for tests and benchmarks. Parallel loops split over output
// rows only, so results do not depend on the thread count.
namespace fairpg::kernels {

// out = x * w^T + b   (x: n x d, w: h x d, b: h)  -> n x h
Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b);

// out = g^T * x   (g: n x h, x: n x d) -> h x d
Matrix transpose_times(const Matrix& g, const Matrix& x);

// out = g * w   (g: n x h, w: h x d) -> n x d
Matrix times(const Matrix& g, const Matrix& w);

// out(i, j) = ||a_i - b_j||^2   (a: n x h, b: m x h) -> n x m
Matrix pairwise_sq_dists(const Matrix& a, const Matrix& b);

// out(i, j) = exp(-d(i, j) / (2 * sigma_sq))
Matrix rbf_from_sq_dists(const Matrix& sq_dists, double sigma_sq);

// Adds sum_j c(i, j) * (a_i - b_j) * scale to grad row i   (c: n x m)
void accumulate_pair_gradient(const Matrix& c, const Matrix& a, const Matrix& b, double scale,
                              Matrix& grad);

// Sum of all entries of the elementwise product of two same-shape matrices.
double frobenius_dot(const Matrix& x, const Matrix& y);

// Mean of all entries.
double mean(const Matrix& x);

// Number of threads the parallel path will use.
int max_threads();

namespace serial {
Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b);
Matrix transpose_times(const Matrix& g, const Matrix& x);
Matrix times(const Matrix& g, const Matrix& w);
Matrix pairwise_sq_dists(const Matrix& a, const Matrix& b);
Matrix rbf_from_sq_dists(const Matrix& sq_dists, double sigma_sq);
void accumulate_pair_gradient(const Matrix& c, const Matrix& a, const Matrix& b, double scale,
                              Matrix& grad);
double frobenius_dot(const Matrix& x, const Matrix& y);
double mean(const Matrix& x);
}  // namespace serial

}  // namespace fairpg::kernels
