#pragma once

#include <optional>
#include <span>

#include "fairpg/matrix.hpp"

namespace fairpg {

// RBF kernels use k(u, v) = exp(-||u - v||^2 / (2 sigma^2)).

// Lower median of the squared distances over pairs i < j of the rows of x.
// Returns 0 when x has fewer than two rows.
double median_sq_distance(const Matrix& x);

// Median-heuristic bandwidth sigma = sqrt(median squared distance); 1 when degenerate.
double median_heuristic_sigma(const Matrix& x);

// Biased HSIC estimate tr(K H L H) / (n - 1)^2 between feature rows and group
// labels, with K an RBF kernel and L the linear kernel on one-hot groups
// (L(i, j) = [g_i == g_j]). Bandwidth defaults to the median heuristic on the
// features. Requires n >= 4.
double hsic(const Matrix& features, std::span<const int> groups,
            std::optional<double> sigma = std::nullopt);

// As hsic(); also adds d HSIC / d features into `grad` (n x h). With the median
// heuristic the bandwidth is a function of the features and its derivative
// (through the median pair) is included.
double hsic_with_grad(const Matrix& features, std::span<const int> groups, Matrix& grad,
                      std::optional<double> sigma = std::nullopt);

// Biased squared MMD: mean K(A, A) + mean K(B, B) - 2 mean K(A, B).
double mmd2(const Matrix& a, const Matrix& b, double sigma);

// As mmd2(); also adds d MMD^2 / d a into `grad_a`.
double mmd2_with_grad(const Matrix& a, const Matrix& b, double sigma, Matrix& grad_a);

}  // namespace fairpg
