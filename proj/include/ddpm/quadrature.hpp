// SPDX-License-Identifier: Apache-2.0

// Gauss-Hermite quadrature in the probabilists' convention: nodes and
// weights such that sum_i w_i f(x_i) approximates E[f(Z)] for Z ~ N(0,1),
// exact for polynomials up to degree 2n-1.

#pragma once

#include <cstddef>
#include <vector>

namespace ddpm {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sums to 1
};

QuadratureRule gauss_hermite(std::size_t n);

}  // namespace ddpm
