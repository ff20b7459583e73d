// SPDX-License-Identifier: Apache-2.0

#include "ddpm/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace ddpm {

namespace {

// He_k(x) via the three-term recurrence He_{k+1} = x He_k - k He_{k-1}.
double hermite(std::size_t n, double x) {
  double hm = 0.0, h = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double next = x * h - static_cast<double>(k) * hm;
    hm = h;
    h = next;
  }
  return h;
}

double bisect_root(std::size_t n, double a, double b) {
  double fa = hermite(n, a);
  for (int iter = 0; iter < 200 && b - a > 1e-16 * (1.0 + std::abs(a)); ++iter) {
    const double mid = 0.5 * (a + b);
    const double fm = hermite(n, mid);
    if ((fa <= 0.0) == (fm <= 0.0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
    }
  }
  // One Newton polish using He_n' = n He_{n-1}.
  double x = 0.5 * (a + b);
  for (int iter = 0; iter < 4; ++iter) {
    const double v = hermite(n, x);
    const double d = static_cast<double>(n) * hermite(n - 1, x);
    if (d == 0.0) break;
    x -= v / d;
  }
  return x;
}

}  // namespace

QuadratureRule gauss_hermite(std::size_t n) {
  if (n == 0) throw std::invalid_argument("gauss_hermite: n must be >= 1");

  // Roots of successive polynomials interlace, so the k roots of He_k are
  // bracketed by the k-1 roots of He_{k-1} plus outer bounds. Build up
  // from He_1 whose root is 0.
  std::vector<double> roots{0.0};
  for (std::size_t k = 2; k <= n; ++k) {
    const double bound = 2.0 * std::sqrt(static_cast<double>(k)) + 5.0;
    std::vector<double> next(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double a = i == 0 ? -bound : roots[i - 1];
      const double b = i == k - 1 ? bound : roots[i];
      next[i] = bisect_root(k, a, b);
    }
    roots = std::move(next);
  }

  QuadratureRule rule;
  rule.nodes = std::move(roots);
  rule.weights.resize(n);

  // w_i = n! / (n^2 He_{n-1}(x_i)^2), evaluated in logs to keep large n
  // away from factorial overflow.
  double log_fact = 0.0;
  for (std::size_t k = 2; k <= n; ++k)
    log_fact += std::log(static_cast<double>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const double h = hermite(n - 1, rule.nodes[i]);
    rule.weights[i] = std::exp(log_fact -
                               2.0 * std::log(static_cast<double>(n)) -
                               2.0 * std::log(std::abs(h)));
  }

  // The weights sum to 1 analytically; renormalise away the residual
  // floating-point drift and symmetrise the node set exactly.
  double sum = 0.0;
  for (double w : rule.weights) sum += w;
  for (double& w : rule.weights) w /= sum;
  for (std::size_t i = 0; i < n / 2; ++i) {
    const std::size_t j = n - 1 - i;
    const double mag = 0.5 * (std::abs(rule.nodes[i]) + rule.nodes[j]);
    rule.nodes[i] = -mag;
    rule.nodes[j] = mag;
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.weights[i] = w;
    rule.weights[j] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

}  // namespace ddpm
