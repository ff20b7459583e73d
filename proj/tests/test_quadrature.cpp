// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "doctest.h"
#include "ddpm/quadrature.hpp"

using ddpm::QuadratureRule;
using ddpm::gauss_hermite;

namespace {

// E[Z^k] under the rule: sum_i w_i x_i^k.
double rule_moment(const QuadratureRule& q, int k) {
  double acc = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    acc += q.weights[i] * std::pow(q.nodes[i], k);
  }
  return acc;
}

}  // namespace

TEST_CASE("gauss_hermite: weights are positive and sum to one") {
  for (std::size_t n : {1, 2, 3, 5, 16, 64}) {
    CAPTURE(n);
    const QuadratureRule q = gauss_hermite(n);
    REQUIRE(q.nodes.size() == n);
    REQUIRE(q.weights.size() == n);
    double sum = 0.0;
    for (double w : q.weights) {
      CHECK(w > 0.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("gauss_hermite: nodes are symmetric about zero with equal weights") {
  for (std::size_t n : {2, 3, 8, 25}) {
    CAPTURE(n);
    const QuadratureRule q = gauss_hermite(n);
    // Nodes arrive sorted ascending; the rule is symmetric, so node i and
    // node n-1-i are negatives of each other and share a weight.
    for (std::size_t i = 0; i + 1 < q.nodes.size(); ++i) {
      CHECK(q.nodes[i] < q.nodes[i + 1]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = n - 1 - i;
      CHECK(q.nodes[i] == doctest::Approx(-q.nodes[j]).epsilon(1e-13));
      CHECK(q.weights[i] == doctest::Approx(q.weights[j]).epsilon(1e-13));
    }
    if (n % 2 == 1) CHECK(std::abs(q.nodes[n / 2]) < 1e-14);
  }
}

TEST_CASE("gauss_hermite: one-point rule is the mean") {
  const QuadratureRule q = gauss_hermite(1);
  CHECK(std::abs(q.nodes[0]) < 1e-15);
  CHECK(q.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("gauss_hermite: two-point rule has nodes at +-1 with weight 1/2") {
  const QuadratureRule q = gauss_hermite(2);
  CHECK(q.nodes[0] == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(q.nodes[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(q.weights[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(q.weights[1] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("gauss_hermite: three-point rule is 0, +-sqrt(3) with weights 2/3, 1/6") {
  const QuadratureRule q = gauss_hermite(3);
  const double r3 = std::sqrt(3.0);
  CHECK(q.nodes[0] == doctest::Approx(-r3).epsilon(1e-14));
  CHECK(std::abs(q.nodes[1]) < 1e-14);
  CHECK(q.nodes[2] == doctest::Approx(r3).epsilon(1e-14));
  CHECK(q.weights[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(q.weights[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(q.weights[2] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("gauss_hermite: five-point rule matches tabulated values") {
  // Probabilists' five-point rule: the centre weight is exactly 8/15 and the
  // outer node pairs sit at the roots of He_5(x) = x^5 - 10x^3 + 15x.
  const QuadratureRule q = gauss_hermite(5);
  CHECK(q.weights[2] == doctest::Approx(8.0 / 15.0).epsilon(1e-13));
  CHECK(std::abs(q.nodes[2]) < 1e-13);
  CHECK(q.nodes[3] == doctest::Approx(1.35562617997426587).epsilon(1e-13));
  CHECK(q.nodes[4] == doctest::Approx(2.85697001387280565).epsilon(1e-13));
  // The tabulated nodes really are roots of He_5.
  for (double x : q.nodes) {
    const double he5 = std::pow(x, 5) - 10.0 * std::pow(x, 3) + 15.0 * x;
    CHECK(std::abs(he5) < 1e-11);
  }
}

TEST_CASE("gauss_hermite: reproduces standard normal moments exactly") {
  // E[Z^2]=1, E[Z^4]=3, E[Z^6]=15, E[Z^8]=105; a rule with n points is exact
  // for polynomials of degree 2n-1, so n >= 5 covers all four even moments
  // (odd moments vanish by symmetry).
  const std::vector<std::pair<int, double>> moments = {
      {1, 0.0}, {2, 1.0}, {3, 0.0}, {4, 3.0}, {6, 15.0}, {8, 105.0}};
  for (std::size_t n : {5, 8, 16, 32, 64}) {
    CAPTURE(n);
    const QuadratureRule q = gauss_hermite(n);
    for (const auto& [k, expect] : moments) {
      CAPTURE(k);
      const double got = rule_moment(q, k);
      CHECK(got == doctest::Approx(expect).epsilon(1e-11).scale(1.0));
    }
  }
}

TEST_CASE("gauss_hermite: converges on the moment generating function") {
  // E[exp(s Z)] = exp(s^2 / 2); the integrand is entire so a moderate rule
  // nails it to near machine precision.
  const double s = 0.7;
  const QuadratureRule q = gauss_hermite(24);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    acc += q.weights[i] * std::exp(s * q.nodes[i]);
  }
  CHECK(acc == doctest::Approx(std::exp(s * s / 2.0)).epsilon(1e-12));
}

TEST_CASE("gauss_hermite: rejects an empty rule") {
  CHECK_THROWS_AS(gauss_hermite(0), std::invalid_argument);
}
