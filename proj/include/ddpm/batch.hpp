// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddpm {

/// Dense row-major matrix of n data points in D dimensions, with an optional
/// per-row fidelity-level tag used by mixed-level batches.
struct Batch {
  std::size_t n = 0;
  std::size_t D = 0;
  std::vector<double> x;       // n * D, row major
  std::vector<int> level;      // empty, or one level index per row

  Batch() = default;
  Batch(std::size_t n_, std::size_t D_) : n(n_), D(D_), x(n_ * D_, 0.0) {}

  double* row(std::size_t i) { return x.data() + i * D; }
  const double* row(std::size_t i) const { return x.data() + i * D; }

  double& at(std::size_t i, std::size_t j) { return x[i * D + j]; }
  double at(std::size_t i, std::size_t j) const { return x[i * D + j]; }

  bool same_shape(const Batch& o) const { return n == o.n && D == o.D; }
};

inline void require_same_shape(const Batch& a, const Batch& b,
                               const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": batch shape mismatch");
  }
}

}  // namespace ddpm
