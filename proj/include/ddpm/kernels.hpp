// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include "ddpm/rng.hpp"

namespace ddpm::kernels {

// Data-parallel primitives behind the denoiser, the forward process and the
// evaluation sweeps. Each kernel has a serial twin in ddpm::kernels::ref with
// identical arithmetic. The parallel versions split work only across
// independent output elements and keep every in-element reduction in a fixed
// serial order, so results are bit-identical to the reference for any thread
// count.

/// y[i] = W x[i] + b for each of n rows; W is out x in, row major.
void affine_batch(double* y, const double* W, const double* b,
                  const double* x, std::size_t n, std::size_t in,
                  std::size_t out);

/// dx[i] = W^T dy[i] for each row.
void affine_backward_input(double* dx, const double* W, const double* dy,
                           std::size_t n, std::size_t in, std::size_t out);

/// dW[o][k] = sum_i dy[i][o] x[i][k], db[o] = sum_i dy[i][o].
/// The row sum runs in index order within every (o, k) cell.
void affine_backward_params(double* dW, double* db, const double* x,
                            const double* dy, std::size_t n, std::size_t in,
                            std::size_t out);

/// Sigmoid-weighted linear unit, y = x * sigmoid(x), elementwise.
void silu(double* y, const double* x, std::size_t len);

/// dx = dy * d(silu)/dx evaluated at x, elementwise.
void silu_backward(double* dx, const double* x, const double* dy,
                   std::size_t len);

/// One auto-regressive noising step over n rows of width D:
/// y[i] = lam * x[i] + sig * eps, eps fresh per entry from rng.child(i).
void ar1_step(double* y, const double* x, double lam, double sig,
              std::size_t n, std::size_t D, const Rng& rng);

/// Fills n rows of width D with standard normal draws, row i from
/// rng.child(i).
void fill_normal(double* y, std::size_t n, std::size_t D, const Rng& rng);

/// y = a x + b z, elementwise over len values.
void axpby(double* y, double a, const double* x, double b, const double* z,
           std::size_t len);

/// y[i] = x[i] + sd * eps with eps fresh per entry, row i from rng.child(i).
void add_scaled_noise(double* y, const double* x, double sd, std::size_t n,
                      std::size_t D, const Rng& rng);

/// Mean and variance (1/n normalisation) of len values. Accumulates in
/// fixed-size chunks combined in index order, so the result does not depend
/// on the thread count.
void mean_var(const double* x, std::size_t len, double* mean, double* var);

namespace ref {

void affine_batch(double* y, const double* W, const double* b,
                  const double* x, std::size_t n, std::size_t in,
                  std::size_t out);
void affine_backward_input(double* dx, const double* W, const double* dy,
                           std::size_t n, std::size_t in, std::size_t out);
void affine_backward_params(double* dW, double* db, const double* x,
                            const double* dy, std::size_t n, std::size_t in,
                            std::size_t out);
void silu(double* y, const double* x, std::size_t len);
void silu_backward(double* dx, const double* x, const double* dy,
                   std::size_t len);
void ar1_step(double* y, const double* x, double lam, double sig,
              std::size_t n, std::size_t D, const Rng& rng);
void fill_normal(double* y, std::size_t n, std::size_t D, const Rng& rng);
void axpby(double* y, double a, const double* x, double b, const double* z,
           std::size_t len);
void add_scaled_noise(double* y, const double* x, double sd, std::size_t n,
                      std::size_t D, const Rng& rng);
void mean_var(const double* x, std::size_t len, double* mean, double* var);

}  // namespace ref

}  // namespace ddpm::kernels
