// SPDX-License-Identifier: Apache-2.0

#include "ddpm/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace ddpm::kernels {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Chunked accumulation for mean_var: chunk boundaries are fixed, so the
// summation tree is identical however the chunks are scheduled.
constexpr std::size_t kChunk = 4096;

}  // namespace

namespace ref {

void affine_batch(double* y, const double* W, const double* b,
                  const double* x, std::size_t n, std::size_t in,
                  std::size_t out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x + i * in;
    double* yi = y + i * out;
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* Wo = W + o * in;
      for (std::size_t k = 0; k < in; ++k) acc += Wo[k] * xi[k];
      yi[o] = acc;
    }
  }
}

void affine_backward_input(double* dx, const double* W, const double* dy,
                           std::size_t n, std::size_t in, std::size_t out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* dyi = dy + i * out;
    double* dxi = dx + i * in;
    for (std::size_t k = 0; k < in; ++k) {
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) acc += W[o * in + k] * dyi[o];
      dxi[k] = acc;
    }
  }
}

void affine_backward_params(double* dW, double* db, const double* x,
                            const double* dy, std::size_t n, std::size_t in,
                            std::size_t out) {
  for (std::size_t o = 0; o < out; ++o) {
    double acc_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc_b += dy[i * out + o];
    db[o] = acc_b;
    for (std::size_t k = 0; k < in; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        acc += dy[i * out + o] * x[i * in + k];
      dW[o * in + k] = acc;
    }
  }
}

void silu(double* y, const double* x, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) y[i] = x[i] * sigmoid(x[i]);
}

void silu_backward(double* dx, const double* x, const double* dy,
                   std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) {
    const double s = sigmoid(x[i]);
    dx[i] = dy[i] * (s + x[i] * s * (1.0 - s));
  }
}

void ar1_step(double* y, const double* x, double lam, double sig,
              std::size_t n, std::size_t D, const Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) {
    Rng row = rng.child(i);
    for (std::size_t j = 0; j < D; ++j)
      y[i * D + j] = lam * x[i * D + j] + sig * row.normal();
  }
}

void fill_normal(double* y, std::size_t n, std::size_t D, const Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) {
    Rng row = rng.child(i);
    for (std::size_t j = 0; j < D; ++j) y[i * D + j] = row.normal();
  }
}

void axpby(double* y, double a, const double* x, double b, const double* z,
           std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) y[i] = a * x[i] + b * z[i];
}

void add_scaled_noise(double* y, const double* x, double sd, std::size_t n,
                      std::size_t D, const Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) {
    Rng row = rng.child(i);
    for (std::size_t j = 0; j < D; ++j)
      y[i * D + j] = x[i * D + j] + sd * row.normal();
  }
}

void mean_var(const double* x, std::size_t len, double* mean, double* var) {
  const std::size_t chunks = (len + kChunk - 1) / kChunk;
  double s = 0.0, s2 = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t lo = c * kChunk;
    const std::size_t hi = lo + kChunk < len ? lo + kChunk : len;
    double cs = 0.0, cs2 = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      cs += x[i];
      cs2 += x[i] * x[i];
    }
    s += cs;
    s2 += cs2;
  }
  const double m = s / static_cast<double>(len);
  *mean = m;
  *var = s2 / static_cast<double>(len) - m * m;
}

}  // namespace ref

void affine_batch(double* y, const double* W, const double* b,
                  const double* x, std::size_t n, std::size_t in,
                  std::size_t out) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const double* xi = x + i * in;
    double* yi = y + i * out;
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* Wo = W + o * in;
      for (std::size_t k = 0; k < in; ++k) acc += Wo[k] * xi[k];
      yi[o] = acc;
    }
  }
}

void affine_backward_input(double* dx, const double* W, const double* dy,
                           std::size_t n, std::size_t in, std::size_t out) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const double* dyi = dy + i * out;
    double* dxi = dx + i * in;
    for (std::size_t k = 0; k < in; ++k) {
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) acc += W[o * in + k] * dyi[o];
      dxi[k] = acc;
    }
  }
}

void affine_backward_params(double* dW, double* db, const double* x,
                            const double* dy, std::size_t n, std::size_t in,
                            std::size_t out) {
  // Parallel over output cells; the sum over rows stays in index order
  // inside each cell, so no thread count changes the rounding.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(out); ++o) {
    double acc_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc_b += dy[i * out + o];
    db[o] = acc_b;
    for (std::size_t k = 0; k < in; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        acc += dy[i * out + o] * x[i * in + k];
      dW[o * in + k] = acc;
    }
  }
}

void silu(double* y, const double* x, std::size_t len) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(len); ++i)
    y[i] = x[i] * sigmoid(x[i]);
}

void silu_backward(double* dx, const double* x, const double* dy,
                   std::size_t len) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(len); ++i) {
    const double s = sigmoid(x[i]);
    dx[i] = dy[i] * (s + x[i] * s * (1.0 - s));
  }
}

void ar1_step(double* y, const double* x, double lam, double sig,
              std::size_t n, std::size_t D, const Rng& rng) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    Rng row = rng.child(static_cast<std::uint64_t>(i));
    for (std::size_t j = 0; j < D; ++j)
      y[i * D + j] = lam * x[i * D + j] + sig * row.normal();
  }
}

void fill_normal(double* y, std::size_t n, std::size_t D, const Rng& rng) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    Rng row = rng.child(static_cast<std::uint64_t>(i));
    for (std::size_t j = 0; j < D; ++j) y[i * D + j] = row.normal();
  }
}

void axpby(double* y, double a, const double* x, double b, const double* z,
           std::size_t len) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(len); ++i)
    y[i] = a * x[i] + b * z[i];
}

void add_scaled_noise(double* y, const double* x, double sd, std::size_t n,
                      std::size_t D, const Rng& rng) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    Rng row = rng.child(static_cast<std::uint64_t>(i));
    for (std::size_t j = 0; j < D; ++j)
      y[i * D + j] = x[i * D + j] + sd * row.normal();
  }
}

void mean_var(const double* x, std::size_t len, double* mean, double* var) {
  const std::size_t chunks = (len + kChunk - 1) / kChunk;
  std::vector<double> cs(chunks, 0.0), cs2(chunks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
    const std::size_t hi = lo + kChunk < len ? lo + kChunk : len;
    double a = 0.0, a2 = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      a += x[i];
      a2 += x[i] * x[i];
    }
    cs[c] = a;
    cs2[c] = a2;
  }
  double s = 0.0, s2 = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    s += cs[c];
    s2 += cs2[c];
  }
  const double m = s / static_cast<double>(len);
  *mean = m;
  *var = s2 / static_cast<double>(len) - m * m;
}

}  // namespace ddpm::kernels
