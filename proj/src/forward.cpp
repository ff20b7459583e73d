// SPDX-License-Identifier: Apache-2.0

#include "ddpm/forward.hpp"

#include <cmath>
#include <utility>

#include "ddpm/errors.hpp"
#include "ddpm/kernels.hpp"

namespace ddpm {

PosteriorCoefficients posterior_coefficients(const Schedule& s, int t) {
  if (t < 1 || t > s.T()) {
    throw ConfigError("posterior_coefficients: level " + std::to_string(t) +
                      " out of range");
  }
  PosteriorCoefficients pc;
  pc.t = t;
  pc.c = s.Lambda(t);
  pc.d = std::sqrt(s.var(t));
  if (t == 1) {
    pc.a = 1.0;
    pc.b = 0.0;
    pc.var = 0.0;
    return pc;
  }
  // Gaussian product identity applied to
  // q(x_{t-1} | x_0) q(x_t | x_{t-1}), normalised in x_{t-1}.
  const double vt = s.var(t);
  pc.a = s.Lambda(t - 1) * s.sigma2(t) / vt;
  pc.b = s.var(t - 1) * s.lambda(t) / vt;
  pc.var = s.var(t - 1) * s.sigma2(t) / vt;
  return pc;
}

Batch noise_step(const Schedule& s, int t, const Batch& x_prev,
                 const Rng& rng) {
  const double lam = s.lambda(t);
  const double sig = std::sqrt(s.sigma2(t));
  Batch out(x_prev.n, x_prev.D);
  kernels::ar1_step(out.x.data(), x_prev.x.data(), lam, sig, x_prev.n,
                    x_prev.D, rng);
  return out;
}

NoisyDraw conditional_on_data(const Schedule& s, int t, const Batch& x0,
                              const Rng& rng) {
  const double c = s.Lambda(t);
  const double d = std::sqrt(s.var(t));
  NoisyDraw out;
  out.eps = Batch(x0.n, x0.D);
  out.x_t = Batch(x0.n, x0.D);
  kernels::fill_normal(out.eps.x.data(), x0.n, x0.D, rng);
  kernels::axpby(out.x_t.x.data(), c, x0.x.data(), d, out.eps.x.data(),
                 x0.x.size());
  return out;
}

Batch posterior_mean(const PosteriorCoefficients& pc, const Batch& x0,
                     const Batch& x_t) {
  require_same_shape(x0, x_t, "posterior_mean");
  Batch out(x0.n, x0.D);
  kernels::axpby(out.x.data(), pc.a, x0.x.data(), pc.b, x_t.x.data(),
                 x0.x.size());
  return out;
}

Batch posterior_sample(const PosteriorCoefficients& pc, const Batch& x0,
                       const Batch& x_t, const Rng& rng) {
  Batch mean = posterior_mean(pc, x0, x_t);
  if (pc.var == 0.0) return mean;
  Batch out(x0.n, x0.D);
  kernels::add_scaled_noise(out.x.data(), mean.x.data(), std::sqrt(pc.var),
                            x0.n, x0.D, rng);
  return out;
}

Batch forward_chain(const Schedule& s, const Batch& x0, int t_stop,
                    const Rng& rng) {
  if (t_stop < 0 || t_stop > s.T()) {
    throw ConfigError("forward_chain: level " + std::to_string(t_stop) +
                      " out of range");
  }
  Batch cur = x0;
  for (int t = 1; t <= t_stop; ++t) {
    cur = noise_step(s, t, cur, rng.child(static_cast<std::uint64_t>(t)));
  }
  return cur;
}

}  // namespace ddpm
