// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ddpm/batch.hpp"
#include "ddpm/rng.hpp"
#include "ddpm/schedule.hpp"

namespace ddpm {

/// Coefficients of the two closed-form Gaussian conditionals at level t.
///
/// The conditional on clean data is
///   q(x_t | x_0) = N(c x_0, d^2)   with c = Lambda_t, d = sqrt(1 - Lambda_t^2)
/// and the posterior over the level below, given both endpoints, is
///   q(x_{t-1} | x_0, x_t) = N(a x_0 + b x_t, var).
///
/// Exact identities (tested):
///   a + b Lambda_t        = Lambda_{t-1}        (tower property of the mean)
///   var + b^2 (1-Lambda_t^2) = 1 - Lambda_{t-1}^2  (law of total variance)
///   a^2 / var             = snr(t-1) - snr(t)   (for t >= 2)
struct PosteriorCoefficients {
  int t = 0;
  double a = 0.0;    // weight on x_0
  double b = 0.0;    // weight on x_t
  double var = 0.0;  // posterior variance, 0 at t = 1
  double c = 0.0;    // Lambda_t
  double d = 0.0;    // sqrt(1 - Lambda_t^2)
};

/// Posterior coefficients for q(x_{t-1} | x_0, x_t). At t = 1, x_0 itself is
/// the conditioned level and the posterior degenerates to (a=1, b=0, var=0).
PosteriorCoefficients posterior_coefficients(const Schedule& s, int t);

/// One noising step: lambda_t x_prev + sqrt(1 - lambda_t^2) eps.
Batch noise_step(const Schedule& s, int t, const Batch& x_prev,
                 const Rng& rng);

struct NoisyDraw {
  Batch x_t;
  Batch eps;  // the injected standard normal, kept so objectives can target it
};

/// Draw x_t | x_0 directly: x_t = Lambda_t x_0 + sqrt(1 - Lambda_t^2) eps.
NoisyDraw conditional_on_data(const Schedule& s, int t, const Batch& x0,
                              const Rng& rng);

/// Mean of the posterior, a x_0 + b x_t.
Batch posterior_mean(const PosteriorCoefficients& pc, const Batch& x0,
                     const Batch& x_t);

/// Draw from the posterior, a x_0 + b x_t + sqrt(var) eps.
Batch posterior_sample(const PosteriorCoefficients& pc, const Batch& x0,
                       const Batch& x_t, const Rng& rng);

/// Runs the chain stepwise from x_0 to level t_stop, one noise_step per
/// level; step t consumes rng.child(t).
Batch forward_chain(const Schedule& s, const Batch& x0, int t_stop,
                    const Rng& rng);

}  // namespace ddpm
