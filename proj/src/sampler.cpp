// SPDX-License-Identifier: Apache-2.0

#include "ddpm/sampler.hpp"

#include <cmath>
#include <string>

#include "ddpm/errors.hpp"
#include "ddpm/forward.hpp"
#include "ddpm/kernels.hpp"

namespace ddpm {

namespace {

void check_state(const Batch& x, int t) {
  for (double v : x.x)
    if (!std::isfinite(v))
      throw DivergenceError("sampler: non-finite state at level " +
                            std::to_string(t));
}

Batch reverse_chain(const ReverseModel& model, const Schedule& s, Batch x,
                    int t_start, const Rng& rng, const SampleOptions& opts,
                    SampleTrace* trace) {
  if (t_start < 1 || t_start > s.T())
    throw ConfigError("sampler: start level " + std::to_string(t_start) +
                      " outside 1.." + std::to_string(s.T()));
  check_state(x, t_start);
  if (trace) {
    trace->levels.push_back(t_start);
    trace->states.push_back(x);
  }
  for (int t = t_start; t >= 1; --t) {
    const PosteriorCoefficients pc = posterior_coefficients(s, t);
    const Batch y = model.predict(x, t);
    Batch mean = mean_from_prediction(pc, x, y, model.mode);
    const double sigma2 = model_sigma2(model, pc, s, t);
    // Level 1 is special. The data-conditioned posterior there is a point
    // mass, so posterior_variance models emit the mean with exactly zero
    // noise. noising_variance models keep a positive variance at every
    // level, including the last, unless denoise_final zeroes it.
    const bool add_noise =
        t > 1 || (model.variance_mode == "noising_variance" &&
                  !opts.denoise_final);
    if (add_noise && sigma2 > 0.0) {
      Batch next(x.n, x.D);
      kernels::add_scaled_noise(next.x.data(), mean.x.data(),
                                std::sqrt(sigma2), x.n, x.D,
                                rng.child(static_cast<std::uint64_t>(t)));
      x = std::move(next);
    } else {
      x = std::move(mean);
    }
    check_state(x, t - 1);
    if (trace) {
      trace->levels.push_back(t - 1);
      trace->states.push_back(x);
    }
  }
  return x;
}

}  // namespace

Batch generate(const ReverseModel& model, const Schedule& s, std::size_t n,
               const Rng& rng, const SampleOptions& opts,
               SampleTrace* trace) {
  Batch x(n, model.D);
  kernels::fill_normal(x.x.data(), x.n, x.D, rng.child(0));
  return reverse_chain(model, s, std::move(x), s.T(), rng, opts, trace);
}

Batch denoise_from(const ReverseModel& model, const Schedule& s,
                   const Batch& x_start, int t_start, const Rng& rng,
                   const SampleOptions& opts, SampleTrace* trace) {
  return reverse_chain(model, s, x_start, t_start, rng, opts, trace);
}

}  // namespace ddpm
