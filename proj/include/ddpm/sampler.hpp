// SPDX-License-Identifier: Apache-2.0

// Ancestral sampling: start from the standard normal prior at the deepest
// level and walk the learned reverse kernels down to the data.

#pragma once

#include <vector>

#include "ddpm/batch.hpp"
#include "ddpm/denoiser.hpp"
#include "ddpm/rng.hpp"
#include "ddpm/schedule.hpp"

namespace ddpm {

struct SampleOptions {
  bool denoise_final = false;  // replace the level-1 draw by its mean
  bool keep_trace = false;     // record every intermediate batch
};

struct SampleTrace {
  // levels[k] is the noise level of states[k]; runs T, T-1, ..., 0.
  std::vector<int> levels;
  std::vector<Batch> states;
};

// Draws n samples by running the reverse chain from t = T down to t = 1.
// The prior draw consumes rng.child(0) and the step at level t consumes
// rng.child(t). At t = 1 a posterior_variance model adds exactly zero
// noise (the data-conditioned posterior is a point mass there); a
// noising_variance model adds noise at every level unless denoise_final
// is set.
Batch generate(const ReverseModel& model, const Schedule& s, std::size_t n,
               const Rng& rng, const SampleOptions& opts = {},
               SampleTrace* trace = nullptr);

// Continues the reverse chain from a given state at level t_start. Useful
// for denoising partially corrupted data. Stream layout matches generate:
// the step at level t consumes rng.child(t).
Batch denoise_from(const ReverseModel& model, const Schedule& s,
                   const Batch& x_start, int t_start, const Rng& rng,
                   const SampleOptions& opts = {},
                   SampleTrace* trace = nullptr);

}  // namespace ddpm
