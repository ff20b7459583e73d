// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "ddpm/batch.hpp"
#include "ddpm/denoiser.hpp"
#include "ddpm/rng.hpp"
#include "ddpm/schedule.hpp"

namespace ddpm {

/// Value of one objective evaluation. The sign convention is global: every
/// value is a quantity to MINIMISE (the negative of a log-likelihood or
/// lower-bound quantity); the single negation lives inside the objectives and
/// nowhere else.
struct LossEstimate {
  double value = 0.0;
  std::string variant;       // naive | rao_blackwell | tied | simplified_ddpm
                             // | vdm | elbo
  std::vector<int> levels;   // levels the estimate touched
  std::size_t batch = 0;
  std::string weights_id;    // description of the weight scheme, if any
};

/// Per-level weights w_{t-1} applied to the level-t term of the tied
/// objective.
struct WeightScheme {
  std::string kind = "unit";     // unit | simplified_cancelling | custom
  std::vector<double> values;    // custom only; entry t-1 weights level t

  /// w_{t-1} for level t. The cancelling scheme is
  /// (sigma_t c_t / (a_{t-1} d_t))^2, the weight under which the tied
  /// objective collapses onto the plain squared noise error.
  double weight(const Schedule& s, int t) const;

  static WeightScheme unit() { return {}; }
  static WeightScheme simplified_cancelling() {
    return {"simplified_cancelling", {}};
  }
  static WeightScheme custom(std::vector<double> v) {
    return {"custom", std::move(v)};
  }
};

/// How the tied objective draws levels: uniformly with explicit weights in
/// the summand, or in proportion to the weights with the weight moved into
/// the sampling distribution (both are unbiased for the same weighted sum).
enum class LevelSampling { kUniform, kWeighted };

/// Random-stream layout shared by the level-sampled objectives, so paired
/// seed comparisons line up draw for draw: level indices come from
/// rng.child(0); the noise for draw l comes from rng.child(1 + l).

/// Monte-Carlo estimate of the level-t term by sampling the pair
/// (x_{t-1}, x_t) given x0 and scoring log N(x_{t-1}; mu_theta, sigma2_theta).
/// Appends d(value)/d(theta) into *grad when grad is non-null.
LossEstimate naive_level_loss(const DenoiserParams& params, const Schedule& s,
                              int t, const Batch& x0, const Rng& rng,
                              std::vector<double>* grad = nullptr);

/// Evaluation-only variant for analytic models.
LossEstimate naive_level_loss(const ReverseModel& model, const Schedule& s,
                              int t, const Batch& x0, const Rng& rng);

/// The same expectation with the inner integral over x_{t-1} carried out in
/// closed form:
///   1/2 [ ((mu_post - mu_theta)^2 + var_post) / sigma2_theta
///         + log 2 pi sigma2_theta ]
/// summed per coordinate and averaged over the batch. Same value in
/// expectation as naive_level_loss, with strictly smaller sampling variance.
LossEstimate rao_blackwell_level_loss(const DenoiserParams& params,
                                      const Schedule& s, int t,
                                      const Batch& x0, const Rng& rng,
                                      std::vector<double>* grad = nullptr);

/// Evaluation-only variant for analytic models.
LossEstimate rao_blackwell_level_loss(const ReverseModel& model,
                                      const Schedule& s, int t,
                                      const Batch& x0, const Rng& rng);

/// Unbiased estimate of sum_t w_{t-1} L_{t-1}: draws levels_per_step levels
/// and scales by T / levels_per_step (or by sum w / levels_per_step under
/// weighted level sampling). naive_inner switches the per-level estimator
/// from the Rao-Blackwellised form to the naive one.
LossEstimate tied_objective(const DenoiserParams& params, const Schedule& s,
                            const WeightScheme& weights, const Batch& x0,
                            const Rng& rng, int levels_per_step,
                            std::vector<double>* grad = nullptr,
                            LevelSampling sampling = LevelSampling::kUniform,
                            bool naive_inner = false);

/// (T / 2) E[(eps - eps_hat)^2] with uniformly sampled levels. Requires
/// predict_eps mode. Equals the tied objective under the cancelling weights
/// minus a parameter-independent constant, draw for draw under a shared
/// stream.
LossEstimate simplified_ddpm_loss(const DenoiserParams& params,
                                  const Schedule& s, const Batch& x0,
                                  const Rng& rng, int levels_per_step,
                                  std::vector<double>* grad = nullptr);

/// Evaluation-only variant for analytic models.
LossEstimate simplified_ddpm_loss(const ReverseModel& model, const Schedule& s,
                                  const Batch& x0, const Rng& rng,
                                  int levels_per_step);

/// (T / 2) E[(snr(t-1) - snr(t)) (x0 - x0_hat)^2] with uniformly sampled
/// levels; the t = 1 weight is a^2 / sigma2_theta(1) = 1 / (1 - Lambda_1^2),
/// the value the level-1 identity produces with the floored variance.
/// Requires predict_x0 mode and posterior_variance. Equals the unit-weight
/// tied objective minus a parameter-independent constant.
LossEstimate vdm_loss(const DenoiserParams& params, const Schedule& s,
                      const Batch& x0, const Rng& rng, int levels_per_step,
                      std::vector<double>* grad = nullptr);

/// Evaluation-only variant for analytic models.
LossEstimate vdm_loss(const ReverseModel& model, const Schedule& s,
                      const Batch& x0, const Rng& rng, int levels_per_step);

/// The per-level weight vdm_loss applies at level t.
double vdm_weight(const Schedule& s, int t);

/// Negative evidence lower bound, estimated by simple Monte Carlo over full
/// noising trajectories:
///   -( E[ log p(x_T) + sum_t log p(x_{t-1} | x_t) ] + H )
/// where H = sum_t (D/2) log(2 pi e (1 - lambda_t^2)) is the analytic
/// entropy of the noising conditionals. Memory grows with T (the trajectory
/// is retained for the gradient pass).
LossEstimate elbo(const DenoiserParams& params, const Schedule& s,
                  const Batch& x0, const Rng& rng,
                  std::vector<double>* grad = nullptr);

/// Evaluation-only variant for analytic models.
LossEstimate elbo_with_model(const ReverseModel& model, const Schedule& s,
                             const Batch& x0, const Rng& rng);

/// The entropy constant H above.
double elbo_entropy_constant(const Schedule& s, std::size_t D);

/// Objective closure over parameters, the shape loss_and_gradient consumes.
using ObjectiveFn =
    std::function<LossEstimate(const DenoiserParams&, std::vector<double>*)>;

/// Evaluates the closure and returns (value, exact reverse-mode gradient).
/// The gradient buffer is zeroed first.
std::pair<double, std::vector<double>> loss_and_gradient(
    const DenoiserParams& params, const ObjectiveFn& loss_fn);

/// Builds the closure for a named variant with the trainer's stream layout.
ObjectiveFn make_objective(const std::string& variant, const Schedule& s,
                           const WeightScheme& weights, const Batch& x0,
                           const Rng& rng, int levels_per_step,
                           LevelSampling sampling = LevelSampling::kUniform);

}  // namespace ddpm
