// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ddpm/batch.hpp"
#include "ddpm/forward.hpp"
#include "ddpm/rng.hpp"
#include "ddpm/schedule.hpp"

namespace ddpm {

/// Network shape: input is the data point concatenated with the level
/// embedding, hidden layers use the sigmoid-weighted linear unit, and the
/// output is one prediction per data coordinate.
struct DenoiserArch {
  std::size_t D = 1;                        // data dimension
  std::size_t E = 16;                       // embedding width, must be even
  std::vector<std::size_t> hidden = {128, 128};

  std::vector<std::size_t> layer_in() const;
  std::vector<std::size_t> layer_out() const;
  std::size_t n_layers() const { return hidden.size() + 1; }
  std::size_t n_params() const;
};

/// Parameters of the level-conditioned regressor. The flat layout is, layer
/// by layer, the row-major weight matrix followed by the bias vector; all
/// optimiser and finite-difference code works on this flat view.
struct DenoiserParams {
  DenoiserArch arch;
  std::string mode = "predict_x0";             // predict_x0 | predict_eps
  std::string variance_mode = "posterior_variance";
  // noising_variance | posterior_variance
  std::vector<double> theta;

  nlohmann::json to_json() const;
  static DenoiserParams from_json(const nlohmann::json& j);
};

/// Weights drawn from N(0, 2/fan_in), biases zero, consuming the given
/// stream in a fixed order.
DenoiserParams init_params(const DenoiserArch& arch, const std::string& mode,
                           const std::string& variance_mode, const Rng& rng);

/// Sinusoidal embedding of a level index: pairs (sin(t w_k), cos(t w_k))
/// with geometrically spaced frequencies w_k = base^(-k/(E/2)), base 10000.
/// Levels passed in are the output level t-1, so 0 is valid.
std::vector<double> level_embedding(int t, std::size_t E);

/// Raw network output for a batch at level t. The network is conditioned on
/// the output level and therefore receives the embedding of t-1.
Batch predict(const DenoiserParams& p, const Batch& x_t, int t);

/// Per-layer forward intermediates recorded by predict_with_tape, sufficient
/// to accumulate d(scalar)/d(theta) from d(scalar)/d(output).
struct GradientTape {
  int t = 0;
  std::size_t n = 0;
  std::vector<double> input;               // n x (D + E)
  std::vector<std::vector<double>> pre;    // pre-activations per layer
  std::vector<std::vector<double>> post;   // activations per layer
};

Batch predict_with_tape(const DenoiserParams& p, const Batch& x_t, int t,
                        GradientTape* tape);

/// Accumulates the gradient of a scalar loss into grad (same layout as
/// theta), given the loss gradient with respect to the network output.
void backprop(const DenoiserParams& p, const GradientTape& tape,
              const Batch& dloss_dout, std::vector<double>* grad);

/// Reverse-conditional mean from a network prediction.
/// predict_x0 mode:   a * prediction + b * x_t
/// predict_eps mode:  (a/c) (x_t - d * prediction) + b * x_t
Batch mean_from_prediction(const PosteriorCoefficients& pc, const Batch& x_t,
                           const Batch& prediction, const std::string& mode);

/// d(mean)/d(prediction), the constant the chain rule needs: a in
/// predict_x0 mode, -(a d / c) in predict_eps mode.
double mean_prediction_coeff(const PosteriorCoefficients& pc,
                             const std::string& mode);

/// The fixed variance assigned to the reverse conditional at level t.
/// noising_variance:   1 - lambda_t^2
/// posterior_variance: the exact posterior variance for t >= 2; at t = 1 the
/// exact value is 0, which no Gaussian density admits, so the level-1
/// noising variance (the same limit the identities produce) is used instead.
/// The sampler never uses this floor: its final posterior-variance step adds
/// no noise.
double variance_for_level(const PosteriorCoefficients& pc, const Schedule& s,
                          int t, const std::string& variance_mode);

/// A reverse model as the sampler and the evaluation sweeps see it: any
/// predictor with a declared parameterisation, trained or analytic.
/// sigma2_override, when set, replaces variance_for_level so test oracles can
/// pin arbitrary per-level variances.
struct ReverseModel {
  std::string mode;
  std::string variance_mode;
  std::size_t D = 1;
  std::function<Batch(const Batch& x_t, int t)> predict;
  std::function<double(int t)> sigma2_override;
};

/// The model's variance at level t, honouring sigma2_override.
double model_sigma2(const ReverseModel& m, const PosteriorCoefficients& pc,
                    const Schedule& s, int t);

ReverseModel as_reverse_model(const DenoiserParams& p);

}  // namespace ddpm
