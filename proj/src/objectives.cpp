// SPDX-License-Identifier: Apache-2.0

#include "ddpm/objectives.hpp"

#include <cmath>
#include <utility>

#include "ddpm/errors.hpp"
#include "ddpm/forward.hpp"
#include "ddpm/kernels.hpp"

namespace ddpm {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Level draws for the level-sampled objectives. u in (0, 1] makes
// ceil(u T) exactly uniform on 1..T.
int draw_uniform_level(Rng& levels, int T) {
  const double u = levels.uniform();
  int t = static_cast<int>(std::ceil(u * T));
  if (t < 1) t = 1;
  if (t > T) t = T;
  return t;
}

int draw_weighted_level(Rng& levels, const std::vector<double>& cumw) {
  const double u = levels.uniform() * cumw.back();
  std::size_t k = 0;
  while (k + 1 < cumw.size() && u > cumw[k]) ++k;
  return static_cast<int>(k) + 1;
}

// Gaussian regression score for one level, shared by the naive and
// Rao-Blackwell paths. target is x_{t-1} (naive) or mu_post (RB); extra_var
// is 0 (naive) or the exact posterior variance (RB).
struct LevelTerm {
  double value = 0.0;
  Batch dvalue_dmean;  // filled when grad requested
};

LevelTerm gaussian_level_term(const Batch& target, const Batch& mean,
                              double extra_var, double sigma2, bool want_grad) {
  LevelTerm term;
  const std::size_t len = target.x.size();
  const double n = static_cast<double>(target.n);
  double acc = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const double r = target.x[i] - mean.x[i];
    acc += r * r;
  }
  const double logdet =
      static_cast<double>(len) * std::log(2.0 * kPi * sigma2);
  term.value = 0.5 * (acc + static_cast<double>(len) * extra_var) / sigma2 +
               0.5 * logdet;
  term.value /= n;
  if (want_grad) {
    term.dvalue_dmean = Batch(target.n, target.D);
    for (std::size_t i = 0; i < len; ++i)
      term.dvalue_dmean.x[i] = -(target.x[i] - mean.x[i]) / (sigma2 * n);
  }
  return term;
}

// One Rao-Blackwellised level evaluation with the shared stream layout:
// the (x_t, eps) draw comes from stream.child(0).
LossEstimate rb_core(const DenoiserParams* params, const ReverseModel* model,
                     const Schedule& s, int t, const Batch& x0,
                     const Rng& stream, std::vector<double>* grad,
                     double scale) {
  const PosteriorCoefficients pc = posterior_coefficients(s, t);
  const NoisyDraw draw = conditional_on_data(s, t, x0, stream.child(0));
  const std::string& mode = params ? params->mode : model->mode;

  GradientTape tape;
  Batch y = params ? (grad ? predict_with_tape(*params, draw.x_t, t, &tape)
                           : predict(*params, draw.x_t, t))
                   : model->predict(draw.x_t, t);
  const Batch mu_theta = mean_from_prediction(pc, draw.x_t, y, mode);
  const double sigma2 =
      params ? variance_for_level(pc, s, t, params->variance_mode)
             : model_sigma2(*model, pc, s, t);
  const Batch mu_post = posterior_mean(pc, x0, draw.x_t);

  LevelTerm term =
      gaussian_level_term(mu_post, mu_theta, pc.var, sigma2, grad != nullptr);
  if (grad) {
    const double coeff = mean_prediction_coeff(pc, mode) * scale;
    for (auto& g : term.dvalue_dmean.x) g *= coeff;
    backprop(*params, tape, term.dvalue_dmean, grad);
  }

  LossEstimate est;
  est.value = scale * term.value;
  est.variant = "rao_blackwell";
  est.levels = {t};
  est.batch = x0.n;
  return est;
}

LossEstimate naive_core(const DenoiserParams* params,
                        const ReverseModel* model, const Schedule& s, int t,
                        const Batch& x0, const Rng& stream,
                        std::vector<double>* grad, double scale) {
  const PosteriorCoefficients pc = posterior_coefficients(s, t);
  const std::string& mode = params ? params->mode : model->mode;
  // Two conditional draws: x_{t-1} | x_0, then x_t | x_{t-1}. Level 0 is the
  // data itself.
  Batch x_prev =
      t == 1 ? x0 : conditional_on_data(s, t - 1, x0, stream.child(0)).x_t;
  Batch x_t = noise_step(s, t, x_prev, stream.child(1));

  GradientTape tape;
  Batch y = params ? (grad ? predict_with_tape(*params, x_t, t, &tape)
                           : predict(*params, x_t, t))
                   : model->predict(x_t, t);
  const Batch mu_theta = mean_from_prediction(pc, x_t, y, mode);
  const double sigma2 =
      params ? variance_for_level(pc, s, t, params->variance_mode)
             : model_sigma2(*model, pc, s, t);

  LevelTerm term =
      gaussian_level_term(x_prev, mu_theta, 0.0, sigma2, grad != nullptr);
  if (grad) {
    const double coeff = mean_prediction_coeff(pc, mode) * scale;
    for (auto& g : term.dvalue_dmean.x) g *= coeff;
    backprop(*params, tape, term.dvalue_dmean, grad);
  }

  LossEstimate est;
  est.value = scale * term.value;
  est.variant = "naive";
  est.levels = {t};
  est.batch = x0.n;
  return est;
}

void check_finite(const LossEstimate& est, const char* what) {
  if (!std::isfinite(est.value))
    throw DivergenceError(std::string(what) + ": non-finite loss value");
}

}  // namespace

double WeightScheme::weight(const Schedule& s, int t) const {
  if (kind == "unit") return 1.0;
  if (kind == "simplified_cancelling") {
    // sigma_t^2 / kappa_t with kappa_t = (a d / c)^2, the factor relating
    // (mu_post - mu_theta)^2 to (eps - eps_hat)^2. At t = 1 this reduces to
    // Lambda_1^2.
    const PosteriorCoefficients pc = posterior_coefficients(s, t);
    return s.sigma2(t) * pc.c * pc.c / (pc.a * pc.a * pc.d * pc.d);
  }
  if (kind == "custom") {
    if (static_cast<int>(values.size()) != s.T())
      throw ConfigError("weights: custom vector length must equal T");
    const double w = values[static_cast<std::size_t>(t - 1)];
    if (!(w > 0.0)) throw ConfigError("weights: weights must be positive");
    return w;
  }
  throw ConfigError("weights: unknown kind '" + kind + "'");
}

LossEstimate naive_level_loss(const DenoiserParams& params, const Schedule& s,
                              int t, const Batch& x0, const Rng& rng,
                              std::vector<double>* grad) {
  LossEstimate est = naive_core(&params, nullptr, s, t, x0, rng, grad, 1.0);
  check_finite(est, "naive_level_loss");
  return est;
}

LossEstimate naive_level_loss(const ReverseModel& model, const Schedule& s,
                              int t, const Batch& x0, const Rng& rng) {
  LossEstimate est = naive_core(nullptr, &model, s, t, x0, rng, nullptr, 1.0);
  check_finite(est, "naive_level_loss");
  return est;
}

LossEstimate rao_blackwell_level_loss(const DenoiserParams& params,
                                      const Schedule& s, int t,
                                      const Batch& x0, const Rng& rng,
                                      std::vector<double>* grad) {
  LossEstimate est = rb_core(&params, nullptr, s, t, x0, rng, grad, 1.0);
  check_finite(est, "rao_blackwell_level_loss");
  return est;
}

LossEstimate rao_blackwell_level_loss(const ReverseModel& model,
                                      const Schedule& s, int t,
                                      const Batch& x0, const Rng& rng) {
  LossEstimate est = rb_core(nullptr, &model, s, t, x0, rng, nullptr, 1.0);
  check_finite(est, "rao_blackwell_level_loss");
  return est;
}

LossEstimate tied_objective(const DenoiserParams& params, const Schedule& s,
                            const WeightScheme& weights, const Batch& x0,
                            const Rng& rng, int levels_per_step,
                            std::vector<double>* grad, LevelSampling sampling,
                            bool naive_inner) {
  if (levels_per_step < 1)
    throw ConfigError("tied_objective: levels_per_step must be >= 1");
  const int T = s.T();
  Rng levels = rng.child(0);

  std::vector<double> cumw;
  if (sampling == LevelSampling::kWeighted) {
    cumw.resize(T);
    double acc = 0.0;
    for (int t = 1; t <= T; ++t) {
      acc += weights.weight(s, t);
      cumw[t - 1] = acc;
    }
  }

  LossEstimate est;
  est.variant = naive_inner ? "naive" : "rao_blackwell";
  est.batch = x0.n;
  est.weights_id = weights.kind + (sampling == LevelSampling::kWeighted
                                       ? "/weighted_sampling"
                                       : "/uniform_sampling");
  const double L = static_cast<double>(levels_per_step);
  for (int l = 0; l < levels_per_step; ++l) {
    const int t = sampling == LevelSampling::kUniform
                      ? draw_uniform_level(levels, T)
                      : draw_weighted_level(levels, cumw);
    // Uniform sampling keeps the weight in the summand; weighted sampling
    // moves it into the sampling distribution. Both estimate
    // sum_t w_{t-1} L_{t-1} without bias.
    const double scale = sampling == LevelSampling::kUniform
                             ? static_cast<double>(T) / L *
                                   weights.weight(s, t)
                             : cumw.back() / L;
    const Rng stream = rng.child(1 + static_cast<std::uint64_t>(l));
    LossEstimate part =
        naive_inner ? naive_core(&params, nullptr, s, t, x0, stream, grad,
                                 scale)
                    : rb_core(&params, nullptr, s, t, x0, stream, grad,
                              scale);
    est.value += part.value;
    est.levels.push_back(t);
  }
  check_finite(est, "tied_objective");
  return est;
}

namespace {

LossEstimate simplified_core(const DenoiserParams* params,
                             const ReverseModel* model, const Schedule& s,
                             const Batch& x0, const Rng& rng,
                             int levels_per_step, std::vector<double>* grad) {
  const std::string& mode = params ? params->mode : model->mode;
  if (mode != "predict_eps")
    throw ConfigError("simplified_ddpm_loss: predict_eps mode required");
  if (levels_per_step < 1)
    throw ConfigError("simplified_ddpm_loss: levels_per_step must be >= 1");
  const int T = s.T();
  Rng levels = rng.child(0);
  LossEstimate est;
  est.variant = "simplified_ddpm";
  est.batch = x0.n;
  est.weights_id = "implicit_cancelling";
  const double n = static_cast<double>(x0.n);
  for (int l = 0; l < levels_per_step; ++l) {
    const int t = draw_uniform_level(levels, T);
    const Rng stream = rng.child(1 + static_cast<std::uint64_t>(l));
    const NoisyDraw draw = conditional_on_data(s, t, x0, stream.child(0));
    GradientTape tape;
    Batch y = params ? (grad ? predict_with_tape(*params, draw.x_t, t, &tape)
                             : predict(*params, draw.x_t, t))
                     : model->predict(draw.x_t, t);
    const double scale =
        static_cast<double>(T) /
        (2.0 * static_cast<double>(levels_per_step));
    double acc = 0.0;
    for (std::size_t i = 0; i < y.x.size(); ++i) {
      const double r = draw.eps.x[i] - y.x[i];
      acc += r * r;
    }
    est.value += scale * acc / n;
    if (grad) {
      Batch dy(y.n, y.D);
      for (std::size_t i = 0; i < y.x.size(); ++i)
        dy.x[i] = scale * 2.0 * (y.x[i] - draw.eps.x[i]) / n;
      backprop(*params, tape, dy, grad);
    }
    est.levels.push_back(t);
  }
  check_finite(est, "simplified_ddpm_loss");
  return est;
}

}  // namespace

LossEstimate simplified_ddpm_loss(const DenoiserParams& params,
                                  const Schedule& s, const Batch& x0,
                                  const Rng& rng, int levels_per_step,
                                  std::vector<double>* grad) {
  return simplified_core(&params, nullptr, s, x0, rng, levels_per_step, grad);
}

LossEstimate simplified_ddpm_loss(const ReverseModel& model, const Schedule& s,
                                  const Batch& x0, const Rng& rng,
                                  int levels_per_step) {
  return simplified_core(nullptr, &model, s, x0, rng, levels_per_step,
                         nullptr);
}

double vdm_weight(const Schedule& s, int t) {
  // Equal to a^2 / var by the posterior identities; at t = 1 the floored
  // variance gives 1 / (1 - Lambda_1^2).
  return t == 1 ? 1.0 / s.var(1) : s.snr(t - 1) - s.snr(t);
}

namespace {

LossEstimate vdm_core(const DenoiserParams* params, const ReverseModel* model,
                      const Schedule& s, const Batch& x0, const Rng& rng,
                      int levels_per_step, std::vector<double>* grad) {
  const std::string& mode = params ? params->mode : model->mode;
  const std::string& vmode =
      params ? params->variance_mode : model->variance_mode;
  if (mode != "predict_x0" || vmode != "posterior_variance")
    throw ConfigError(
        "vdm_loss: predict_x0 mode with posterior_variance required");
  if (levels_per_step < 1)
    throw ConfigError("vdm_loss: levels_per_step must be >= 1");
  const int T = s.T();
  Rng levels = rng.child(0);
  LossEstimate est;
  est.variant = "vdm";
  est.batch = x0.n;
  est.weights_id = "snr_difference";
  const double n = static_cast<double>(x0.n);
  for (int l = 0; l < levels_per_step; ++l) {
    const int t = draw_uniform_level(levels, T);
    const Rng stream = rng.child(1 + static_cast<std::uint64_t>(l));
    const NoisyDraw draw = conditional_on_data(s, t, x0, stream.child(0));
    GradientTape tape;
    Batch y = params ? (grad ? predict_with_tape(*params, draw.x_t, t, &tape)
                             : predict(*params, draw.x_t, t))
                     : model->predict(draw.x_t, t);
    const double scale = static_cast<double>(T) /
                         (2.0 * static_cast<double>(levels_per_step)) *
                         vdm_weight(s, t);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.x.size(); ++i) {
      const double r = x0.x[i] - y.x[i];
      acc += r * r;
    }
    est.value += scale * acc / n;
    if (grad) {
      Batch dy(y.n, y.D);
      for (std::size_t i = 0; i < y.x.size(); ++i)
        dy.x[i] = scale * 2.0 * (y.x[i] - x0.x[i]) / n;
      backprop(*params, tape, dy, grad);
    }
    est.levels.push_back(t);
  }
  check_finite(est, "vdm_loss");
  return est;
}

}  // namespace

LossEstimate vdm_loss(const DenoiserParams& params, const Schedule& s,
                      const Batch& x0, const Rng& rng, int levels_per_step,
                      std::vector<double>* grad) {
  return vdm_core(&params, nullptr, s, x0, rng, levels_per_step, grad);
}

LossEstimate vdm_loss(const ReverseModel& model, const Schedule& s,
                      const Batch& x0, const Rng& rng, int levels_per_step) {
  return vdm_core(nullptr, &model, s, x0, rng, levels_per_step, nullptr);
}

double elbo_entropy_constant(const Schedule& s, std::size_t D) {
  double h = 0.0;
  for (int t = 1; t <= s.T(); ++t)
    h += 0.5 * static_cast<double>(D) *
         std::log(2.0 * kPi * std::exp(1.0) * s.sigma2(t));
  return h;
}

namespace {

LossEstimate elbo_core(const DenoiserParams* params,
                       const ReverseModel* model, const Schedule& s,
                       const Batch& x0, const Rng& rng,
                       std::vector<double>* grad) {
  const int T = s.T();
  const std::string& mode = params ? params->mode : model->mode;
  const double n = static_cast<double>(x0.n);

  // Full trajectory x_0..x_T; step t consumes rng.child(t).
  std::vector<Batch> xs(static_cast<std::size_t>(T) + 1);
  xs[0] = x0;
  for (int t = 1; t <= T; ++t)
    xs[t] = noise_step(s, t, xs[t - 1],
                       rng.child(static_cast<std::uint64_t>(t)));

  // log p(x_T) under the standard normal prior.
  double loglik = 0.0;
  for (double v : xs[T].x) loglik -= 0.5 * (v * v + std::log(2.0 * kPi));
  loglik /= n;

  for (int t = 1; t <= T; ++t) {
    const PosteriorCoefficients pc = posterior_coefficients(s, t);
    GradientTape tape;
    Batch y = params ? (grad ? predict_with_tape(*params, xs[t], t, &tape)
                             : predict(*params, xs[t], t))
                     : model->predict(xs[t], t);
    const Batch mu = mean_from_prediction(pc, xs[t], y, mode);
    const double sigma2 =
        params ? variance_for_level(pc, s, t, params->variance_mode)
               : model_sigma2(*model, pc, s, t);
    LevelTerm term =
        gaussian_level_term(xs[t - 1], mu, 0.0, sigma2, grad != nullptr);
    loglik -= term.value;  // term.value is the negative mean log density
    if (grad) {
      // d(-loglik)/d(mean) equals the term's own gradient.
      const double coeff = mean_prediction_coeff(pc, mode);
      for (auto& g : term.dvalue_dmean.x) g *= coeff;
      backprop(*params, tape, term.dvalue_dmean, grad);
    }
  }

  LossEstimate est;
  est.value = -(loglik + elbo_entropy_constant(s, x0.D));
  est.variant = "elbo";
  est.batch = x0.n;
  est.weights_id = "unit";
  check_finite(est, "elbo");
  return est;
}

}  // namespace

LossEstimate elbo(const DenoiserParams& params, const Schedule& s,
                  const Batch& x0, const Rng& rng,
                  std::vector<double>* grad) {
  return elbo_core(&params, nullptr, s, x0, rng, grad);
}

LossEstimate elbo_with_model(const ReverseModel& model, const Schedule& s,
                             const Batch& x0, const Rng& rng) {
  return elbo_core(nullptr, &model, s, x0, rng, nullptr);
}

std::pair<double, std::vector<double>> loss_and_gradient(
    const DenoiserParams& params, const ObjectiveFn& loss_fn) {
  std::vector<double> grad(params.theta.size(), 0.0);
  const LossEstimate est = loss_fn(params, &grad);
  return {est.value, std::move(grad)};
}

ObjectiveFn make_objective(const std::string& variant, const Schedule& s,
                           const WeightScheme& weights, const Batch& x0,
                           const Rng& rng, int levels_per_step,
                           LevelSampling sampling) {
  if (variant == "naive") {
    return [=, &s](const DenoiserParams& p, std::vector<double>* g) {
      return tied_objective(p, s, weights, x0, rng, levels_per_step, g,
                            sampling, /*naive_inner=*/true);
    };
  }
  if (variant == "rao_blackwell") {
    return [=, &s](const DenoiserParams& p, std::vector<double>* g) {
      return tied_objective(p, s, weights, x0, rng, levels_per_step, g,
                            sampling, /*naive_inner=*/false);
    };
  }
  if (variant == "simplified_ddpm") {
    return [=, &s](const DenoiserParams& p, std::vector<double>* g) {
      return simplified_ddpm_loss(p, s, x0, rng, levels_per_step, g);
    };
  }
  if (variant == "vdm") {
    return [=, &s](const DenoiserParams& p, std::vector<double>* g) {
      return vdm_loss(p, s, x0, rng, levels_per_step, g);
    };
  }
  if (variant == "elbo") {
    return [=, &s](const DenoiserParams& p, std::vector<double>* g) {
      return elbo(p, s, x0, rng, g);
    };
  }
  throw ConfigError("objective: unknown variant '" + variant + "'");
}

}  // namespace ddpm
