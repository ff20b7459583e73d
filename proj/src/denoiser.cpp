// SPDX-License-Identifier: Apache-2.0

#include "ddpm/denoiser.hpp"

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "ddpm/errors.hpp"
#include "ddpm/kernels.hpp"

namespace ddpm {

namespace {
constexpr double kEmbedBase = 10000.0;

void check_arch(const DenoiserArch& a) {
  if (a.D < 1) throw ConfigError("denoiser: D must be >= 1");
  if (a.E < 2 || a.E % 2 != 0)
    throw ConfigError("denoiser: embed dim must be even and >= 2");
}

void check_mode(const std::string& mode) {
  if (mode != "predict_x0" && mode != "predict_eps")
    throw ConfigError("denoiser: unknown mode '" + mode + "'");
}

void check_variance_mode(const std::string& vm) {
  if (vm != "noising_variance" && vm != "posterior_variance")
    throw ConfigError("denoiser: unknown variance mode '" + vm + "'");
}
}  // namespace

std::vector<std::size_t> DenoiserArch::layer_in() const {
  std::vector<std::size_t> in;
  in.push_back(D + E);
  for (std::size_t h : hidden) in.push_back(h);
  return in;
}

std::vector<std::size_t> DenoiserArch::layer_out() const {
  std::vector<std::size_t> out(hidden);
  out.push_back(D);
  return out;
}

std::size_t DenoiserArch::n_params() const {
  const auto in = layer_in();
  const auto out = layer_out();
  std::size_t n = 0;
  for (std::size_t l = 0; l < in.size(); ++l) n += in[l] * out[l] + out[l];
  return n;
}

DenoiserParams init_params(const DenoiserArch& arch, const std::string& mode,
                           const std::string& variance_mode, const Rng& rng) {
  check_arch(arch);
  check_mode(mode);
  check_variance_mode(variance_mode);
  DenoiserParams p;
  p.arch = arch;
  p.mode = mode;
  p.variance_mode = variance_mode;
  p.theta.assign(arch.n_params(), 0.0);
  const auto in = arch.layer_in();
  const auto out = arch.layer_out();
  std::size_t off = 0;
  for (std::size_t l = 0; l < in.size(); ++l) {
    Rng layer = rng.child(l);
    const double sd = std::sqrt(2.0 / static_cast<double>(in[l]));
    for (std::size_t i = 0; i < in[l] * out[l]; ++i)
      p.theta[off + i] = sd * layer.normal();
    off += in[l] * out[l] + out[l];  // biases stay zero
  }
  return p;
}

std::vector<double> level_embedding(int t, std::size_t E) {
  if (E < 2 || E % 2 != 0)
    throw ConfigError("level_embedding: embed dim must be even and >= 2");
  std::vector<double> e(E);
  const std::size_t half = E / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double w =
        std::pow(kEmbedBase, -static_cast<double>(k) / static_cast<double>(half));
    e[2 * k] = std::sin(t * w);
    e[2 * k + 1] = std::cos(t * w);
  }
  return e;
}

namespace {

// Shared forward pass; tape is optional.
Batch forward_pass(const DenoiserParams& p, const Batch& x_t, int t,
                   GradientTape* tape) {
  const auto& a = p.arch;
  if (x_t.D != a.D) throw ConfigError("denoiser: batch dimension mismatch");
  const std::size_t n = x_t.n;
  const auto in = a.layer_in();
  const auto out = a.layer_out();
  const std::size_t L = a.n_layers();

  // Input: [x | embedding(t-1)] per row. The embedding is identical across
  // rows of a single-level batch.
  const auto emb = level_embedding(t - 1, a.E);
  std::vector<double> input(n * (a.D + a.E));
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(&input[i * (a.D + a.E)], x_t.row(i), a.D * sizeof(double));
    std::memcpy(&input[i * (a.D + a.E) + a.D], emb.data(),
                a.E * sizeof(double));
  }

  std::vector<double> cur = input;
  std::vector<std::vector<double>> pre_store, post_store;
  std::size_t off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<double> pre(n * out[l]);
    kernels::affine_batch(pre.data(), &p.theta[off],
                          &p.theta[off + in[l] * out[l]], cur.data(), n,
                          in[l], out[l]);
    off += in[l] * out[l] + out[l];
    if (l + 1 < L) {
      std::vector<double> post(n * out[l]);
      kernels::silu(post.data(), pre.data(), pre.size());
      if (tape) {
        pre_store.push_back(pre);
        post_store.push_back(post);
      }
      cur = std::move(post);
    } else {
      cur = std::move(pre);
    }
  }

  if (tape) {
    tape->t = t;
    tape->n = n;
    tape->input = std::move(input);
    tape->pre = std::move(pre_store);
    tape->post = std::move(post_store);
  }

  Batch y(n, a.D);
  y.x = std::move(cur);
  return y;
}

}  // namespace

Batch predict(const DenoiserParams& p, const Batch& x_t, int t) {
  return forward_pass(p, x_t, t, nullptr);
}

Batch predict_with_tape(const DenoiserParams& p, const Batch& x_t, int t,
                        GradientTape* tape) {
  return forward_pass(p, x_t, t, tape);
}

void backprop(const DenoiserParams& p, const GradientTape& tape,
              const Batch& dloss_dout, std::vector<double>* grad) {
  const auto& a = p.arch;
  const std::size_t n = tape.n;
  const auto in = a.layer_in();
  const auto out = a.layer_out();
  const std::size_t L = a.n_layers();
  if (grad->size() != p.theta.size())
    throw ConfigError("backprop: gradient buffer size mismatch");

  std::vector<std::size_t> offs(L);
  {
    std::size_t off = 0;
    for (std::size_t l = 0; l < L; ++l) {
      offs[l] = off;
      off += in[l] * out[l] + out[l];
    }
  }

  std::vector<double> delta = dloss_dout.x;  // d loss / d layer output
  for (std::size_t l = L; l-- > 0;) {
    const double* layer_input =
        l == 0 ? tape.input.data() : tape.post[l - 1].data();
    std::vector<double> dW(in[l] * out[l]), db(out[l]);
    kernels::affine_backward_params(dW.data(), db.data(), layer_input,
                                    delta.data(), n, in[l], out[l]);
    double* gW = grad->data() + offs[l];
    double* gb = gW + in[l] * out[l];
    for (std::size_t i = 0; i < dW.size(); ++i) gW[i] += dW[i];
    for (std::size_t i = 0; i < db.size(); ++i) gb[i] += db[i];
    if (l == 0) break;
    std::vector<double> dpost(n * in[l]);
    kernels::affine_backward_input(dpost.data(), &p.theta[offs[l]],
                                   delta.data(), n, in[l], out[l]);
    delta.resize(n * in[l]);
    kernels::silu_backward(delta.data(), tape.pre[l - 1].data(), dpost.data(),
                           dpost.size());
  }
}

Batch mean_from_prediction(const PosteriorCoefficients& pc, const Batch& x_t,
                           const Batch& prediction, const std::string& mode) {
  require_same_shape(x_t, prediction, "mean_from_prediction");
  check_mode(mode);
  Batch mean(x_t.n, x_t.D);
  if (mode == "predict_x0") {
    kernels::axpby(mean.x.data(), pc.a, prediction.x.data(), pc.b,
                   x_t.x.data(), x_t.x.size());
  } else {
    const double cx = pc.a / pc.c + pc.b;
    const double cp = -pc.a * pc.d / pc.c;
    kernels::axpby(mean.x.data(), cx, x_t.x.data(), cp, prediction.x.data(),
                   x_t.x.size());
  }
  return mean;
}

double mean_prediction_coeff(const PosteriorCoefficients& pc,
                             const std::string& mode) {
  check_mode(mode);
  return mode == "predict_x0" ? pc.a : -pc.a * pc.d / pc.c;
}

double variance_for_level(const PosteriorCoefficients& pc, const Schedule& s,
                          int t, const std::string& variance_mode) {
  check_variance_mode(variance_mode);
  if (variance_mode == "noising_variance") return s.sigma2(t);
  return t == 1 ? s.var(1) : pc.var;
}

ReverseModel as_reverse_model(const DenoiserParams& p) {
  ReverseModel m;
  m.mode = p.mode;
  m.variance_mode = p.variance_mode;
  m.D = p.arch.D;
  m.predict = [p](const Batch& x_t, int t) { return predict(p, x_t, t); };
  return m;
}

double model_sigma2(const ReverseModel& m, const PosteriorCoefficients& pc,
                    const Schedule& s, int t) {
  if (m.sigma2_override) return m.sigma2_override(t);
  return variance_for_level(pc, s, t, m.variance_mode);
}

nlohmann::json DenoiserParams::to_json() const {
  nlohmann::json j;
  j["mode"] = mode;
  j["variance_mode"] = variance_mode;
  j["embed_dim"] = arch.E;
  const auto in = arch.layer_in();
  const auto out = arch.layer_out();
  nlohmann::json layers = nlohmann::json::array();
  std::size_t off = 0;
  for (std::size_t l = 0; l < in.size(); ++l) {
    nlohmann::json layer;
    layer["in"] = in[l];
    layer["out"] = out[l];
    layer["W"] = std::vector<double>(theta.begin() + off,
                                     theta.begin() + off + in[l] * out[l]);
    layer["b"] = std::vector<double>(
        theta.begin() + off + in[l] * out[l],
        theta.begin() + off + in[l] * out[l] + out[l]);
    layers.push_back(std::move(layer));
    off += in[l] * out[l] + out[l];
  }
  j["layers"] = std::move(layers);
  return j;
}

DenoiserParams DenoiserParams::from_json(const nlohmann::json& j) {
  try {
    DenoiserParams p;
    p.mode = j.at("mode").get<std::string>();
    p.variance_mode = j.at("variance_mode").get<std::string>();
    check_mode(p.mode);
    check_variance_mode(p.variance_mode);
    const auto& layers = j.at("layers");
    if (layers.empty()) throw ConfigError("denoiser: no layers");
    p.arch.E = j.at("embed_dim").get<std::size_t>();
    p.arch.D = layers.back().at("out").get<std::size_t>();
    p.arch.hidden.clear();
    for (std::size_t l = 0; l + 1 < layers.size(); ++l)
      p.arch.hidden.push_back(layers[l].at("out").get<std::size_t>());
    check_arch(p.arch);
    const auto in = p.arch.layer_in();
    const auto out = p.arch.layer_out();
    p.theta.reserve(p.arch.n_params());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto W = layers[l].at("W").get<std::vector<double>>();
      const auto b = layers[l].at("b").get<std::vector<double>>();
      if (layers[l].at("in").get<std::size_t>() != in[l] ||
          W.size() != in[l] * out[l] || b.size() != out[l])
        throw ConfigError("denoiser: inconsistent layer shapes in JSON");
      p.theta.insert(p.theta.end(), W.begin(), W.end());
      p.theta.insert(p.theta.end(), b.begin(), b.end());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("denoiser: bad JSON: ") + e.what());
  }
}

}  // namespace ddpm
