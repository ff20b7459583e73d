// SPDX-License-Identifier: Apache-2.0

#include "ddpm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "ddpm/errors.hpp"
#include "ddpm/io.hpp"

namespace ddpm {

void adam_step(std::vector<double>& theta, const std::vector<double>& grad,
               AdamState& state, const AdamHyper& hyper) {
  const std::size_t n = theta.size();
  if (grad.size() != n)
    throw ConfigError("adam_step: gradient size mismatch");
  if (state.m.empty()) state.m.assign(n, 0.0);
  if (state.v.empty()) state.v.assign(n, 0.0);
  if (state.m.size() != n || state.v.size() != n)
    throw ConfigError("adam_step: state size mismatch");
  state.step += 1;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grad[i];
    state.v[i] =
        hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    theta[i] -= hyper.step_size * mhat / (std::sqrt(vhat) + hyper.epsilon);
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (levels_per_step < 1)
    throw ConfigError("train: levels_per_step must be positive");
  if (steps < 0) throw ConfigError("train: steps must be non-negative");
  if (!(adam.step_size > 0.0))
    throw ConfigError("train: step size must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("train: moment decays must lie in [0, 1)");
  if (!(adam.epsilon > 0.0))
    throw ConfigError("train: epsilon must be positive");
  if (checkpoint_interval < 0)
    throw ConfigError("train: checkpoint_interval must be non-negative");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["objective"] = c.objective;
  j["weights"] = c.weights.kind;
  if (c.weights.kind == "custom") j["weight_values"] = c.weights.values;
  j["level_sampling"] =
      c.sampling == LevelSampling::kUniform ? "uniform" : "weighted";
  j["batch_size"] = c.batch_size;
  j["levels_per_step"] = c.levels_per_step;
  j["steps"] = c.steps;
  j["step_size"] = c.adam.step_size;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["epsilon"] = c.adam.epsilon;
  j["seed"] = c.seed;
  j["checkpoint_interval"] = c.checkpoint_interval;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("objective")) c.objective = j.at("objective");
    if (j.contains("weights")) {
      const std::string kind = j.at("weights");
      if (kind == "unit") {
        c.weights = WeightScheme::unit();
      } else if (kind == "simplified_cancelling") {
        c.weights = WeightScheme::simplified_cancelling();
      } else if (kind == "custom") {
        c.weights = WeightScheme::custom(
            j.at("weight_values").get<std::vector<double>>());
      } else {
        throw ConfigError("train: unknown weight scheme '" + kind + "'");
      }
    }
    if (j.contains("level_sampling")) {
      const std::string ls = j.at("level_sampling");
      if (ls == "uniform")
        c.sampling = LevelSampling::kUniform;
      else if (ls == "weighted")
        c.sampling = LevelSampling::kWeighted;
      else
        throw ConfigError("train: unknown level_sampling '" + ls + "'");
    }
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size");
    if (j.contains("levels_per_step"))
      c.levels_per_step = j.at("levels_per_step");
    if (j.contains("steps")) c.steps = j.at("steps");
    if (j.contains("step_size")) c.adam.step_size = j.at("step_size");
    if (j.contains("beta1")) c.adam.beta1 = j.at("beta1");
    if (j.contains("beta2")) c.adam.beta2 = j.at("beta2");
    if (j.contains("epsilon")) c.adam.epsilon = j.at("epsilon");
    if (j.contains("seed")) c.seed = j.at("seed");
    if (j.contains("checkpoint_interval"))
      c.checkpoint_interval = j.at("checkpoint_interval");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

void check_mode_objective(const std::string& mode,
                          const std::string& variance_mode,
                          const std::string& objective) {
  if (objective == "simplified_ddpm" && mode != "predict_eps")
    throw ConfigError(
        "objective simplified_ddpm requires mode predict_eps, got " + mode);
  if (objective == "vdm" &&
      (mode != "predict_x0" || variance_mode != "posterior_variance"))
    throw ConfigError(
        "objective vdm requires predict_x0 with posterior_variance");
  if (objective != "naive" && objective != "rao_blackwell" &&
      objective != "simplified_ddpm" && objective != "vdm" &&
      objective != "elbo")
    throw ConfigError("unknown objective '" + objective + "'");
}

namespace {

struct StepOutcome {
  double loss = 0.0;
};

StepOutcome run_one_step(const TrainConfig& config, const DataSpec& spec,
                         const Schedule& s, DenoiserParams& params,
                         AdamState& adam, const Rng& data_root,
                         const Rng& obj_root, std::int64_t step) {
  const Rng data_stream = data_root.child(static_cast<std::uint64_t>(step));
  const Rng obj_stream = obj_root.child(static_cast<std::uint64_t>(step));
  const Batch x0 = sample_data(spec, config.batch_size, data_stream);
  const ObjectiveFn fn =
      make_objective(config.objective, s, config.weights, x0, obj_stream,
                     config.levels_per_step, config.sampling);
  auto [loss, grad] = loss_and_gradient(params, fn);
  if (!std::isfinite(loss))
    throw DivergenceError("train: non-finite loss at step " +
                          std::to_string(step));
  adam_step(params.theta, grad, adam, config.adam);
  return {loss};
}

}  // namespace

TrainResult train(const TrainConfig& config, const DataSpec& spec,
                  const Schedule& s, const DenoiserParams& init,
                  const AdamState* resume_state) {
  config.validate();
  check_mode_objective(init.mode, init.variance_mode, config.objective);

  TrainResult r;
  r.params = init;
  if (resume_state) r.adam = *resume_state;
  const Rng root(config.seed);
  const Rng data_root = root.child(0);
  const Rng obj_root = root.child(1);

  for (std::int64_t step = r.adam.step + 1; step <= config.steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    const StepOutcome out =
        run_one_step(config, spec, s, r.params, r.adam, data_root, obj_root,
                     step);
    const auto stop = std::chrono::steady_clock::now();
    const double ms =
        std::chrono::duration<double, std::milli>(stop - start).count();
    r.log.push_back({step, out.loss, ms});
  }
  return r;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = "ddpm-checkpoint-v1";
  j["step"] = c.step;
  j["params"] = c.params.to_json();
  j["adam"]["step"] = c.adam.step;
  j["adam"]["m"] = c.adam.m;
  j["adam"]["v"] = c.adam.v;
  j["schedule"] = c.schedule.to_json();
  j["data"] = c.data.to_json();
  j["train"] = train_config_to_json(c.config);
  io::write_json(path, j);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const nlohmann::json j = io::read_json(path);
  try {
    if (j.at("format") != "ddpm-checkpoint-v1")
      throw ConfigError(path.string() + ": unknown checkpoint format");
    AdamState adam;
    adam.step = j.at("adam").at("step");
    adam.m = j.at("adam").at("m").get<std::vector<double>>();
    adam.v = j.at("adam").at("v").get<std::vector<double>>();
    return Checkpoint{j.at("step"),
                      DenoiserParams::from_json(j.at("params")),
                      std::move(adam),
                      Schedule::from_json(j.at("schedule")),
                      DataSpec::from_json(j.at("data")),
                      train_config_from_json(j.at("train"))};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

TrainResult train_run(const std::filesystem::path& run_dir,
                      const TrainConfig& config, const DataSpec& spec,
                      const Schedule& s, const DenoiserParams& init,
                      const std::filesystem::path& resume_from) {
  io::ensure_dir(run_dir);

  DenoiserParams params = init;
  AdamState adam;
  std::vector<StepRecord> log;
  if (!resume_from.empty()) {
    Checkpoint c = load_checkpoint(resume_from);
    params = std::move(c.params);
    adam = std::move(c.adam);
    // The restored run must continue under its own recorded settings for
    // the bit-identity guarantee to mean anything; only the step horizon
    // may differ.
    auto a = train_config_to_json(c.config);
    auto b = train_config_to_json(config);
    a.erase("steps");
    b.erase("steps");
    if (a != b)
      throw ConfigError("train: resume config differs from checkpoint");
  }

  config.validate();
  check_mode_objective(params.mode, params.variance_mode, config.objective);
  const Rng root(config.seed);
  const Rng data_root = root.child(0);
  const Rng obj_root = root.child(1);

  for (std::int64_t step = adam.step + 1; step <= config.steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    const StepOutcome out =
        run_one_step(config, spec, s, params, adam, data_root, obj_root,
                     step);
    const auto stop = std::chrono::steady_clock::now();
    const double ms =
        std::chrono::duration<double, std::milli>(stop - start).count();
    log.push_back({step, out.loss, ms});
    if (config.checkpoint_interval > 0 &&
        step % config.checkpoint_interval == 0 && step < config.steps) {
      save_checkpoint(
          run_dir / ("checkpoint-" + std::to_string(step) + ".json"),
          {step, params, adam, s, spec, config});
    }
  }

  save_checkpoint(run_dir / "checkpoint-final.json",
                  {config.steps, params, adam, s, spec, config});

  // loss.csv is a primary output (byte-identical across reruns);
  // timing.csv is informational and varies run to run.
  io::CsvTable loss_table;
  loss_table.header = {"step", "loss"};
  io::CsvTable time_table;
  time_table.header = {"step", "wall_ms"};
  for (const auto& rec : log) {
    loss_table.rows.push_back({static_cast<double>(rec.step), rec.loss});
    time_table.rows.push_back({static_cast<double>(rec.step), rec.wall_ms});
  }
  // A resumed run only appends the new rows; rewrite from the restored log
  // is not possible, so keep whatever loss.csv already has and extend it.
  const auto loss_path = run_dir / "loss.csv";
  if (!resume_from.empty() && std::filesystem::exists(loss_path)) {
    io::CsvTable prior = io::read_csv(loss_path);
    for (auto& row : loss_table.rows) prior.rows.push_back(row);
    io::write_csv(loss_path, prior);
  } else {
    io::write_csv(loss_path, loss_table);
  }
  io::write_csv(run_dir / "timing.csv", time_table);

  return {std::move(params), std::move(adam), std::move(log)};
}

std::vector<double> smoothed(const std::vector<double>& values, double alpha) {
  std::vector<double> out;
  out.reserve(values.size());
  double acc = 0.0;
  bool first = true;
  for (double v : values) {
    acc = first ? v : alpha * v + (1.0 - alpha) * acc;
    first = false;
    out.push_back(acc);
  }
  return out;
}

}  // namespace ddpm
