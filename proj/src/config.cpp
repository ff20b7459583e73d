// SPDX-License-Identifier: Apache-2.0

#include "ddpm/config.hpp"

#include "ddpm/errors.hpp"

namespace ddpm {

namespace {

EvalConfig eval_from_json(const nlohmann::json& j) {
  EvalConfig e;
  if (j.contains("metrics"))
    e.metrics = j.at("metrics").get<std::vector<std::string>>();
  if (j.contains("samples")) e.samples = j.at("samples");
  if (j.contains("bins")) e.bins = j.at("bins");
  if (j.contains("range")) {
    const auto r = j.at("range").get<std::vector<double>>();
    if (r.size() != 2) throw ConfigError("eval.range must be [lo, hi]");
    e.range_lo = r[0];
    e.range_hi = r[1];
  }
  if (j.contains("levels")) e.levels = j.at("levels").get<std::vector<int>>();
  if (j.contains("endpoint_T_values"))
    e.endpoint_T_values =
        j.at("endpoint_T_values").get<std::vector<int>>();
  if (j.contains("endpoint_snr_max"))
    e.endpoint_snr_max = j.at("endpoint_snr_max");
  if (j.contains("endpoint_snr_min"))
    e.endpoint_snr_min = j.at("endpoint_snr_min");
  if (j.contains("elbo_n")) e.elbo_n = j.at("elbo_n");
  if (j.contains("thresholds"))
    e.thresholds =
        j.at("thresholds").get<std::map<std::string, double>>();
  for (const std::string& m : e.metrics)
    if (m != "moments" && m != "histogram_kl" && m != "score_rmse" &&
        m != "endpoint_gap" && m != "elbo_gap")
      throw ConfigError("eval: unknown metric '" + m + "'");
  return e;
}

nlohmann::json eval_to_json(const EvalConfig& e) {
  nlohmann::json j;
  j["metrics"] = e.metrics;
  j["samples"] = e.samples;
  j["bins"] = e.bins;
  j["range"] = {e.range_lo, e.range_hi};
  j["levels"] = e.levels;
  j["endpoint_T_values"] = e.endpoint_T_values;
  j["endpoint_snr_max"] = e.endpoint_snr_max;
  j["endpoint_snr_min"] = e.endpoint_snr_min;
  j["elbo_n"] = e.elbo_n;
  j["thresholds"] = e.thresholds;
  return j;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("seed")) c.seed = j.at("seed");
    if (j.contains("output_dir"))
      c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("data")) c.data = DataSpec::from_json(j.at("data"));
    if (!j.contains("schedule"))
      throw ConfigError("config: missing schedule");
    c.schedule_json = j.at("schedule");
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.contains("embed_dim")) c.arch.E = m.at("embed_dim");
      if (m.contains("hidden"))
        c.arch.hidden = m.at("hidden").get<std::vector<std::size_t>>();
      if (m.contains("mode")) c.mode = m.at("mode");
      if (m.contains("variance_mode")) c.variance_mode = m.at("variance_mode");
    }
    c.arch.D = c.data.D;
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (!j.contains("train") || !j.at("train").contains("seed"))
      c.train.seed = c.seed;
    if (j.contains("eval")) c.eval = eval_from_json(j.at("eval"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  j["data"] = data.to_json();
  j["schedule"] = schedule_json;
  j["model"]["embed_dim"] = arch.E;
  j["model"]["hidden"] = arch.hidden;
  j["model"]["mode"] = mode;
  j["model"]["variance_mode"] = variance_mode;
  j["train"] = train_config_to_json(train);
  j["eval"] = eval_to_json(eval);
  return j;
}

DenoiserParams RunConfig::make_init_params() const {
  return init_params(arch, mode, variance_mode, Rng(seed).child(2));
}

void RunConfig::validate() const {
  if (mode != "predict_x0" && mode != "predict_eps")
    throw ConfigError("config: unknown mode '" + mode + "'");
  if (variance_mode != "posterior_variance" &&
      variance_mode != "noising_variance")
    throw ConfigError("config: unknown variance_mode '" + variance_mode +
                      "'");
  if (arch.E == 0 || arch.E % 2 != 0)
    throw ConfigError("config: embed_dim must be positive and even");
  train.validate();
  check_mode_objective(mode, variance_mode, train.objective);
  // Surface schedule problems before any command starts writing files.
  make_schedule();
  if (eval.bins < 10) throw ConfigError("config: eval.bins must be >= 10");
  if (!(eval.range_hi > eval.range_lo))
    throw ConfigError("config: eval.range must be increasing");
}

}  // namespace ddpm
