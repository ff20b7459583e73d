// SPDX-License-Identifier: Apache-2.0

// Adam training loop over the level-sampled objectives, with JSON
// checkpoints that make interrupted runs bit-identical to uninterrupted
// ones.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddpm/datasets.hpp"
#include "ddpm/denoiser.hpp"
#include "ddpm/objectives.hpp"
#include "ddpm/rng.hpp"
#include "ddpm/schedule.hpp"

namespace ddpm {

struct AdamHyper {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

// Bias-corrected adaptive-moment update, in place.
void adam_step(std::vector<double>& theta, const std::vector<double>& grad,
               AdamState& state, const AdamHyper& hyper);

struct TrainConfig {
  std::string objective = "simplified_ddpm";
  WeightScheme weights = WeightScheme::unit();
  LevelSampling sampling = LevelSampling::kUniform;
  std::size_t batch_size = 256;
  int levels_per_step = 1;
  std::int64_t steps = 1000;
  AdamHyper adam;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_interval = 0;  // 0 writes only the final one

  void validate() const;  // positive counts, step size > 0
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Rejects objective variants the parameterisation cannot express before
// any step runs: simplified_ddpm needs predict_eps, vdm needs predict_x0
// with posterior_variance.
void check_mode_objective(const std::string& mode,
                          const std::string& variance_mode,
                          const std::string& objective);

struct StepRecord {
  std::int64_t step = 0;  // 1-based, the step that produced this loss
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  DenoiserParams params;
  AdamState adam;
  std::vector<StepRecord> log;
};

// Runs config.steps Adam updates starting from init (and optionally a
// restored optimiser state / step counter when resuming). Each step k
// (1-based) draws its data batch from Rng(seed).child(0).child(k) and its
// objective stream from Rng(seed).child(1).child(k), so the trajectory is
// a pure function of (config, spec, schedule, init) regardless of where a
// resume happened.
TrainResult train(const TrainConfig& config, const DataSpec& spec,
                  const Schedule& s, const DenoiserParams& init,
                  const AdamState* resume_state = nullptr);

struct Checkpoint {
  std::int64_t step;
  DenoiserParams params;
  AdamState adam;
  Schedule schedule;
  DataSpec data;
  TrainConfig config;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Full artifact-producing run: writes loss.csv, timing.csv and
// checkpoint-<step>.json / checkpoint-final.json under run_dir. When
// resume_from is non-empty, restores that checkpoint and continues to
// config.steps.
TrainResult train_run(const std::filesystem::path& run_dir,
                      const TrainConfig& config, const DataSpec& spec,
                      const Schedule& s, const DenoiserParams& init,
                      const std::filesystem::path& resume_from = {});

// Exponential smoothing used by the loss-trend checks.
std::vector<double> smoothed(const std::vector<double>& values, double alpha);

}  // namespace ddpm
