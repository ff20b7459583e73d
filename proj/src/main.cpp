// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddpm/config.hpp"
#include "ddpm/datasets.hpp"
#include "ddpm/errors.hpp"
#include "ddpm/eval.hpp"
#include "ddpm/io.hpp"
#include "ddpm/objectives.hpp"
#include "ddpm/sampler.hpp"
#include "ddpm/schedule.hpp"
#include "ddpm/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using ddpm::ConfigError;

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin + ": invalid seed '" + text + "'");
  }
}

// Seed precedence: explicit flag, then DDPM_SEED, then the config file.
void apply_seed_overrides(nlohmann::json& j, const std::string& seed_flag) {
  const char* env = std::getenv("DDPM_SEED");
  if (env) j["seed"] = parse_seed(env, "DDPM_SEED");
  if (!seed_flag.empty()) j["seed"] = parse_seed(seed_flag, "--seed");
  if ((env || !seed_flag.empty()) && j.contains("train") &&
      j["train"].is_object())
    j["train"].erase("seed");
}

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

struct ScheduleArgs {
  std::string config;
  std::string out;
  std::string kind;
  int T = 0;
};

int cmd_schedule(const ScheduleArgs& a) {
  nlohmann::json j = ddpm::io::read_json(a.config);
  if (!a.kind.empty()) j["schedule"]["kind"] = a.kind;
  if (a.T > 0) j["schedule"]["T"] = a.T;
  const ddpm::RunConfig cfg = ddpm::RunConfig::from_json(j);
  const ddpm::Schedule s = cfg.make_schedule();

  const fs::path dir = a.out.empty() ? cfg.output_dir : fs::path(a.out);
  ddpm::io::ensure_dir(dir);
  ddpm::io::CsvTable table;
  table.header = {"t", "lambda", "Lambda", "sigma2", "snr", "log_snr"};
  for (int t = 1; t <= s.T(); ++t)
    table.rows.push_back({static_cast<double>(t), s.lambda(t), s.Lambda(t),
                          s.sigma2(t), s.snr(t), s.log_snr(t)});
  ddpm::io::write_csv(dir / "schedule.csv", table);

  std::printf("schedule %s T=%d\n", s.descriptor().kind.c_str(), s.T());
  std::printf("SNR(1) = %s\n", ddpm::io::format_double(s.snr(1)).c_str());
  std::printf("SNR(T) = %s\n",
              ddpm::io::format_double(s.snr(s.T())).c_str());
  std::printf("wrote %s\n", (dir / "schedule.csv").string().c_str());
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string seed;
  std::string run_dir;
  std::string resume;
  std::int64_t steps = -1;
};

int cmd_train(const TrainArgs& a) {
  nlohmann::json j = ddpm::io::read_json(a.config);
  apply_seed_overrides(j, a.seed);
  if (a.steps >= 0) j["train"]["steps"] = a.steps;
  const ddpm::RunConfig cfg = ddpm::RunConfig::from_json(j);
  const ddpm::Schedule s = cfg.make_schedule();

  fs::path run_dir;
  if (!a.run_dir.empty()) {
    run_dir = a.run_dir;
  } else {
    run_dir = cfg.output_dir /
              ("run-seed" + std::to_string(cfg.train.seed) + "-" +
               timestamp_now());
  }
  ddpm::io::ensure_dir(run_dir);
  ddpm::io::write_json(run_dir / "config.json", cfg.to_json());

  ddpm::DenoiserParams init = cfg.make_init_params();
  const ddpm::TrainResult result = ddpm::train_run(
      run_dir, cfg.train, cfg.data, s, init,
      a.resume.empty() ? fs::path() : fs::path(a.resume));

  if (!result.log.empty())
    std::printf("final loss %s after %lld steps\n",
                ddpm::io::format_double(result.log.back().loss).c_str(),
                static_cast<long long>(result.log.back().step));
  std::printf("run dir %s\n", run_dir.string().c_str());
  return 0;
}

ddpm::ReverseModel checkpoint_model(const ddpm::Checkpoint& ckpt,
                                    bool oracle) {
  if (!oracle) return ddpm::as_reverse_model(ckpt.params);
  // The analytic posterior-mean predictor with the per-step noising
  // variance: the exact reversal of the stationary chain when the data is
  // the unit Gaussian, and the optimal fixed predictor otherwise.
  ddpm::ReverseModel m = ddpm::analytic_x0_model(ckpt.data, ckpt.schedule);
  m.variance_mode = "noising_variance";
  const ddpm::Schedule s = ckpt.schedule;
  m.sigma2_override = [s](int t) { return s.sigma2(t); };
  return m;
}

struct SampleArgs {
  std::string checkpoint;
  std::string seed;
  std::string out;
  std::size_t n = 10000;
  bool denoise_final = false;
  bool trace = false;
  bool oracle = false;
};

int cmd_sample(const SampleArgs& a) {
  const ddpm::Checkpoint ckpt = ddpm::load_checkpoint(a.checkpoint);
  std::uint64_t seed = ckpt.config.seed;
  if (const char* env = std::getenv("DDPM_SEED"))
    seed = parse_seed(env, "DDPM_SEED");
  if (!a.seed.empty()) seed = parse_seed(a.seed, "--seed");

  const fs::path dir = a.out.empty()
                           ? fs::path(a.checkpoint).parent_path() / "samples"
                           : fs::path(a.out);
  ddpm::io::ensure_dir(dir);

  const ddpm::ReverseModel model = checkpoint_model(ckpt, a.oracle);
  ddpm::SampleOptions opts;
  opts.denoise_final = a.denoise_final;
  opts.keep_trace = a.trace;
  ddpm::SampleTrace trace;
  const ddpm::Batch samples =
      ddpm::generate(model, ckpt.schedule, a.n, ddpm::Rng(seed).child(3),
                     opts, a.trace ? &trace : nullptr);

  ddpm::io::write_batch_csv(dir / "samples.csv", samples);
  if (a.trace) {
    ddpm::io::CsvTable table;
    table.header = {"t"};
    for (std::size_t j = 0; j < samples.D; ++j)
      table.header.push_back("x" + std::to_string(j));
    for (std::size_t k = 0; k < trace.states.size(); ++k)
      for (std::size_t i = 0; i < trace.states[k].n; ++i) {
        std::vector<double> row{static_cast<double>(trace.levels[k])};
        for (std::size_t j = 0; j < samples.D; ++j)
          row.push_back(trace.states[k].at(i, j));
        table.rows.push_back(std::move(row));
      }
    ddpm::io::write_csv(dir / "trace.csv", table);
  }
  if (samples.D == 2) ddpm::svg_scatter(dir / "samples.svg", samples);
  std::printf("wrote %s\n", (dir / "samples.csv").string().c_str());
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::string seed;
  std::string out;
  bool oracle = false;
};

std::vector<int> default_levels(int T) {
  std::set<int> picks{1, T};
  picks.insert(std::max(1, T / 4));
  picks.insert(std::max(1, T / 2));
  picks.insert(std::max(1, 3 * T / 4));
  return {picks.begin(), picks.end()};
}

int cmd_eval(const EvalArgs& a) {
  nlohmann::json j = ddpm::io::read_json(a.config);
  apply_seed_overrides(j, a.seed);
  const ddpm::RunConfig cfg = ddpm::RunConfig::from_json(j);
  const ddpm::Checkpoint ckpt = ddpm::load_checkpoint(a.checkpoint);
  const ddpm::Schedule& s = ckpt.schedule;
  const std::uint64_t seed = cfg.seed;

  const fs::path dir =
      a.out.empty() ? cfg.output_dir / ("eval-seed" + std::to_string(seed))
                    : fs::path(a.out);
  ddpm::io::ensure_dir(dir);

  std::vector<std::string> metrics = cfg.eval.metrics;
  if (metrics.empty()) metrics = {"moments", "histogram_kl"};
  const auto wants = [&](const std::string& m) {
    return std::find(metrics.begin(), metrics.end(), m) != metrics.end();
  };

  const ddpm::ReverseModel model = checkpoint_model(ckpt, a.oracle);
  ddpm::MetricReport report;
  report.meta["seed"] = std::to_string(seed);
  report.meta["schedule"] = s.descriptor().kind;
  report.meta["data"] = ckpt.data.kind;
  report.meta["checkpoint"] = fs::path(a.checkpoint).filename().string();
  report.meta["n"] = std::to_string(cfg.eval.samples);

  if (wants("moments") || wants("histogram_kl")) {
    const ddpm::Batch samples = ddpm::generate(
        model, s, cfg.eval.samples, ddpm::Rng(seed).child(3));
    if (wants("moments")) {
      const ddpm::MomentTest mt = ddpm::moment_test(samples);
      double worst_mean = 0.0, worst_var = 0.0;
      for (std::size_t k = 0; k < mt.mean.size(); ++k) {
        worst_mean = std::max(worst_mean, std::abs(mt.mean[k]));
        worst_var = std::max(worst_var, std::abs(mt.var[k] - 1.0));
      }
      report.metrics["moment_abs_mean_max"] = worst_mean;
      report.metrics["moment_var_err_max"] = worst_var;
      report.metrics["moments_pass"] = mt.pass() ? 1.0 : 0.0;
    }
    if (wants("histogram_kl"))
      report.metrics["histogram_kl"] =
          ddpm::histogram_kl(samples, ckpt.data, cfg.eval.bins,
                             cfg.eval.range_lo, cfg.eval.range_hi);
    if (samples.D == 2) ddpm::svg_scatter(dir / "samples.svg", samples);
  }

  if (wants("score_rmse")) {
    const std::vector<int> levels =
        cfg.eval.levels.empty() ? default_levels(s.T()) : cfg.eval.levels;
    // The sweep compares noise predictions against the analytic score, so
    // the oracle variant must be the noise-parameterised one.
    const ddpm::ReverseModel sweep_model =
        a.oracle ? ddpm::analytic_eps_model(ckpt.data, s) : model;
    const auto sweep =
        ddpm::score_error_sweep(sweep_model, ckpt.data, s, levels);
    ddpm::io::CsvTable table;
    table.header = {"t", "rmse"};
    double worst = 0.0;
    for (const auto& p : sweep) {
      table.rows.push_back({static_cast<double>(p.t), p.rmse});
      report.metrics["score_rmse_t" + std::to_string(p.t)] = p.rmse;
      worst = std::max(worst, p.rmse);
    }
    report.metrics["score_rmse_max"] = worst;
    ddpm::io::write_csv(dir / "score_rmse.csv", table);
  }

  if (wants("endpoint_gap")) {
    const double smax = cfg.eval.endpoint_snr_max;
    const double smin = cfg.eval.endpoint_snr_min;
    const auto series = ddpm::endpoint_invariance_gap(
        [&](const ddpm::Schedule& sched) {
          return ddpm::analytic_x0_model(ckpt.data, sched);
        },
        ckpt.data,
        [&](int T) { return ddpm::make_linear_beta_matched(T, smax, smin); },
        [&](int T) { return ddpm::make_log_snr_linear(T, smax, smin); },
        cfg.eval.endpoint_T_values);
    ddpm::io::CsvTable table;
    table.header = {"T", "loss_a", "loss_b", "gap", "relative_gap"};
    bool monotone = true;
    for (std::size_t k = 0; k < series.size(); ++k) {
      const auto& p = series[k];
      table.rows.push_back({static_cast<double>(p.T), p.loss_a, p.loss_b,
                            p.gap, p.relative_gap});
      report.metrics["endpoint_relative_gap_T" + std::to_string(p.T)] =
          p.relative_gap;
      if (k > 0 && p.relative_gap >= series[k - 1].relative_gap)
        monotone = false;
    }
    if (!series.empty())
      report.metrics["endpoint_relative_gap_final"] =
          series.back().relative_gap;
    report.metrics["endpoint_gap_monotone"] = monotone ? 1.0 : 0.0;
    ddpm::io::write_csv(dir / "endpoint_gap.csv", table);
  }

  if (wants("elbo_gap")) {
    const ddpm::DenoiserParams other =
        ddpm::init_params(ckpt.params.arch, ckpt.params.mode,
                          ckpt.params.variance_mode, ddpm::Rng(seed).child(4));
    const ddpm::GapEstimate g = ddpm::elbo_constancy_gap(
        ckpt.params, other, ckpt.data, s, cfg.eval.elbo_n, seed);
    report.metrics["elbo_gap"] = g.gap;
    report.metrics["elbo_gap_se"] = g.se;
    report.metrics["elbo_gap_within_4se"] = g.gap < 4.0 * g.se ? 1.0 : 0.0;
  }

  ddpm::write_metric_report(dir, report);
  std::printf("wrote %s\n", (dir / "metrics.json").string().c_str());

  int violations = 0;
  for (const auto& [name, limit] : cfg.eval.thresholds) {
    const auto it = report.metrics.find(name);
    if (it == report.metrics.end())
      throw ConfigError("eval: threshold on missing metric '" + name + "'");
    if (it->second > limit) {
      std::fprintf(stderr, "threshold violated: %s = %s > %s\n",
                   name.c_str(),
                   ddpm::io::format_double(it->second).c_str(),
                   ddpm::io::format_double(limit).c_str());
      ++violations;
    }
  }
  return violations == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale denoising diffusion: schedules, training, "
               "sampling and evaluation driven by a JSON run config."};
  app.require_subcommand(1);

  ScheduleArgs sa;
  CLI::App* sched = app.add_subcommand(
      "schedule", "Write the per-level schedule CSV and print endpoint SNRs");
  sched->add_option("--config", sa.config, "Run config JSON")->required();
  sched->add_option("--out", sa.out, "Output directory override");
  sched->add_option("--kind", sa.kind, "Schedule kind override");
  sched->add_option("--T", sa.T, "Level count override");

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "Train a denoiser");
  train->add_option("--config", ta.config, "Run config JSON")->required();
  train->add_option("--seed", ta.seed, "Seed override");
  train->add_option("--steps", ta.steps, "Step count override");
  train->add_option("--run-dir", ta.run_dir,
                    "Run directory (default: output_dir/run-seed<s>-<time>)");
  train->add_option("--resume", ta.resume, "Checkpoint to resume from");

  SampleArgs pa;
  CLI::App* sample =
      app.add_subcommand("sample", "Draw ancestral samples from a checkpoint");
  sample->add_option("--checkpoint", pa.checkpoint, "Checkpoint JSON")
      ->required();
  sample->add_option("--n", pa.n, "Sample count");
  sample->add_option("--seed", pa.seed, "Seed override");
  sample->add_option("--out", pa.out, "Output directory");
  sample->add_flag("--denoise-final", pa.denoise_final,
                   "Zero the level-1 noise under noising_variance");
  sample->add_flag("--trace", pa.trace, "Write every intermediate level");
  sample->add_flag("--oracle", pa.oracle,
                   "Replace the network with the analytic optimal predictor");

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "Compute metrics for a checkpoint");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint JSON")->required();
  ev->add_option("--config", ea.config, "Run config JSON")->required();
  ev->add_option("--seed", ea.seed, "Seed override");
  ev->add_option("--out", ea.out, "Output directory");
  ev->add_flag("--oracle", ea.oracle,
               "Replace the network with the analytic optimal predictor");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sched->parsed()) return cmd_schedule(sa);
    if (train->parsed()) return cmd_train(ta);
    if (sample->parsed()) return cmd_sample(pa);
    if (ev->parsed()) return cmd_eval(ea);
  } catch (const ddpm::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ddpm::DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 3;
  } catch (const ddpm::MissingArtifactError& e) {
    std::fprintf(stderr, "missing artifact: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
