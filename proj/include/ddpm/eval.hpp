// SPDX-License-Identifier: Apache-2.0

// Quantitative checks on trained models and on the estimator algebra:
// histogram KL against analytic densities, score-error sweeps, the
// schedule-endpoint invariance of the exhaustive weighted loss, and the
// constancy gap between the trajectory ELBO and the unweighted loss.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ddpm/batch.hpp"
#include "ddpm/datasets.hpp"
#include "ddpm/denoiser.hpp"
#include "ddpm/rng.hpp"
#include "ddpm/schedule.hpp"

namespace ddpm {

struct MomentTest {
  std::vector<double> mean;     // per coordinate
  std::vector<double> var;      // unbiased
  std::vector<double> mean_se;  // sd / sqrt(n)
  std::vector<double> var_se;   // sqrt((m4 - var^2) / n)
  // |mean - target_mean| < k mean_se and |var - target_var| < k var_se,
  // every coordinate.
  bool pass(double target_mean = 0.0, double target_var = 1.0,
            double k = 4.0) const;
};

MomentTest moment_test(const Batch& b);

// KL(empirical histogram || analytic per-bin mass) over a regular grid on
// [lo, hi] per axis (bins cells in 1D, bins x bins in 2D). Counts get
// add-one smoothing so empty bins stay finite; samples outside the range
// are clamped into the edge bins.
double histogram_kl(const Batch& samples, const DataSpec& spec, int bins,
                    double lo, double hi);

struct ScoreSweepPoint {
  int t = 0;
  double rmse = 0.0;
};

// Per-level RMSE between the model's noise prediction and the analytic
// optimal one, over a regular grid spanning +-4 standard deviations of the
// noisy marginal and weighted by that marginal's density. predict_eps
// models only.
std::vector<ScoreSweepPoint> score_error_sweep(const ReverseModel& model,
                                               const DataSpec& spec,
                                               const Schedule& s,
                                               const std::vector<int>& levels,
                                               int grid_points = 401);
std::vector<ScoreSweepPoint> score_error_sweep(const DenoiserParams& params,
                                               const DataSpec& spec,
                                               const Schedule& s,
                                               const std::vector<int>& levels,
                                               int grid_points = 401);

// Fixed analytic predictors backed by the mixture's closed-form posterior
// mean; these are the schedule-consistent optimal denoisers.
ReverseModel analytic_x0_model(const DataSpec& spec, const Schedule& s);
ReverseModel analytic_eps_model(const DataSpec& spec, const Schedule& s);

// The full weighted loss sum_t (1/2) w_t E[(x0 - f(x_t, t))^2] with the
// SNR-difference weights, the expectation taken exactly: Gauss-Hermite
// quadrature over the clean draw and the injected noise, per mixture
// component. One-dimensional data only.
double exhaustive_vdm_loss(const ReverseModel& f, const DataSpec& spec,
                           const Schedule& s, std::size_t quad_nodes = 48);

struct McEstimate {
  double value = 0.0;
  double se = 0.0;
};

// Monte-Carlo version of the same sum; calling it with the same rng for
// two schedules pairs the draws (x0 from rng.child(0), the level-t noise
// from rng.child(t)).
McEstimate exhaustive_vdm_loss_mc(const ReverseModel& f, const DataSpec& spec,
                                  const Schedule& s, std::size_t n,
                                  const Rng& rng);

using ScheduleFamily = std::function<Schedule(int T)>;
using PredictorFactory = std::function<ReverseModel(const Schedule&)>;

struct EndpointGapPoint {
  int T = 0;
  double loss_a = 0.0;
  double loss_b = 0.0;
  double gap = 0.0;
  double relative_gap = 0.0;  // gap over the mean of the two losses
};

// Evaluates the exhaustive weighted loss under two schedule families at
// each T and reports the gap series. The families must produce equal SNR
// endpoints at every T (relative mismatch above 1e-9 is a configuration
// error).
std::vector<EndpointGapPoint> endpoint_invariance_gap(
    const PredictorFactory& f, const DataSpec& spec,
    const ScheduleFamily& family_a, const ScheduleFamily& family_b,
    const std::vector<int>& T_values, std::size_t quad_nodes = 48);

struct GapEstimate {
  double gap = 0.0;
  double se = 0.0;  // combined standard error of the two paired estimators
};

// |(ELBO_a - ELBO_b) - (L_a - L_b)| where L is the negative unweighted
// exhaustive-level loss. The ELBO pair shares trajectory draws, the loss
// pair shares conditional draws, so the difference estimates a constant
// that cancels; the result should be within Monte-Carlo error of zero.
GapEstimate elbo_constancy_gap(const DenoiserParams& params_a,
                               const DenoiserParams& params_b,
                               const DataSpec& spec, const Schedule& s,
                               std::size_t n, std::uint64_t seed);

// Monte-Carlo estimate of the total forward-process entropy
// sum_t E[-log q(x_t | x_{t-1})], matching elbo_entropy_constant.
McEstimate forward_entropy_mc(const Schedule& s, std::size_t D, std::size_t n,
                              const Rng& rng);

struct MetricReport {
  std::map<std::string, double> metrics;          // all finite
  std::map<std::string, std::string> meta;        // seed, n, schedule, ...
};

// metrics.json (flat) plus a row appended to metrics.csv whose columns are
// the sorted metric names.
void write_metric_report(const std::filesystem::path& dir,
                         const MetricReport& report);

// Standalone scatter plot, plain circle elements. Two-dimensional batches
// only.
void svg_scatter(const std::filesystem::path& path, const Batch& b);

}  // namespace ddpm
