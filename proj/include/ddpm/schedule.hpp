// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ddpm {

/// How a schedule was constructed; round-trips through JSON so run configs
/// and checkpoints can rebuild the exact same coefficients.
struct ScheduleDescriptor {
  std::string kind = "explicit";  // linear_beta | quarter_cosine |
                                  // log_snr_linear | explicit
  int T = 0;
  double beta1 = 0.0, beta2 = 0.0;      // linear_beta
  double snr_max = 0.0, snr_min = 0.0;  // log_snr_linear
  std::vector<double> lambda;           // explicit
};

/// The noising coefficients lambda_1..lambda_T of the variance-preserving
/// auto-regressive process x_t = lambda_t x_{t-1} + sqrt(1 - lambda_t^2) eps,
/// with every derived per-level quantity cached at construction:
///
///   Lambda_t  = prod_{s<=t} lambda_s      (signal retention, Lambda_0 = 1)
///   sigma2_t  = 1 - lambda_t^2            (per-step noise variance)
///   var_t     = 1 - Lambda_t^2            (marginal noise variance given x_0)
///   snr_t     = Lambda_t^2 / (1 - Lambda_t^2)
///
/// var_t is accumulated by the telescoped recurrence
/// var_t = lambda_t^2 var_{t-1} + sigma2_t, which adds positive terms only
/// and stays accurate when Lambda_t is close to 1; factories override entries
/// they know in closed form.
class Schedule {
 public:
  /// Validates 0 < lambda_t < 1 for every t and caches derived quantities.
  explicit Schedule(std::vector<double> lambda);

  int T() const { return static_cast<int>(lambda_.size()) - 1; }

  /// Coefficient lambda_t, 1 <= t <= T.
  double lambda(int t) const { return lambda_[check(t, 1)]; }
  /// Cumulative product Lambda_t, 0 <= t <= T, Lambda_0 = 1.
  double Lambda(int t) const { return Lambda_[check(t, 0)]; }
  /// Per-step variance 1 - lambda_t^2.
  double sigma2(int t) const { return sigma2_[check(t, 1)]; }
  /// Marginal variance 1 - Lambda_t^2; var(0) = 0.
  double var(int t) const { return var_[check(t, 0)]; }
  /// Signal-to-noise ratio Lambda_t^2 / (1 - Lambda_t^2), 1 <= t <= T.
  double snr(int t) const { return snr_[check(t, 1)]; }
  double log_snr(int t) const;

  /// lambda_1..lambda_T in order.
  std::vector<double> lambdas() const;

  const ScheduleDescriptor& descriptor() const { return desc_; }

  nlohmann::json to_json() const;
  static Schedule from_json(const nlohmann::json& j);

 private:
  friend Schedule make_linear_beta(int, double, double);
  friend Schedule make_log_snr_linear(int, double, double);
  friend Schedule make_quarter_cosine(int);

  Schedule() = default;
  void set_lambda_sigma2(std::vector<double> lambda,
                         std::vector<double> sigma2);
  void finalize(const char* ctor);

  int check(int t, int lo) const;

  // All indexed 0..T; index 0 holds the empty-product conventions
  // lambda_0 = 1, sigma2_0 = 0, var_0 = 0; snr_[0] is unused.
  std::vector<double> lambda_, Lambda_, sigma2_, var_, snr_;
  ScheduleDescriptor desc_;
};

/// alpha_t = lambda_t^2, beta_t = 1 - lambda_t^2, alpha_bar_t = Lambda_t^2.
struct StandardNotation {
  std::vector<double> alpha, beta, alpha_bar;  // length T, entry i is level i+1
};

StandardNotation to_standard_notation(const Schedule& s);

/// Rebuilds a schedule from the alpha_bar sequence, recovering lambda_t as
/// sqrt(alpha_bar_t / alpha_bar_{t-1}) with alpha_bar_0 = 1.
Schedule from_alpha_bar(const std::vector<double>& alpha_bar);

/// 1 - lambda_t^2 = beta1 + (t-1) beta2. Every per-level value must land in
/// (0, 1); violations raise ConfigError naming the offending level.
Schedule make_linear_beta(int T, double beta1, double beta2);

/// Lambda_t = cos((t/T) pi/2), clipped away from 0 and 1 by kEpsClip so the
/// final level keeps a valid coefficient.
Schedule make_quarter_cosine(int T);

/// log SNR(t) linearly spaced from log snr_max (t=1) down to log snr_min
/// (t=T). Requires snr_max > snr_min > 0. With T=1 the single level sits at
/// snr_max.
Schedule make_log_snr_linear(int T, double snr_max, double snr_min);

/// Linear-beta schedule with its endpoints pinned: beta1 = 1/(1 + snr_max)
/// fixes SNR(1) exactly and the slope beta2 is bisected until SNR(T)
/// matches snr_min to a relative 1e-9. Requires T >= 2 and endpoints a
/// plain linear ramp can reach (otherwise ConfigError).
Schedule make_linear_beta_matched(int T, double snr_max, double snr_min);

inline constexpr double kEpsClip = 1e-6;

}  // namespace ddpm
