// SPDX-License-Identifier: Apache-2.0

#include "ddpm/schedule.hpp"

#include <cmath>
#include <utility>

#include <nlohmann/json.hpp>

#include "ddpm/errors.hpp"

namespace ddpm {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Schedule::Schedule(std::vector<double> lambda) {
  const int T = static_cast<int>(lambda.size());
  std::vector<double> lam(T + 1), sig(T + 1);
  lam[0] = 1.0;
  sig[0] = 0.0;
  for (int t = 1; t <= T; ++t) {
    lam[t] = lambda[t - 1];
    sig[t] = 1.0 - lam[t] * lam[t];
  }
  set_lambda_sigma2(std::move(lam), std::move(sig));
  desc_.kind = "explicit";
  desc_.T = T;
  desc_.lambda = lambdas();
  finalize("schedule");
}

void Schedule::set_lambda_sigma2(std::vector<double> lambda,
                                 std::vector<double> sigma2) {
  lambda_ = std::move(lambda);
  sigma2_ = std::move(sigma2);
  const int T = this->T();
  Lambda_.assign(T + 1, 1.0);
  var_.assign(T + 1, 0.0);
  snr_.assign(T + 1, 0.0);
  for (int t = 1; t <= T; ++t) {
    Lambda_[t] = Lambda_[t - 1] * lambda_[t];
    // Law of total variance along the chain; positive terms only.
    var_[t] = lambda_[t] * lambda_[t] * var_[t - 1] + sigma2_[t];
    snr_[t] = Lambda_[t] * Lambda_[t] / var_[t];
  }
}

void Schedule::finalize(const char* ctor) {
  const int T = this->T();
  if (T < 1) throw ConfigError(std::string(ctor) + ": T must be >= 1");
  for (int t = 1; t <= T; ++t) {
    if (!(lambda_[t] > 0.0 && lambda_[t] < 1.0)) {
      throw ConfigError(std::string(ctor) + ": lambda_" + std::to_string(t) +
                        " = " + std::to_string(lambda_[t]) +
                        " outside (0, 1)");
    }
    if (!(Lambda_[t] < Lambda_[t - 1])) {
      throw ConfigError(std::string(ctor) + ": Lambda not strictly " +
                        "decreasing at t = " + std::to_string(t));
    }
  }
}

int Schedule::check(int t, int lo) const {
  if (t < lo || t > T()) {
    throw ConfigError("schedule: level " + std::to_string(t) +
                      " out of range [" + std::to_string(lo) + ", " +
                      std::to_string(T()) + "]");
  }
  return t;
}

double Schedule::log_snr(int t) const { return std::log(snr(t)); }

std::vector<double> Schedule::lambdas() const {
  return {lambda_.begin() + 1, lambda_.end()};
}

StandardNotation to_standard_notation(const Schedule& s) {
  StandardNotation out;
  const int T = s.T();
  out.alpha.resize(T);
  out.beta.resize(T);
  out.alpha_bar.resize(T);
  for (int t = 1; t <= T; ++t) {
    out.alpha[t - 1] = s.lambda(t) * s.lambda(t);
    out.beta[t - 1] = s.sigma2(t);
    out.alpha_bar[t - 1] = s.Lambda(t) * s.Lambda(t);
  }
  return out;
}

Schedule from_alpha_bar(const std::vector<double>& alpha_bar) {
  std::vector<double> lambda(alpha_bar.size());
  double prev = 1.0;
  for (std::size_t i = 0; i < alpha_bar.size(); ++i) {
    lambda[i] = std::sqrt(alpha_bar[i] / prev);
    prev = alpha_bar[i];
  }
  return Schedule(lambda);
}

Schedule make_linear_beta(int T, double beta1, double beta2) {
  if (T < 1) throw ConfigError("linear_beta: T must be >= 1");
  std::vector<double> lam(T + 1, 1.0), sig(T + 1, 0.0);
  for (int t = 1; t <= T; ++t) {
    const double beta = beta1 + (t - 1) * beta2;
    if (!(beta > 0.0 && beta < 1.0)) {
      throw ConfigError("linear_beta: 1 - lambda^2 = " + std::to_string(beta) +
                        " outside (0, 1) at t = " + std::to_string(t));
    }
    lam[t] = std::sqrt(1.0 - beta);
    // Store the canonical expression so sigma2(t) == 1 - lambda(t)^2 holds
    // bitwise; after the sqrt rounds, the raw beta can differ by one ulp.
    sig[t] = 1.0 - lam[t] * lam[t];
  }
  Schedule s;
  s.set_lambda_sigma2(std::move(lam), std::move(sig));
  s.desc_.kind = "linear_beta";
  s.desc_.T = T;
  s.desc_.beta1 = beta1;
  s.desc_.beta2 = beta2;
  s.finalize("linear_beta");
  return s;
}

Schedule make_quarter_cosine(int T) {
  if (T < 1) throw ConfigError("quarter_cosine: T must be >= 1");
  std::vector<double> lam(T + 1, 1.0), sig(T + 1, 0.0);
  double prev = 1.0;
  for (int t = 1; t <= T; ++t) {
    double L = std::cos((static_cast<double>(t) / T) * kPi / 2.0);
    L = std::min(std::max(L, kEpsClip), 1.0 - kEpsClip);
    lam[t] = L / prev;
    sig[t] = 1.0 - lam[t] * lam[t];
    prev = L;
  }
  Schedule s;
  s.set_lambda_sigma2(std::move(lam), std::move(sig));
  s.desc_.kind = "quarter_cosine";
  s.desc_.T = T;
  s.finalize("quarter_cosine");
  return s;
}

Schedule make_log_snr_linear(int T, double snr_max, double snr_min) {
  if (T < 1) throw ConfigError("log_snr_linear: T must be >= 1");
  if (!(snr_max > snr_min && snr_min > 0.0)) {
    throw ConfigError("log_snr_linear: need snr_max > snr_min > 0, got " +
                      std::to_string(snr_max) + ", " +
                      std::to_string(snr_min));
  }
  const double lmax = std::log(snr_max);
  const double lmin = std::log(snr_min);
  std::vector<double> lam(T + 1, 1.0), sig(T + 1, 0.0);
  // var_t = 1/(1+snr) is exact here; the generic recurrence is then
  // overwritten with these values so extreme snr_max keeps full precision.
  std::vector<double> var(T + 1, 0.0), Lambda2(T + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    const double f = T == 1 ? 0.0
                            : static_cast<double>(t - 1) /
                                  static_cast<double>(T - 1);
    const double snr = std::exp(lmax + f * (lmin - lmax));
    var[t] = 1.0 / (1.0 + snr);
    Lambda2[t] = snr / (1.0 + snr);
    lam[t] = std::sqrt(Lambda2[t] / Lambda2[t - 1]);
    // Canonical expression, so sigma2(t) == 1 - lambda(t)^2 holds bitwise.
    sig[t] = 1.0 - lam[t] * lam[t];
  }
  Schedule s;
  s.set_lambda_sigma2(std::move(lam), std::move(sig));
  for (int t = 1; t <= T; ++t) {
    s.var_[t] = var[t];
    s.snr_[t] = Lambda2[t] / var[t];
  }
  s.desc_.kind = "log_snr_linear";
  s.desc_.T = T;
  s.desc_.snr_max = snr_max;
  s.desc_.snr_min = snr_min;
  s.finalize("log_snr_linear");
  return s;
}

Schedule make_linear_beta_matched(int T, double snr_max, double snr_min) {
  if (T < 2) throw ConfigError("linear_beta_matched: T must be >= 2");
  if (!(snr_max > snr_min && snr_min > 0.0))
    throw ConfigError("linear_beta_matched: need snr_max > snr_min > 0");
  // SNR(1) = (1 - beta1) / beta1 pins the first level exactly.
  const double beta1 = 1.0 / (1.0 + snr_max);

  // SNR(T) is strictly decreasing in the slope; bisect it onto snr_min.
  const auto snr_T = [&](double beta2) {
    double Lambda2 = 1.0, var = 0.0;
    for (int t = 1; t <= T; ++t) {
      const double beta = beta1 + (t - 1) * beta2;
      Lambda2 *= 1.0 - beta;
      var = (1.0 - beta) * var + beta;
    }
    return Lambda2 / var;
  };
  double lo = 0.0;
  double hi = (1.0 - beta1) / (T - 1) * (1.0 - 1e-12);
  if (snr_T(lo) < snr_min)
    throw ConfigError(
        "linear_beta_matched: flat ramp already undershoots snr_min at T = " +
        std::to_string(T));
  if (snr_T(hi) > snr_min)
    throw ConfigError(
        "linear_beta_matched: maximal slope cannot reach snr_min at T = " +
        std::to_string(T));
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (snr_T(mid) >= snr_min ? lo : hi) = mid;
  }

  Schedule s = make_linear_beta(T, beta1, 0.5 * (lo + hi));
  if (std::abs(s.snr(T) - snr_min) > 1e-9 * snr_min)
    throw ConfigError("linear_beta_matched: could not match snr_min at T = " +
                      std::to_string(T));
  return s;
}

nlohmann::json Schedule::to_json() const {
  nlohmann::json j;
  j["kind"] = desc_.kind;
  j["T"] = desc_.T;
  if (desc_.kind == "linear_beta") {
    j["beta1"] = desc_.beta1;
    j["beta2"] = desc_.beta2;
  } else if (desc_.kind == "log_snr_linear") {
    j["snr_max"] = desc_.snr_max;
    j["snr_min"] = desc_.snr_min;
  } else if (desc_.kind == "explicit") {
    j["lambda"] = desc_.lambda;
  }
  return j;
}

Schedule Schedule::from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    const int T = j.at("T").get<int>();
    if (kind == "linear_beta") {
      return make_linear_beta(T, j.at("beta1").get<double>(),
                              j.at("beta2").get<double>());
    }
    if (kind == "quarter_cosine") {
      return make_quarter_cosine(T);
    }
    if (kind == "log_snr_linear") {
      return make_log_snr_linear(T, j.at("snr_max").get<double>(),
                                 j.at("snr_min").get<double>());
    }
    if (kind == "explicit") {
      return Schedule(j.at("lambda").get<std::vector<double>>());
    }
    throw ConfigError("schedule: unknown kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schedule: bad descriptor: ") + e.what());
  }
}

}  // namespace ddpm
