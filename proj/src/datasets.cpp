// SPDX-License-Identifier: Apache-2.0

#include "ddpm/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "ddpm/errors.hpp"

namespace ddpm {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate(const DataSpec& spec) {
  if (spec.comps.empty()) throw ConfigError("dataspec: no components");
  double wsum = 0.0;
  for (const auto& c : spec.comps) {
    if (c.mean.size() != spec.D) throw ConfigError("dataspec: bad mean size");
    if (c.var < 0.0) throw ConfigError("dataspec: negative variance");
    if (c.weight <= 0.0) throw ConfigError("dataspec: non-positive weight");
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-12)
    throw ConfigError("dataspec: weights must sum to 1");
}

/// Shifts and rescales components so the mixture has zero mean and unit
/// per-coordinate variance, computed from the stored parameters. A zero
/// variance mixture (point mass) is only shifted.
void standardise(DataSpec& spec) {
  std::vector<double> mean(spec.D, 0.0);
  for (const auto& c : spec.comps)
    for (std::size_t j = 0; j < spec.D; ++j) mean[j] += c.weight * c.mean[j];
  std::vector<double> var(spec.D, 0.0);
  for (const auto& c : spec.comps)
    for (std::size_t j = 0; j < spec.D; ++j) {
      const double d = c.mean[j] - mean[j];
      var[j] += c.weight * (c.var + d * d);
    }
  for (std::size_t j = 1; j < spec.D; ++j) {
    if (std::abs(var[j] - var[0]) > 1e-12 * std::max(1.0, var[0]))
      throw ConfigError(
          "dataspec: anisotropic coordinate variances are unsupported");
  }
  const double scale = var[0] > 0.0 ? 1.0 / std::sqrt(var[0]) : 1.0;
  for (auto& c : spec.comps) {
    for (std::size_t j = 0; j < spec.D; ++j)
      c.mean[j] = (c.mean[j] - mean[j]) * scale;
    c.var *= scale * scale;
  }
}

/// Means and variances of the level-t marginal's components. t = 0 is the
/// clean distribution itself.
void noisy_components(const Schedule& s, int t, double* cscale,
                      double* added_var) {
  if (t == 0) {
    *cscale = 1.0;
    *added_var = 0.0;
    return;
  }
  *cscale = s.Lambda(t);
  *added_var = s.var(t);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

DataSpec make_unit_gaussian(std::size_t D) {
  DataSpec spec;
  spec.kind = "unit_gaussian";
  spec.D = D;
  spec.comps.push_back({std::vector<double>(D, 0.0), 1.0, 1.0});
  validate(spec);
  return spec;
}

DataSpec make_gmm1d(double m1, double m2, double w1, double v) {
  DataSpec spec;
  spec.kind = "gmm1d";
  spec.D = 1;
  spec.comps.push_back({{m1}, v, w1});
  spec.comps.push_back({{m2}, v, 1.0 - w1});
  validate(spec);
  standardise(spec);
  return spec;
}

DataSpec make_ring2d(double radius, int count, double v) {
  if (count < 1) throw ConfigError("ring2d: count must be >= 1");
  DataSpec spec;
  spec.kind = "ring2d";
  spec.D = 2;
  for (int k = 0; k < count; ++k) {
    const double ang = 2.0 * kPi * k / count;
    spec.comps.push_back({{radius * std::cos(ang), radius * std::sin(ang)},
                          v,
                          1.0 / count});
  }
  validate(spec);
  standardise(spec);
  return spec;
}

DataSpec make_point_mass(double value, std::size_t D) {
  DataSpec spec;
  spec.kind = "point_mass";
  spec.D = D;
  spec.comps.push_back({std::vector<double>(D, value), 0.0, 1.0});
  validate(spec);
  standardise(spec);
  return spec;
}

Batch sample_data(const DataSpec& spec, std::size_t n, const Rng& rng) {
  Batch out(n, spec.D);
  std::vector<double> cumw(spec.comps.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < spec.comps.size(); ++k) {
    acc += spec.comps[k].weight;
    cumw[k] = acc;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    Rng row = rng.child(static_cast<std::uint64_t>(i));
    const double u = row.uniform();
    std::size_t k = 0;
    while (k + 1 < cumw.size() && u > cumw[k]) ++k;
    const auto& c = spec.comps[k];
    const double sd = std::sqrt(c.var);
    for (std::size_t j = 0; j < spec.D; ++j)
      out.at(i, j) = c.mean[j] + sd * row.normal();
  }
  return out;
}

std::vector<double> analytic_mean(const DataSpec& spec) {
  std::vector<double> mean(spec.D, 0.0);
  for (const auto& c : spec.comps)
    for (std::size_t j = 0; j < spec.D; ++j) mean[j] += c.weight * c.mean[j];
  return mean;
}

std::vector<double> analytic_var(const DataSpec& spec) {
  const auto mean = analytic_mean(spec);
  std::vector<double> var(spec.D, 0.0);
  for (const auto& c : spec.comps)
    for (std::size_t j = 0; j < spec.D; ++j) {
      const double d = c.mean[j] - mean[j];
      var[j] += c.weight * (c.var + d * d);
    }
  return var;
}

// Responsibilities via log-sum-exp; shared by density, score and predictors.
namespace {
struct MixtureEval {
  double log_density;
  std::vector<double> resp;        // per component
  std::vector<double> comp_mean;   // flattened k * D
  double comp_var;                 // common variance of noisy components
};

MixtureEval eval_mixture(const DataSpec& spec, const Schedule& s, int t,
                         const double* x) {
  double cscale, added;
  noisy_components(s, t, &cscale, &added);
  MixtureEval ev;
  const std::size_t K = spec.comps.size();
  const std::size_t D = spec.D;
  std::vector<double> logw(K);
  ev.comp_mean.resize(K * D);
  double vcommon = -1.0;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& c = spec.comps[k];
    const double v = cscale * cscale * c.var + added;
    if (v <= 0.0)
      throw ConfigError("dataspec: degenerate component density at t = " +
                        std::to_string(t));
    if (vcommon < 0.0) vcommon = v;
    // Common variance holds for all stored specs (equal component variances).
    double q = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      const double m = cscale * c.mean[j];
      ev.comp_mean[k * D + j] = m;
      const double r = x[j] - m;
      q += r * r;
    }
    logw[k] = std::log(c.weight) - 0.5 * q / v -
              0.5 * static_cast<double>(D) * std::log(2.0 * kPi * v);
  }
  ev.comp_var = vcommon;
  const double mx = *std::max_element(logw.begin(), logw.end());
  double sum = 0.0;
  for (double lw : logw) sum += std::exp(lw - mx);
  ev.log_density = mx + std::log(sum);
  ev.resp.resize(K);
  for (std::size_t k = 0; k < K; ++k)
    ev.resp[k] = std::exp(logw[k] - ev.log_density);
  return ev;
}
}  // namespace

double noisy_marginal_log_density(const DataSpec& spec, const Schedule& s,
                                  int t, const double* x) {
  return eval_mixture(spec, s, t, x).log_density;
}

std::vector<double> noisy_marginal_score(const DataSpec& spec,
                                         const Schedule& s, int t,
                                         const double* x) {
  const MixtureEval ev = eval_mixture(spec, s, t, x);
  const std::size_t K = spec.comps.size();
  const std::size_t D = spec.D;
  std::vector<double> g(D, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < D; ++j)
      g[j] -= ev.resp[k] * (x[j] - ev.comp_mean[k * D + j]) / ev.comp_var;
  return g;
}

std::vector<double> optimal_epsilon(const DataSpec& spec, const Schedule& s,
                                    int t, const double* x) {
  auto g = noisy_marginal_score(spec, s, t, x);
  const double d = std::sqrt(s.var(t));
  for (auto& v : g) v *= -d;
  return g;
}

std::vector<double> optimal_x0(const DataSpec& spec, const Schedule& s, int t,
                               const double* x) {
  auto g = noisy_marginal_score(spec, s, t, x);
  const double vt = s.var(t);
  const double c = s.Lambda(t);
  for (std::size_t j = 0; j < spec.D; ++j) g[j] = (x[j] + vt * g[j]) / c;
  return g;
}

double box_probability(const DataSpec& spec, const double* lo,
                       const double* hi) {
  double p = 0.0;
  for (const auto& c : spec.comps) {
    double pk = 1.0;
    for (std::size_t j = 0; j < spec.D; ++j) {
      if (c.var > 0.0) {
        const double sd = std::sqrt(c.var);
        pk *= normal_cdf((hi[j] - c.mean[j]) / sd) -
              normal_cdf((lo[j] - c.mean[j]) / sd);
      } else {
        pk *= (c.mean[j] >= lo[j] && c.mean[j] < hi[j]) ? 1.0 : 0.0;
      }
    }
    p += c.weight * pk;
  }
  return p;
}

nlohmann::json DataSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = kind;
  j["D"] = D;
  nlohmann::json comps_j = nlohmann::json::array();
  for (const auto& c : comps) {
    comps_j.push_back(
        {{"mean", c.mean}, {"var", c.var}, {"weight", c.weight}});
  }
  j["components"] = comps_j;
  return j;
}

DataSpec DataSpec::from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    // Short form: named parameters per kind, defaults as in the factories.
    if (!j.contains("components")) {
      if (kind == "unit_gaussian")
        return make_unit_gaussian(j.value("D", std::size_t{1}));
      if (kind == "gmm1d")
        return make_gmm1d(j.value("m1", -2.0), j.value("m2", 2.0),
                          j.value("w1", 0.5), j.value("v", 0.25));
      if (kind == "ring2d")
        return make_ring2d(j.value("radius", 2.0), j.value("count", 8),
                           j.value("v", 0.0625));
      if (kind == "point_mass")
        return make_point_mass(j.value("value", 0.75),
                               j.value("D", std::size_t{1}));
      throw ConfigError("dataspec: unknown kind '" + kind + "'");
    }
    DataSpec spec;
    spec.kind = kind;
    spec.D = j.at("D").get<std::size_t>();
    for (const auto& c : j.at("components")) {
      spec.comps.push_back({c.at("mean").get<std::vector<double>>(),
                            c.at("var").get<double>(),
                            c.at("weight").get<double>()});
    }
    validate(spec);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataspec: bad JSON: ") + e.what());
  }
}

}  // namespace ddpm
