// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ddpm/batch.hpp"
#include "ddpm/rng.hpp"
#include "ddpm/schedule.hpp"

namespace ddpm {

/// One isotropic Gaussian mixture component in D dimensions.
struct MixtureComponent {
  std::vector<double> mean;
  double var = 1.0;  // per-coordinate variance, 0 for a point mass
  double weight = 1.0;
};

/// A toy data generator. Every supported kind is an isotropic Gaussian
/// mixture (a point mass is the zero-variance case), which keeps the noisy
/// marginal, its score and the optimal predictors in closed form: convolving
/// a mixture with the level-t Gaussian kernel only rescales means and adds
/// 1 - Lambda_t^2 to each variance.
///
/// Specs are standardised at construction using analytic moments, so the
/// generator has zero mean and unit per-coordinate variance exactly (the
/// point mass keeps zero variance; only its mean is shifted).
struct DataSpec {
  std::string kind;  // unit_gaussian | gmm1d | ring2d | point_mass
  std::size_t D = 1;
  std::vector<MixtureComponent> comps;

  nlohmann::json to_json() const;
  static DataSpec from_json(const nlohmann::json& j);
};

DataSpec make_unit_gaussian(std::size_t D = 1);
/// Two components at m1 and m2 with weights w1 and 1-w1, common variance v.
DataSpec make_gmm1d(double m1 = -2.0, double m2 = 2.0, double w1 = 0.5,
                    double v = 0.25);
/// count equal-weight isotropic components of variance v on a circle of the
/// given radius.
DataSpec make_ring2d(double radius = 2.0, int count = 8, double v = 0.0625);
DataSpec make_point_mass(double value = 0.75, std::size_t D = 1);

/// n independent standardised draws.
Batch sample_data(const DataSpec& spec, std::size_t n, const Rng& rng);

/// Analytic mean/variance of the stored (already standardised) spec, used by
/// tests to verify standardisation symbolically.
std::vector<double> analytic_mean(const DataSpec& spec);
std::vector<double> analytic_var(const DataSpec& spec);

/// log q_t(x), the density of x_t = Lambda_t x_0 + sqrt(1-Lambda_t^2) eps.
/// t = 0 gives the clean-data density (requires positive component
/// variances).
double noisy_marginal_log_density(const DataSpec& spec, const Schedule& s,
                                  int t, const double* x);

/// grad_x log q_t(x), exact for any Gaussian mixture.
std::vector<double> noisy_marginal_score(const DataSpec& spec,
                                         const Schedule& s, int t,
                                         const double* x);

/// The conditional expectation E[eps | x_t = x], the minimiser of the
/// epsilon-prediction square error: -sqrt(1 - Lambda_t^2) * score.
std::vector<double> optimal_epsilon(const DataSpec& spec, const Schedule& s,
                                    int t, const double* x);

/// The conditional expectation E[x_0 | x_t = x], via the Gaussian
/// identity E[x_0 | x_t] = (x_t + (1 - Lambda_t^2) score(x_t)) / Lambda_t.
std::vector<double> optimal_x0(const DataSpec& spec, const Schedule& s, int t,
                               const double* x);

/// Exact probability mass of the spec's clean-data distribution in the axis
/// aligned box [lo, hi) (per coordinate). Used by the histogram metrics.
double box_probability(const DataSpec& spec, const double* lo,
                       const double* hi);

}  // namespace ddpm
