// SPDX-License-Identifier: Apache-2.0

#include "ddpm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ddpm/errors.hpp"
#include "ddpm/forward.hpp"
#include "ddpm/io.hpp"
#include "ddpm/kernels.hpp"
#include "ddpm/objectives.hpp"
#include "ddpm/quadrature.hpp"

namespace ddpm {

namespace {

constexpr double kPi = 3.14159265358979323846;

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v, double mean) {
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size() - 1);
}

}  // namespace

MomentTest moment_test(const Batch& b) {
  if (b.n < 2) throw ConfigError("moment_test: need at least two samples");
  MomentTest mt;
  const double n = static_cast<double>(b.n);
  for (std::size_t j = 0; j < b.D; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < b.n; ++i) mean += b.at(i, j);
    mean /= n;
    double m2 = 0.0, m4 = 0.0;
    for (std::size_t i = 0; i < b.n; ++i) {
      const double d = b.at(i, j) - mean;
      m2 += d * d;
      m4 += d * d * d * d;
    }
    const double var = m2 / (n - 1.0);
    m2 /= n;
    m4 /= n;
    mt.mean.push_back(mean);
    mt.var.push_back(var);
    mt.mean_se.push_back(std::sqrt(var / n));
    mt.var_se.push_back(std::sqrt(std::max(0.0, m4 - m2 * m2) / n));
  }
  return mt;
}

bool MomentTest::pass(double target_mean, double target_var, double k) const {
  for (std::size_t j = 0; j < mean.size(); ++j) {
    if (std::abs(mean[j] - target_mean) >= k * mean_se[j]) return false;
    if (std::abs(var[j] - target_var) >= k * var_se[j]) return false;
  }
  return true;
}

double histogram_kl(const Batch& samples, const DataSpec& spec, int bins,
                    double lo, double hi) {
  if (samples.D != spec.D)
    throw ConfigError("histogram_kl: sample dimension mismatch");
  if (spec.D != 1 && spec.D != 2)
    throw ConfigError("histogram_kl: only 1- or 2-dimensional data");
  if (bins < 10) throw ConfigError("histogram_kl: need at least 10 bins");
  if (!(hi > lo)) throw ConfigError("histogram_kl: empty range");
  if (samples.n == 0) throw ConfigError("histogram_kl: empty batch");

  const double width = (hi - lo) / bins;
  const auto cell_of = [&](double x) {
    const int c = static_cast<int>(std::floor((x - lo) / width));
    return std::clamp(c, 0, bins - 1);
  };

  const std::size_t cells =
      spec.D == 1 ? static_cast<std::size_t>(bins)
                  : static_cast<std::size_t>(bins) * bins;
  std::vector<double> counts(cells, 0.0);
  for (std::size_t i = 0; i < samples.n; ++i) {
    std::size_t cell = cell_of(samples.at(i, 0));
    if (spec.D == 2)
      cell = cell * bins + static_cast<std::size_t>(cell_of(samples.at(i, 1)));
    counts[cell] += 1.0;
  }

  // Add-one smoothing on both sides: the analytic cell mass is converted to
  // an expected count and smoothed exactly like the observed count, so empty
  // and near-empty cells stay finite without inflating the divergence. A
  // perfectly matched sample then scores about (cells - 1) / (2 n) instead
  // of a floor set by the smallest analytic cell mass.
  const double n = static_cast<double>(samples.n);
  const double total = n + static_cast<double>(cells);
  double kl = 0.0;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::size_t ci = spec.D == 1 ? cell : cell / bins;
    const std::size_t cj = spec.D == 1 ? 0 : cell % bins;
    double blo[2] = {lo + width * static_cast<double>(ci),
                     lo + width * static_cast<double>(cj)};
    double bhi[2] = {blo[0] + width, blo[1] + width};
    const double q_box = box_probability(spec, blo, bhi);
    const double p = (counts[cell] + 1.0) / total;
    const double q = (n * q_box + 1.0) / total;
    kl += p * std::log(p / q);
  }
  return kl;
}

std::vector<ScoreSweepPoint> score_error_sweep(const ReverseModel& model,
                                               const DataSpec& spec,
                                               const Schedule& s,
                                               const std::vector<int>& levels,
                                               int grid_points) {
  if (model.mode != "predict_eps")
    throw ConfigError("score_error_sweep: model must predict noise");
  if (spec.D != 1 && spec.D != 2)
    throw ConfigError("score_error_sweep: only 1- or 2-dimensional data");
  if (grid_points < 2)
    throw ConfigError("score_error_sweep: need at least 2 grid points");

  const std::vector<double> m0 = analytic_mean(spec);
  const std::vector<double> v0 = analytic_var(spec);
  // 2D sweeps use a coarser per-axis resolution to keep the grid size
  // comparable to the 1D default.
  const int per_axis = spec.D == 1 ? grid_points : 101;

  std::vector<ScoreSweepPoint> out;
  for (int t : levels) {
    const double lambda = s.Lambda(t);
    const double noise_var = s.var(t);

    Batch grid(spec.D == 1 ? static_cast<std::size_t>(per_axis)
                           : static_cast<std::size_t>(per_axis) * per_axis,
               spec.D);
    std::size_t row = 0;
    if (spec.D == 1) {
      const double sd = std::sqrt(lambda * lambda * v0[0] + noise_var);
      const double c = lambda * m0[0];
      for (int i = 0; i < per_axis; ++i)
        grid.x[row++] = c - 4.0 * sd +
                        8.0 * sd * static_cast<double>(i) / (per_axis - 1);
    } else {
      double sd[2], c[2];
      for (int j = 0; j < 2; ++j) {
        sd[j] = std::sqrt(lambda * lambda * v0[j] + noise_var);
        c[j] = lambda * m0[j];
      }
      for (int i = 0; i < per_axis; ++i)
        for (int j = 0; j < per_axis; ++j) {
          grid.x[2 * row] = c[0] - 4.0 * sd[0] +
                            8.0 * sd[0] * static_cast<double>(i) /
                                (per_axis - 1);
          grid.x[2 * row + 1] = c[1] - 4.0 * sd[1] +
                                8.0 * sd[1] * static_cast<double>(j) /
                                    (per_axis - 1);
          ++row;
        }
    }

    const Batch pred = model.predict(grid, t);
    double acc = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < grid.n; ++i) {
      const double w =
          std::exp(noisy_marginal_log_density(spec, s, t, grid.row(i)));
      const std::vector<double> star =
          optimal_epsilon(spec, s, t, grid.row(i));
      double e2 = 0.0;
      for (std::size_t j = 0; j < spec.D; ++j) {
        const double d = pred.at(i, j) - star[j];
        e2 += d * d;
      }
      acc += w * e2 / static_cast<double>(spec.D);
      wsum += w;
    }
    out.push_back({t, std::sqrt(acc / wsum)});
  }
  return out;
}

std::vector<ScoreSweepPoint> score_error_sweep(const DenoiserParams& params,
                                               const DataSpec& spec,
                                               const Schedule& s,
                                               const std::vector<int>& levels,
                                               int grid_points) {
  return score_error_sweep(as_reverse_model(params), spec, s, levels,
                           grid_points);
}

ReverseModel analytic_x0_model(const DataSpec& spec, const Schedule& s) {
  ReverseModel m;
  m.mode = "predict_x0";
  m.variance_mode = "posterior_variance";
  m.D = spec.D;
  m.predict = [spec, s](const Batch& x_t, int t) {
    Batch y(x_t.n, x_t.D);
    for (std::size_t i = 0; i < x_t.n; ++i) {
      const std::vector<double> p = optimal_x0(spec, s, t, x_t.row(i));
      for (std::size_t j = 0; j < x_t.D; ++j) y.at(i, j) = p[j];
    }
    return y;
  };
  return m;
}

ReverseModel analytic_eps_model(const DataSpec& spec, const Schedule& s) {
  ReverseModel m;
  m.mode = "predict_eps";
  m.variance_mode = "posterior_variance";
  m.D = spec.D;
  m.predict = [spec, s](const Batch& x_t, int t) {
    Batch y(x_t.n, x_t.D);
    for (std::size_t i = 0; i < x_t.n; ++i) {
      const std::vector<double> p = optimal_epsilon(spec, s, t, x_t.row(i));
      for (std::size_t j = 0; j < x_t.D; ++j) y.at(i, j) = p[j];
    }
    return y;
  };
  return m;
}

namespace {

// x0 predictions for a model in either parameterisation: a noise predictor
// is mapped through x0 = (x_t - sqrt(var_t) eps_hat) / Lambda_t.
Batch predict_x0_any(const ReverseModel& f, const Schedule& s,
                     const Batch& x_t, int t) {
  Batch y = f.predict(x_t, t);
  if (f.mode == "predict_x0") return y;
  if (f.mode != "predict_eps")
    throw ConfigError("unknown parameterisation mode '" + f.mode + "'");
  const double c = s.Lambda(t);
  const double d = std::sqrt(s.var(t));
  for (std::size_t i = 0; i < y.x.size(); ++i)
    y.x[i] = (x_t.x[i] - d * y.x[i]) / c;
  return y;
}

}  // namespace

double exhaustive_vdm_loss(const ReverseModel& f, const DataSpec& spec,
                           const Schedule& s, std::size_t quad_nodes) {
  if (spec.D != 1)
    throw ConfigError("exhaustive_vdm_loss: one-dimensional data only");
  if (quad_nodes < 2)
    throw ConfigError("exhaustive_vdm_loss: need at least 2 nodes");
  const QuadratureRule rule = gauss_hermite(quad_nodes);
  const std::size_t K = spec.comps.size();
  const std::size_t nq = rule.nodes.size();

  // Row layout: component k, clean node i, noise node j.
  std::vector<double> x0(K * nq * nq);
  std::vector<double> w(K * nq * nq);
  std::vector<double> epsn(K * nq * nq);
  std::size_t row = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const double sdk = std::sqrt(spec.comps[k].var);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = 0; j < nq; ++j) {
        x0[row] = spec.comps[k].mean[0] + sdk * rule.nodes[i];
        epsn[row] = rule.nodes[j];
        w[row] = spec.comps[k].weight * rule.weights[i] * rule.weights[j];
        ++row;
      }
  }

  double value = 0.0;
  Batch x_t(row, 1);
  for (int t = 1; t <= s.T(); ++t) {
    const double c = s.Lambda(t);
    const double d = std::sqrt(s.var(t));
    for (std::size_t i = 0; i < row; ++i)
      x_t.x[i] = c * x0[i] + d * epsn[i];
    const Batch pred = predict_x0_any(f, s, x_t, t);
    double acc = 0.0;
    for (std::size_t i = 0; i < row; ++i) {
      const double r = x0[i] - pred.x[i];
      acc += w[i] * r * r;
    }
    value += 0.5 * vdm_weight(s, t) * acc;
  }
  return value;
}

McEstimate exhaustive_vdm_loss_mc(const ReverseModel& f, const DataSpec& spec,
                                  const Schedule& s, std::size_t n,
                                  const Rng& rng) {
  if (spec.D != 1)
    throw ConfigError("exhaustive_vdm_loss_mc: one-dimensional data only");
  if (n < 2) throw ConfigError("exhaustive_vdm_loss_mc: need n >= 2");
  const Batch x0 = sample_data(spec, n, rng.child(0));
  std::vector<double> per_row(n, 0.0);
  Batch x_t(n, 1);
  Batch eps(n, 1);
  for (int t = 1; t <= s.T(); ++t) {
    kernels::fill_normal(eps.x.data(), n, 1,
                         rng.child(static_cast<std::uint64_t>(t)));
    const double c = s.Lambda(t);
    const double d = std::sqrt(s.var(t));
    for (std::size_t i = 0; i < n; ++i)
      x_t.x[i] = c * x0.x[i] + d * eps.x[i];
    const Batch pred = predict_x0_any(f, s, x_t, t);
    const double half_w = 0.5 * vdm_weight(s, t);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = x0.x[i] - pred.x[i];
      per_row[i] += half_w * r * r;
    }
  }
  McEstimate est;
  est.value = mean_of(per_row);
  est.se = std::sqrt(var_of(per_row, est.value) / static_cast<double>(n));
  return est;
}

std::vector<EndpointGapPoint> endpoint_invariance_gap(
    const PredictorFactory& f, const DataSpec& spec,
    const ScheduleFamily& family_a, const ScheduleFamily& family_b,
    const std::vector<int>& T_values, std::size_t quad_nodes) {
  std::vector<EndpointGapPoint> out;
  for (int T : T_values) {
    const Schedule sa = family_a(T);
    const Schedule sb = family_b(T);
    if (sa.T() != T || sb.T() != T)
      throw ConfigError("endpoint_invariance_gap: family produced wrong T");
    for (int t : {1, T}) {
      const double ra = sa.snr(t), rb = sb.snr(t);
      if (std::abs(ra - rb) > 1e-9 * std::max(ra, rb))
        throw ConfigError(
            "endpoint_invariance_gap: SNR endpoints differ at t = " +
            std::to_string(t) + " for T = " + std::to_string(T));
    }
    EndpointGapPoint p;
    p.T = T;
    p.loss_a = exhaustive_vdm_loss(f(sa), spec, sa, quad_nodes);
    p.loss_b = exhaustive_vdm_loss(f(sb), spec, sb, quad_nodes);
    p.gap = std::abs(p.loss_a - p.loss_b);
    p.relative_gap = p.gap / (0.5 * (p.loss_a + p.loss_b));
    out.push_back(p);
  }
  return out;
}

namespace {

// Per-row negative trajectory ELBO: -log p(x_T) - sum_t log p(x_{t-1}|x_t)
// minus the forward entropy constant. Trajectory step t draws from
// rng.child(t).
std::vector<double> per_row_neg_elbo(const DenoiserParams& params,
                                     const Schedule& s, const Batch& x0,
                                     const Rng& rng) {
  const std::size_t n = x0.n;
  std::vector<double> out(n, 0.0);
  Batch prev = x0;
  for (int t = 1; t <= s.T(); ++t) {
    const Batch cur =
        noise_step(s, t, prev, rng.child(static_cast<std::uint64_t>(t)));
    const PosteriorCoefficients pc = posterior_coefficients(s, t);
    const Batch y = predict(params, cur, t);
    const Batch mu = mean_from_prediction(pc, cur, y, params.mode);
    const double sigma2 = variance_for_level(pc, s, t, params.variance_mode);
    const double logc = std::log(2.0 * kPi * sigma2);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < x0.D; ++j) {
        const double r = prev.at(i, j) - mu.at(i, j);
        acc += r * r / sigma2 + logc;
      }
      out[i] += 0.5 * acc;
    }
    prev = cur;
  }
  const double logp = std::log(2.0 * kPi);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < x0.D; ++j) {
      const double v = prev.at(i, j);
      acc += v * v + logp;
    }
    out[i] += 0.5 * acc;
  }
  const double h = elbo_entropy_constant(s, x0.D);
  for (double& v : out) v -= h;
  return out;
}

// Per-row exhaustive-level unweighted loss: sum over all t of the analytic
// per-level regression term, with the level-t conditional draw coming from
// rng.child(t).
std::vector<double> per_row_unweighted(const DenoiserParams& params,
                                       const Schedule& s, const Batch& x0,
                                       const Rng& rng) {
  const std::size_t n = x0.n;
  std::vector<double> out(n, 0.0);
  for (int t = 1; t <= s.T(); ++t) {
    const PosteriorCoefficients pc = posterior_coefficients(s, t);
    const NoisyDraw draw = conditional_on_data(
        s, t, x0, rng.child(static_cast<std::uint64_t>(t)));
    const Batch y = predict(params, draw.x_t, t);
    const Batch mu = mean_from_prediction(pc, draw.x_t, y, params.mode);
    const Batch mu_post = posterior_mean(pc, x0, draw.x_t);
    const double sigma2 = variance_for_level(pc, s, t, params.variance_mode);
    const double logc = std::log(2.0 * kPi * sigma2);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < x0.D; ++j) {
        const double r = mu_post.at(i, j) - mu.at(i, j);
        acc += (r * r + pc.var) / sigma2 + logc;
      }
      out[i] += 0.5 * acc;
    }
  }
  return out;
}

}  // namespace

GapEstimate elbo_constancy_gap(const DenoiserParams& params_a,
                               const DenoiserParams& params_b,
                               const DataSpec& spec, const Schedule& s,
                               std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ConfigError("elbo_constancy_gap: need n >= 2");
  const Rng root(seed);
  const Batch x0 = sample_data(spec, n, root.child(2));

  const std::vector<double> ea =
      per_row_neg_elbo(params_a, s, x0, root.child(0));
  const std::vector<double> eb =
      per_row_neg_elbo(params_b, s, x0, root.child(0));
  const std::vector<double> ua =
      per_row_unweighted(params_a, s, x0, root.child(1));
  const std::vector<double> ub =
      per_row_unweighted(params_b, s, x0, root.child(1));

  std::vector<double> de(n), du(n);
  for (std::size_t i = 0; i < n; ++i) {
    de[i] = eb[i] - ea[i];
    du[i] = ub[i] - ua[i];
  }
  const double me = mean_of(de), mu = mean_of(du);
  GapEstimate g;
  g.gap = std::abs(me - mu);
  g.se = std::sqrt((var_of(de, me) + var_of(du, mu)) /
                   static_cast<double>(n));
  return g;
}

McEstimate forward_entropy_mc(const Schedule& s, std::size_t D, std::size_t n,
                              const Rng& rng) {
  if (n < 2) throw ConfigError("forward_entropy_mc: need n >= 2");
  std::vector<double> per_row(n, 0.0);
  Batch eps(n, D);
  for (int t = 1; t <= s.T(); ++t) {
    kernels::fill_normal(eps.x.data(), n, D,
                         rng.child(static_cast<std::uint64_t>(t)));
    const double logc = std::log(2.0 * kPi * s.sigma2(t));
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < D; ++j)
        acc += eps.at(i, j) * eps.at(i, j) + logc;
      per_row[i] += 0.5 * acc;
    }
  }
  McEstimate est;
  est.value = mean_of(per_row);
  est.se = std::sqrt(var_of(per_row, est.value) / static_cast<double>(n));
  return est;
}

void write_metric_report(const std::filesystem::path& dir,
                         const MetricReport& report) {
  io::ensure_dir(dir);
  nlohmann::json j;
  for (const auto& [k, v] : report.metrics) {
    if (!std::isfinite(v))
      throw ConfigError("metric report: non-finite metric '" + k + "'");
    j[k] = v;
  }
  for (const auto& [k, v] : report.meta) j[k] = v;
  io::write_json(dir / "metrics.json", j);

  std::string header;
  std::string row;
  for (const auto& [k, v] : report.metrics) {
    if (!header.empty()) {
      header += ',';
      row += ',';
    }
    header += k;
    row += io::format_double(v);
  }
  const auto csv = dir / "metrics.csv";
  std::string text;
  if (std::filesystem::exists(csv)) {
    const std::string prior = io::read_text(csv);
    const auto eol = prior.find('\n');
    if (eol != std::string::npos && prior.substr(0, eol) == header)
      text = prior + row + "\n";
  }
  if (text.empty()) text = header + "\n" + row + "\n";
  io::write_text(csv, text);
}

void svg_scatter(const std::filesystem::path& path, const Batch& b) {
  if (b.D != 2) throw ConfigError("svg_scatter: two-dimensional data only");
  double lo[2] = {0.0, 0.0}, hi[2] = {0.0, 0.0};
  for (std::size_t j = 0; j < 2; ++j) {
    lo[j] = 1e300;
    hi[j] = -1e300;
    for (std::size_t i = 0; i < b.n; ++i) {
      lo[j] = std::min(lo[j], b.at(i, j));
      hi[j] = std::max(hi[j], b.at(i, j));
    }
    if (b.n == 0 || !(hi[j] > lo[j])) {
      lo[j] = -1.0;
      hi[j] = 1.0;
    }
    const double margin = 0.05 * (hi[j] - lo[j]);
    lo[j] -= margin;
    hi[j] += margin;
  }
  const double size = 480.0;
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" "
      "height=\"480\" viewBox=\"0 0 480 480\">\n"
      "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n";
  char buf[128];
  for (std::size_t i = 0; i < b.n; ++i) {
    const double cx = size * (b.at(i, 0) - lo[0]) / (hi[0] - lo[0]);
    const double cy = size * (1.0 - (b.at(i, 1) - lo[1]) / (hi[1] - lo[1]));
    std::snprintf(buf, sizeof buf,
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.5\" fill=\"black\" "
                  "fill-opacity=\"0.35\"/>\n",
                  cx, cy);
    svg += buf;
  }
  svg += "</svg>\n";
  io::write_text(path, svg);
}

}  // namespace ddpm
