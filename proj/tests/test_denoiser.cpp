// SPDX-License-Identifier: Apache-2.0

#include "ddpm/denoiser.hpp"

#include <cmath>
#include <set>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "ddpm/errors.hpp"
#include "ddpm/forward.hpp"
#include "ddpm/schedule.hpp"
#include "oracles.hpp"

using ddpm::Batch;
using ddpm::DenoiserArch;
using ddpm::DenoiserParams;
using ddpm::Rng;
using ddpm::Schedule;

namespace {

Batch make_batch(std::vector<double> vals, std::size_t D) {
  Batch b;
  b.D = D;
  b.n = vals.size() / D;
  b.x = std::move(vals);
  return b;
}

}  // namespace

TEST_CASE("layer shape arithmetic") {
  DenoiserArch a;
  a.D = 2;
  a.E = 4;
  a.hidden = {5, 3};
  CHECK(a.layer_in() == std::vector<std::size_t>{6, 5, 3});
  CHECK(a.layer_out() == std::vector<std::size_t>{5, 3, 2});
  CHECK(a.n_params() == 35 + 18 + 8);
  CHECK(a.n_layers() == 3);
}

TEST_CASE("level embedding basics") {
  SUBCASE("level 0 is all (sin, cos) = (0, 1) pairs") {
    const auto e = ddpm::level_embedding(0, 8);
    REQUIRE(e.size() == 8);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(e[2 * k] == 0.0);
      CHECK(e[2 * k + 1] == 1.0);
    }
  }
  SUBCASE("entries stay in [-1, 1]") {
    for (int t : {0, 1, 7, 500, 999}) {
      for (double v : ddpm::level_embedding(t, 16)) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
    }
  }
  SUBCASE("first pair uses unit frequency") {
    const auto e = ddpm::level_embedding(3, 4);
    CHECK(e[0] == doctest::Approx(std::sin(3.0)).epsilon(1e-15));
    CHECK(e[1] == doctest::Approx(std::cos(3.0)).epsilon(1e-15));
  }
  SUBCASE("all levels below 1000 embed distinctly") {
    std::set<std::vector<double>> seen;
    for (int t = 0; t < 1000; ++t) seen.insert(ddpm::level_embedding(t, 16));
    CHECK(seen.size() == 1000);
  }
  SUBCASE("odd embedding width is rejected") {
    CHECK_THROWS_AS(ddpm::level_embedding(0, 3), ddpm::ConfigError);
    DenoiserArch a;
    a.E = 3;
    CHECK_THROWS_AS(
        ddpm::init_params(a, "predict_x0", "posterior_variance", Rng(1)),
        ddpm::ConfigError);
  }
}

TEST_CASE("init draws zero biases and rejects unknown modes") {
  DenoiserArch a;
  a.D = 1;
  a.E = 4;
  a.hidden = {6};
  const auto p =
      ddpm::init_params(a, "predict_eps", "noising_variance", Rng(9));
  REQUIRE(p.theta.size() == a.n_params());
  // Flat layout is W then b per layer; check both bias blocks are zero.
  const std::size_t w0 = 5 * 6;
  for (std::size_t i = w0; i < w0 + 6; ++i) CHECK(p.theta[i] == 0.0);
  const std::size_t w1 = w0 + 6 + 6 * 1;
  for (std::size_t i = w1; i < w1 + 1; ++i) CHECK(p.theta[i] == 0.0);

  CHECK_THROWS_AS(ddpm::init_params(a, "predict_mu", "noising_variance",
                                    Rng(1)),
                  ddpm::ConfigError);
  CHECK_THROWS_AS(ddpm::init_params(a, "predict_x0", "fixed_small", Rng(1)),
                  ddpm::ConfigError);
}

TEST_CASE("init weight statistics follow N(0, 2 / fan_in)") {
  DenoiserArch a;
  a.D = 1;
  a.E = 16;
  a.hidden = {256, 256};
  const auto p =
      ddpm::init_params(a, "predict_x0", "posterior_variance", Rng(123));
  // Second layer weight block: 256 x 256 entries after the first W and b.
  const std::size_t off = 17 * 256 + 256;
  std::vector<double> w(p.theta.begin() + off,
                        p.theta.begin() + off + 256 * 256);
  const auto s = oracles::summarize(w);
  CHECK(std::fabs(s.mean) < 4.0 * s.se);
  const double expect_var = 2.0 / 256.0;
  const double var_se = expect_var * std::sqrt(2.0 / double(w.size()));
  CHECK(std::fabs(s.var - expect_var) < 4.0 * var_se);
}

TEST_CASE("zero parameters predict zero") {
  DenoiserArch a;
  a.D = 2;
  a.E = 4;
  a.hidden = {8};
  DenoiserParams p;
  p.arch = a;
  p.theta.assign(a.n_params(), 0.0);
  const Batch x = make_batch({0.3, -1.2, 0.7, 2.0}, 2);
  const Batch out = ddpm::predict(p, x, 3);
  for (double v : out.x) CHECK(v == 0.0);
}

TEST_CASE("prediction is deterministic") {
  DenoiserArch a;
  a.D = 1;
  a.E = 8;
  a.hidden = {16, 16};
  const auto p =
      ddpm::init_params(a, "predict_x0", "posterior_variance", Rng(5));
  const Batch x = make_batch({0.1, -0.4, 1.3}, 1);
  const Batch o1 = ddpm::predict(p, x, 2);
  const Batch o2 = ddpm::predict(p, x, 2);
  CHECK(o1.x == o2.x);
}

TEST_CASE("a single linear layer reproduces the affine hand computation") {
  DenoiserArch a;
  a.D = 1;
  a.E = 2;
  a.hidden = {};
  DenoiserParams p;
  p.arch = a;
  // One layer: W is 1 x 3 over [x, sin, cos], then one bias.
  p.theta = {2.0, -1.0, 0.5, 0.25};
  const Batch x = make_batch({3.0}, 1);

  SUBCASE("t = 1 conditions on output level 0, embedding (0, 1)") {
    const Batch out = ddpm::predict(p, x, 1);
    CHECK(out.x[0] == doctest::Approx(2.0 * 3.0 + (-1.0) * 0.0 + 0.5 * 1.0 +
                                      0.25)
                          .epsilon(1e-15));
  }
  SUBCASE("t = 2 conditions on output level 1, embedding (sin 1, cos 1)") {
    const Batch out = ddpm::predict(p, x, 2);
    const double expect =
        2.0 * 3.0 - std::sin(1.0) + 0.5 * std::cos(1.0) + 0.25;
    CHECK(out.x[0] == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("hidden layers apply the sigmoid-weighted linear unit") {
  DenoiserArch a;
  a.D = 1;
  a.E = 2;
  a.hidden = {1};
  DenoiserParams p;
  p.arch = a;
  // Layer 0: W = [1, 0, 0], b = 0.  Layer 1: W = [1], b = 0.
  p.theta = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  const Batch x = make_batch({2.0}, 1);
  const Batch out = ddpm::predict(p, x, 1);
  const double silu = 2.0 / (1.0 + std::exp(-2.0));
  CHECK(out.x[0] == doctest::Approx(silu).epsilon(1e-15));
}

TEST_CASE("backprop matches central finite differences") {
  DenoiserArch a;
  a.D = 2;
  a.E = 4;
  a.hidden = {5};
  const auto base =
      ddpm::init_params(a, "predict_x0", "posterior_variance", Rng(21));
  const Batch x = make_batch({0.3, -0.8, 1.1, 0.4, -0.2, 0.9}, 2);
  const int t = 3;

  // Scalar loss: sum of squared outputs.
  ddpm::GradientTape tape;
  const Batch out = ddpm::predict_with_tape(base, x, t, &tape);
  Batch dl = out;
  for (double& v : dl.x) v *= 2.0;
  std::vector<double> grad(base.theta.size(), 0.0);
  ddpm::backprop(base, tape, dl, &grad);

  const auto loss = [&](const std::vector<double>& theta) {
    DenoiserParams q = base;
    q.theta = theta;
    const Batch o = ddpm::predict(q, x, t);
    double acc = 0.0;
    for (double v : o.x) acc += v * v;
    return acc;
  };
  const auto fd = oracles::fd_gradient(loss, base.theta);
  CHECK(oracles::max_grad_rel_err(grad, fd) < 1e-4);
}

TEST_CASE("posterior mean from predictions") {
  const Schedule s(std::vector<double>{0.9, 0.9});
  const auto pc = ddpm::posterior_coefficients(s, 2);

  SUBCASE("hand value: true x0 = 1 at x_t = 0.81 gives mean 0.9") {
    const Batch x_t = make_batch({0.81}, 1);
    const Batch pred = make_batch({1.0}, 1);
    const Batch mu = ddpm::mean_from_prediction(pc, x_t, pred, "predict_x0");
    CHECK(mu.x[0] == doctest::Approx(0.9).epsilon(1e-12));
  }
  SUBCASE("the two parameterisations agree given consistent predictions") {
    Rng rng(64);
    for (int rep = 0; rep < 20; ++rep) {
      const Schedule rs = oracles::random_schedule(rng, 2, 40);
      const int t = 1 + int(rng.uniform() * rs.T() - 1e-12);
      const auto rpc = ddpm::posterior_coefficients(rs, t);
      const double xt = 2.0 * rng.normal();
      const double f = rng.normal();  // any x0 prediction
      const double eps_hat = (xt - rpc.c * f) / rpc.d;
      const Batch bx = make_batch({xt}, 1);
      const Batch mu_x0 =
          ddpm::mean_from_prediction(rpc, bx, make_batch({f}, 1),
                                     "predict_x0");
      const Batch mu_eps =
          ddpm::mean_from_prediction(rpc, bx, make_batch({eps_hat}, 1),
                                     "predict_eps");
      CHECK(mu_eps.x[0] ==
            doctest::Approx(mu_x0.x[0]).epsilon(1e-12).scale(1.0));
    }
  }
  SUBCASE("with the true noise the eps form recovers the exact mean") {
    Rng rng(17);
    const Schedule rs(std::vector<double>{0.95, 0.85, 0.75});
    const int t = 3;
    const auto rpc = ddpm::posterior_coefficients(rs, t);
    const double x0 = 0.6;
    const double eps = rng.normal();
    const double xt = rs.Lambda(t) * x0 + std::sqrt(rs.var(t)) * eps;
    const Batch mu = ddpm::mean_from_prediction(
        rpc, make_batch({xt}, 1), make_batch({eps}, 1), "predict_eps");
    const double exact = rpc.a * x0 + rpc.b * xt;
    CHECK(mu.x[0] == doctest::Approx(exact).epsilon(1e-12));
  }
  SUBCASE("mean_prediction_coeff matches the closed forms") {
    CHECK(ddpm::mean_prediction_coeff(pc, "predict_x0") == pc.a);
    CHECK(ddpm::mean_prediction_coeff(pc, "predict_eps") ==
          doctest::Approx(-pc.a * pc.d / pc.c).epsilon(1e-15));
  }
}

TEST_CASE("variance choices per level") {
  const Schedule s(std::vector<double>{0.9, 0.9});
  SUBCASE("noising variance is 1 - lambda_t^2") {
    const auto pc = ddpm::posterior_coefficients(s, 1);
    CHECK(ddpm::variance_for_level(pc, s, 1, "noising_variance") ==
          doctest::Approx(0.19).epsilon(1e-15));
  }
  SUBCASE("posterior variance at t = 2 uses the exact value") {
    const auto pc = ddpm::posterior_coefficients(s, 2);
    CHECK(ddpm::variance_for_level(pc, s, 2, "posterior_variance") ==
          doctest::Approx(0.0361 / 0.3439).epsilon(1e-12));
  }
  SUBCASE("posterior variance never exceeds noising variance for t >= 2") {
    Rng rng(91);
    for (int rep = 0; rep < 10; ++rep) {
      const Schedule rs = oracles::random_schedule(rng, 2, 50);
      for (int t = 2; t <= rs.T(); ++t) {
        const auto pc = ddpm::posterior_coefficients(rs, t);
        CHECK(ddpm::variance_for_level(pc, rs, t, "posterior_variance") <=
              ddpm::variance_for_level(pc, rs, t, "noising_variance"));
      }
    }
  }
  SUBCASE("the degenerate level-1 posterior variance is floored") {
    const auto pc = ddpm::posterior_coefficients(s, 1);
    CHECK(pc.var == 0.0);
    CHECK(ddpm::variance_for_level(pc, s, 1, "posterior_variance") ==
          s.var(1));
  }
}

TEST_CASE("reverse model wrapper") {
  DenoiserArch a;
  a.D = 1;
  a.E = 4;
  a.hidden = {6};
  const auto p =
      ddpm::init_params(a, "predict_eps", "noising_variance", Rng(33));
  const auto m = ddpm::as_reverse_model(p);
  CHECK(m.mode == "predict_eps");
  CHECK(m.variance_mode == "noising_variance");
  CHECK(m.D == 1);
  const Batch x = make_batch({0.5, -0.7}, 1);
  CHECK(m.predict(x, 2).x == ddpm::predict(p, x, 2).x);

  const Schedule s(std::vector<double>{0.9, 0.8});
  const auto pc = ddpm::posterior_coefficients(s, 2);
  CHECK(ddpm::model_sigma2(m, pc, s, 2) ==
        ddpm::variance_for_level(pc, s, 2, "noising_variance"));
  ddpm::ReverseModel pinned = m;
  pinned.sigma2_override = [](int) { return 0.123; };
  CHECK(ddpm::model_sigma2(pinned, pc, s, 2) == 0.123);
}

TEST_CASE("parameter json round trip is bitwise") {
  DenoiserArch a;
  a.D = 2;
  a.E = 6;
  a.hidden = {7, 3};
  const auto p =
      ddpm::init_params(a, "predict_x0", "posterior_variance", Rng(101));
  const auto back = DenoiserParams::from_json(p.to_json());
  CHECK(back.theta == p.theta);
  CHECK(back.mode == p.mode);
  CHECK(back.variance_mode == p.variance_mode);
  CHECK(back.arch.D == p.arch.D);
  CHECK(back.arch.E == p.arch.E);
  CHECK(back.arch.hidden == p.arch.hidden);
}

TEST_CASE("dimension mismatches are rejected") {
  DenoiserArch a;
  a.D = 2;
  const auto p =
      ddpm::init_params(a, "predict_x0", "posterior_variance", Rng(1));
  const Batch x = make_batch({0.1, 0.2, 0.3}, 1);
  CHECK_THROWS_AS(ddpm::predict(p, x, 1), ddpm::ConfigError);
}
