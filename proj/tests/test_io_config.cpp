// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "ddpm/batch.hpp"
#include "ddpm/config.hpp"
#include "ddpm/errors.hpp"
#include "ddpm/io.hpp"

namespace fs = std::filesystem;

using ddpm::ConfigError;
using ddpm::MissingArtifactError;
using ddpm::RunConfig;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("ddpm-test-" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// A fully specified config document exercising every recognised key.
nlohmann::json full_config_json() {
  nlohmann::json j;
  j["seed"] = 1234;
  j["output_dir"] = "runs/full";
  j["data"] = {{"kind", "gmm1d"},
               {"D", 1},
               {"components",
                {{{"mean", {-2.0}}, {"var", 0.5}, {"weight", 0.5}},
                 {{"mean", {2.0}}, {"var", 0.25}, {"weight", 0.5}}}}};
  j["schedule"] = {{"kind", "linear_beta"},
                   {"T", 16},
                   {"beta1", 1e-4},
                   {"beta2", 0.02}};
  j["model"] = {{"embed_dim", 8},
                {"hidden", {16, 16}},
                {"mode", "predict_eps"},
                {"variance_mode", "noising_variance"}};
  j["train"] = {{"objective", "simplified_ddpm"},
                {"weights", "simplified_cancelling"},
                {"level_sampling", "weighted"},
                {"batch_size", 32},
                {"levels_per_step", 2},
                {"steps", 100},
                {"step_size", 1e-3},
                {"beta1", 0.9},
                {"beta2", 0.995},
                {"epsilon", 1e-9},
                {"seed", 5},
                {"checkpoint_interval", 50}};
  j["eval"] = {{"metrics", {"moments", "histogram_kl", "score_rmse"}},
               {"samples", 2000},
               {"bins", 40},
               {"range", {-5.0, 5.0}},
               {"levels", {1, 8, 16}},
               {"endpoint_T_values", {32, 64}},
               {"endpoint_snr_max", 100.0},
               {"endpoint_snr_min", 0.1},
               {"elbo_n", 500},
               {"thresholds", {{"histogram_kl", 0.05}}}};
  return j;
}

}  // namespace

TEST_CASE("io: format_double round-trips doubles exactly") {
  const std::vector<double> values = {0.0,
                                      1.0,
                                      -1.0,
                                      0.1,
                                      1.0 / 3.0,
                                      3.141592653589793,
                                      -2.718281828459045e-8,
                                      6.02214076e23,
                                      1e-300,
                                      123456789.123456789};
  for (double v : values) {
    CAPTURE(v);
    const std::string s = ddpm::io::format_double(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("io: text files round-trip") {
  const fs::path dir = fresh_dir("io-text");
  const std::string body = "line one\nline two\n";
  ddpm::io::write_text(dir / "note.txt", body);
  CHECK(ddpm::io::read_text(dir / "note.txt") == body);
}

TEST_CASE("io: CSV writes a header and round-trips every cell exactly") {
  const fs::path dir = fresh_dir("io-csv");
  ddpm::io::CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{1.5, -0.25}, {1.0 / 3.0, 1e-10}, {0.0, 123456.789}};

  const std::string text = ddpm::io::to_csv(t);
  CHECK(text.rfind("a,b\n", 0) == 0);

  ddpm::io::write_csv(dir / "t.csv", t);
  const ddpm::io::CsvTable back = ddpm::io::read_csv(dir / "t.csv");
  REQUIRE(back.header == t.header);
  REQUIRE(back.rows.size() == t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.rows[r].size(); ++c)
      CHECK(back.rows[r][c] == t.rows[r][c]);
}

TEST_CASE("io: malformed CSV is rejected") {
  const fs::path dir = fresh_dir("io-csv-bad");
  SUBCASE("ragged row") {
    ddpm::io::write_text(dir / "bad.csv", "a,b\n1.0,2.0\n3.0\n");
    CHECK_THROWS_AS(ddpm::io::read_csv(dir / "bad.csv"), ConfigError);
  }
  SUBCASE("non-numeric cell") {
    ddpm::io::write_text(dir / "bad.csv", "a,b\n1.0,oops\n");
    CHECK_THROWS_AS(ddpm::io::read_csv(dir / "bad.csv"), ConfigError);
  }
  SUBCASE("empty file") {
    ddpm::io::write_text(dir / "bad.csv", "");
    CHECK_THROWS_AS(ddpm::io::read_csv(dir / "bad.csv"), ConfigError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(ddpm::io::read_csv(dir / "absent.csv"),
                    MissingArtifactError);
  }
}

TEST_CASE("io: JSON read distinguishes missing from malformed") {
  const fs::path dir = fresh_dir("io-json");
  CHECK_THROWS_AS(ddpm::io::read_json(dir / "absent.json"),
                  MissingArtifactError);
  ddpm::io::write_text(dir / "broken.json", "{ not json");
  CHECK_THROWS_AS(ddpm::io::read_json(dir / "broken.json"), ConfigError);
  ddpm::io::write_json(dir / "ok.json", nlohmann::json{{"k", 3.5}});
  CHECK(ddpm::io::read_json(dir / "ok.json").at("k").get<double>() == 3.5);
}

TEST_CASE("io: batch CSV has one coordinate column per dimension") {
  const fs::path dir = fresh_dir("io-batch");
  ddpm::Batch b(3, 2);
  for (std::size_t i = 0; i < b.x.size(); ++i)
    b.x[i] = 0.5 * static_cast<double>(i);
  ddpm::io::write_batch_csv(dir / "samples.csv", b);
  const ddpm::io::CsvTable t = ddpm::io::read_csv(dir / "samples.csv");
  REQUIRE(t.header == std::vector<std::string>{"x0", "x1"});
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[1][0] == 1.0);
  CHECK(t.rows[1][1] == 1.5);
}

TEST_CASE("io: ensure_dir creates nested directories") {
  const fs::path dir = fresh_dir("io-dirs");
  const fs::path nested = dir / "a" / "b" / "c";
  ddpm::io::ensure_dir(nested);
  CHECK(fs::is_directory(nested));
  // Calling again on an existing directory is fine.
  ddpm::io::ensure_dir(nested);
}

TEST_CASE("config: full document round-trips through to_json/from_json") {
  const RunConfig c = RunConfig::from_json(full_config_json());
  CHECK(c.seed == 1234);
  CHECK(c.output_dir == fs::path("runs/full"));
  CHECK(c.data.kind == "gmm1d");
  CHECK(c.arch.E == 8);
  CHECK(c.arch.hidden == std::vector<std::size_t>{16, 16});
  CHECK(c.mode == "predict_eps");
  CHECK(c.variance_mode == "noising_variance");
  CHECK(c.train.objective == "simplified_ddpm");
  CHECK(c.train.seed == 5);
  CHECK(c.eval.bins == 40);
  CHECK(c.eval.thresholds.at("histogram_kl") == 0.05);

  // Serialising and re-parsing must reproduce the same document.
  const nlohmann::json j1 = c.to_json();
  const nlohmann::json j2 = RunConfig::from_json(j1).to_json();
  CHECK(j1 == j2);
}

TEST_CASE("config: defaults apply when keys are omitted") {
  nlohmann::json j;
  j["data"] = {{"kind", "unit_gaussian"}, {"D", 1}};
  j["schedule"] = {{"kind", "linear_beta"},
                   {"T", 4},
                   {"beta1", 0.001},
                   {"beta2", 0.02}};
  const RunConfig c = RunConfig::from_json(j);
  CHECK(c.seed == 0);
  CHECK(c.output_dir == fs::path("runs"));
  // The defaults form a runnable trio: noise prediction with the noising
  // variance matches the default simplified objective.
  CHECK(c.mode == "predict_eps");
  CHECK(c.variance_mode == "noising_variance");
  CHECK(c.train.objective == "simplified_ddpm");
  CHECK(c.arch.E == 16);
  CHECK(c.eval.samples == 100000);
  CHECK(c.eval.endpoint_T_values == std::vector<int>{64, 128, 256});
  CHECK(c.eval.endpoint_snr_max == 400.0);
  CHECK(c.eval.endpoint_snr_min == 0.01);
}

TEST_CASE("config: train seed inherits the run seed unless given") {
  nlohmann::json j;
  j["seed"] = 77;
  j["data"] = {{"kind", "unit_gaussian"}, {"D", 1}};
  j["schedule"] = {{"kind", "linear_beta"},
                   {"T", 4},
                   {"beta1", 0.001},
                   {"beta2", 0.02}};
  CHECK(RunConfig::from_json(j).train.seed == 77);

  j["train"] = {{"seed", 5}};
  CHECK(RunConfig::from_json(j).train.seed == 5);
}

TEST_CASE("config: model dimension is forced to match the data") {
  nlohmann::json j;
  j["data"] = {{"kind", "ring2d"}, {"D", 2}};
  j["schedule"] = {{"kind", "quarter_cosine"}, {"T", 4}};
  j["model"] = {{"embed_dim", 8}, {"hidden", {8}}};
  const RunConfig c = RunConfig::from_json(j);
  CHECK(c.arch.D == 2);
}

TEST_CASE("config: invalid documents are rejected up front") {
  nlohmann::json ok;
  ok["data"] = {{"kind", "unit_gaussian"}, {"D", 1}};
  ok["schedule"] = {{"kind", "linear_beta"},
                    {"T", 4},
                    {"beta1", 0.001},
                    {"beta2", 0.02}};
  REQUIRE_NOTHROW(RunConfig::from_json(ok));

  SUBCASE("missing schedule") {
    nlohmann::json j = ok;
    j.erase("schedule");
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
  SUBCASE("unknown schedule kind") {
    nlohmann::json j = ok;
    j["schedule"] = {{"kind", "mystery"}, {"T", 4}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
  SUBCASE("unknown mode") {
    nlohmann::json j = ok;
    j["model"] = {{"mode", "predict_score"}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
  SUBCASE("unknown variance mode") {
    nlohmann::json j = ok;
    j["model"] = {{"variance_mode", "learned"}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
  SUBCASE("odd embedding dimension") {
    nlohmann::json j = ok;
    j["model"] = {{"embed_dim", 7}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
  SUBCASE("objective incompatible with the prediction mode") {
    // The variational objective needs a clean-signal network with the
    // posterior variance; under the default noise-prediction mode it is a
    // configuration mistake.
    nlohmann::json j = ok;
    j["train"] = {{"objective", "vdm"}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
  SUBCASE("unknown objective") {
    nlohmann::json j = ok;
    j["train"] = {{"objective", "score_matching"}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
  SUBCASE("unknown eval metric") {
    nlohmann::json j = ok;
    j["eval"] = {{"metrics", {"fid"}}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
  SUBCASE("too few histogram bins") {
    nlohmann::json j = ok;
    j["eval"] = {{"bins", 9}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
  SUBCASE("decreasing eval range") {
    nlohmann::json j = ok;
    j["eval"] = {{"range", {2.0, -2.0}}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
  SUBCASE("wrong range arity") {
    nlohmann::json j = ok;
    j["eval"] = {{"range", {1.0, 2.0, 3.0}}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
  SUBCASE("type error inside the document") {
    nlohmann::json j = ok;
    j["seed"] = "abc";
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  }
}
