// SPDX-License-Identifier: Apache-2.0

// End-to-end tests driving the installed binary through a shell, checking
// exit codes, file contracts and byte-level reproducibility.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ddpm/datasets.hpp"
#include "ddpm/eval.hpp"
#include "ddpm/io.hpp"
#include "ddpm/schedule.hpp"
#include "ddpm/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("ddpm-cli-" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Runs the binary through /bin/sh and returns its exit code. DDPM_SEED is
// scrubbed from the environment unless the caller injects it explicitly in
// env_prefix, so ambient state cannot leak into the seeding tests.
int run_cli(const std::string& args, const fs::path& capture,
            const std::string& env_prefix = "") {
  std::string cmd = "env -u DDPM_SEED " + env_prefix + " \"" DDPM_BINARY
                    "\" " + args;
  cmd += " > \"" + capture.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

nlohmann::json base_config(const std::string& data_kind) {
  nlohmann::json j;
  j["seed"] = 9;
  j["data"] = {{"kind", data_kind}, {"D", 1}};
  j["schedule"] = {{"kind", "linear_beta"},
                   {"T", 8},
                   {"beta1", 0.05},
                   {"beta2", 0.05}};
  j["model"] = {{"embed_dim", 8}, {"hidden", {16}}};
  j["train"] = {{"objective", "simplified_ddpm"},
                {"batch_size", 16},
                {"steps", 10},
                {"step_size", 1e-3},
                {"seed", 3},
                {"checkpoint_interval", 0}};
  return j;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  const fs::path p = dir / "config.json";
  ddpm::io::write_json(p, j);
  return p;
}

// Trains a tiny run so sample/eval tests have a checkpoint to point at.
fs::path make_run(const fs::path& dir, const nlohmann::json& cfg) {
  const fs::path cfg_path = write_config(dir, cfg);
  const fs::path run_dir = dir / "run";
  const int rc = run_cli("train --config \"" + cfg_path.string() +
                             "\" --run-dir \"" + run_dir.string() + "\"",
                         dir / "train.out");
  REQUIRE(rc == 0);
  return run_dir / "checkpoint-final.json";
}

}  // namespace

TEST_CASE("cli: schedule writes the level table and prints endpoint SNRs") {
  const fs::path dir = fresh_dir("schedule");
  nlohmann::json cfg = base_config("unit_gaussian");
  // Slope chosen so the final level has 1 - lambda_T^2 = 0.02.
  const double slope = (0.02 - 1e-4) / 999.0;
  cfg["schedule"] = {{"kind", "linear_beta"},
                     {"T", 1000},
                     {"beta1", 1e-4},
                     {"beta2", slope}};
  const fs::path cfg_path = write_config(dir, cfg);
  const fs::path out = dir / "out";
  const int rc = run_cli("schedule --config \"" + cfg_path.string() +
                             "\" --out \"" + out.string() + "\"",
                         dir / "stdout.txt");
  CHECK(rc == 0);

  const ddpm::io::CsvTable t = ddpm::io::read_csv(out / "schedule.csv");
  REQUIRE(t.header == std::vector<std::string>{"t", "lambda", "Lambda",
                                               "sigma2", "snr", "log_snr"});
  REQUIRE(t.rows.size() == 1000);

  // Every cell must reproduce the in-process schedule exactly; 17 digit
  // formatting makes the CSV a lossless view of the doubles.
  const ddpm::Schedule s = ddpm::make_linear_beta(1000, 1e-4, slope);
  for (std::size_t i = 0; i < t.rows.size(); i += 97) {
    const int level = static_cast<int>(t.rows[i][0]);
    CHECK(level == static_cast<int>(i) + 1);
    CHECK(t.rows[i][1] == s.lambda(level));
    CHECK(t.rows[i][2] == s.Lambda(level));
    CHECK(t.rows[i][3] == s.sigma2(level));
    CHECK(t.rows[i][4] == s.snr(level));
  }
  for (std::size_t i = 1; i < t.rows.size(); ++i)
    CHECK(t.rows[i][4] < t.rows[i - 1][4]);

  const std::string printed = slurp(dir / "stdout.txt");
  CHECK(printed.find("SNR(1) = " + ddpm::io::format_double(s.snr(1))) !=
        std::string::npos);
  CHECK(printed.find("SNR(T) = " + ddpm::io::format_double(s.snr(1000))) !=
        std::string::npos);
}

TEST_CASE("cli: schedule honours kind and level-count overrides") {
  const fs::path dir = fresh_dir("schedule-override");
  const fs::path cfg_path = write_config(dir, base_config("unit_gaussian"));
  const fs::path out = dir / "out";
  const int rc = run_cli("schedule --config \"" + cfg_path.string() +
                             "\" --out \"" + out.string() +
                             "\" --kind quarter_cosine --T 2",
                         dir / "stdout.txt");
  CHECK(rc == 0);

  const ddpm::io::CsvTable t = ddpm::io::read_csv(out / "schedule.csv");
  REQUIRE(t.rows.size() == 2);
  const ddpm::Schedule s = ddpm::make_quarter_cosine(2);
  CHECK(t.rows[0][2] == s.Lambda(1));
  CHECK(t.rows[1][2] == s.Lambda(2));
}

TEST_CASE("cli: malformed config exits with code 2 and writes nothing") {
  const fs::path dir = fresh_dir("schedule-bad");
  const fs::path cfg_path = dir / "config.json";
  ddpm::io::write_text(cfg_path, "{ this is not json");
  const fs::path out = dir / "out";
  const int rc = run_cli("schedule --config \"" + cfg_path.string() +
                             "\" --out \"" + out.string() + "\"",
                         dir / "stdout.txt");
  CHECK(rc == 2);
  CHECK(!fs::exists(out / "schedule.csv"));
}

TEST_CASE("cli: missing config exits with the missing-artifact code") {
  const fs::path dir = fresh_dir("schedule-missing");
  const int rc = run_cli(
      "schedule --config \"" + (dir / "absent.json").string() + "\"",
      dir / "stdout.txt");
  CHECK(rc == 4);
}

TEST_CASE("cli: train writes a run directory with reproducible losses") {
  const fs::path dir = fresh_dir("train");
  const fs::path cfg_path = write_config(dir, base_config("unit_gaussian"));
  const std::string cfg_before = slurp(cfg_path);

  const fs::path d1 = dir / "r1";
  const fs::path d2 = dir / "r2";
  const int rc1 = run_cli("train --config \"" + cfg_path.string() +
                              "\" --run-dir \"" + d1.string() + "\"",
                          dir / "out1.txt");
  CHECK(rc1 == 0);

  const ddpm::io::CsvTable t = ddpm::io::read_csv(d1 / "loss.csv");
  REQUIRE(t.header == std::vector<std::string>{"step", "loss"});
  REQUIRE(t.rows.size() == 10);
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    CHECK(t.rows[i][0] == static_cast<double>(i + 1));
  CHECK(fs::exists(d1 / "config.json"));
  CHECK(fs::exists(d1 / "checkpoint-final.json"));
  CHECK(slurp(dir / "out1.txt").find("final loss") != std::string::npos);

  const int rc2 = run_cli("train --config \"" + cfg_path.string() +
                              "\" --run-dir \"" + d2.string() + "\"",
                          dir / "out2.txt");
  CHECK(rc2 == 0);
  CHECK(slurp(d1 / "loss.csv") == slurp(d2 / "loss.csv"));
  CHECK(slurp(d1 / "checkpoint-final.json") ==
        slurp(d2 / "checkpoint-final.json"));

  // The input config is an input, never an output.
  CHECK(slurp(cfg_path) == cfg_before);
}

TEST_CASE("cli: training halves the smoothed loss on the bimodal target") {
  const fs::path dir = fresh_dir("train-gmm");
  nlohmann::json cfg = base_config("gmm1d");
  cfg["model"] = {{"embed_dim", 8}, {"hidden", {16, 16}}};
  cfg["train"]["steps"] = 1500;
  cfg["train"]["batch_size"] = 64;
  cfg["train"]["step_size"] = 5e-3;
  const fs::path cfg_path = write_config(dir, cfg);
  const fs::path run = dir / "run";
  const int rc = run_cli("train --config \"" + cfg_path.string() +
                             "\" --run-dir \"" + run.string() + "\"",
                         dir / "out.txt");
  CHECK(rc == 0);

  const ddpm::io::CsvTable t = ddpm::io::read_csv(run / "loss.csv");
  REQUIRE(t.rows.size() == 1500);
  std::vector<double> losses;
  for (const auto& row : t.rows) losses.push_back(row[1]);
  const std::vector<double> sm = ddpm::smoothed(losses, 0.05);
  CHECK(sm.back() <= 0.5 * sm.front());
}

TEST_CASE("cli: train divergence exits with code 3") {
  const fs::path dir = fresh_dir("train-diverge");
  nlohmann::json cfg = base_config("unit_gaussian");
  cfg["train"]["step_size"] = 1e150;
  cfg["train"]["steps"] = 5;
  const fs::path cfg_path = write_config(dir, cfg);
  const int rc = run_cli("train --config \"" + cfg_path.string() +
                             "\" --run-dir \"" + (dir / "run").string() +
                             "\"",
                         dir / "out.txt");
  CHECK(rc == 3);
}

TEST_CASE("cli: sample writes a header-only CSV for n = 0") {
  const fs::path dir = fresh_dir("sample-empty");
  const fs::path ckpt = make_run(dir, base_config("unit_gaussian"));
  const fs::path out = dir / "samples";
  const int rc = run_cli("sample --checkpoint \"" + ckpt.string() +
                             "\" --n 0 --out \"" + out.string() + "\"",
                         dir / "out.txt");
  CHECK(rc == 0);
  CHECK(slurp(out / "samples.csv") == "x0\n");
}

TEST_CASE("cli: oracle sampling on the stationary target passes moments") {
  const fs::path dir = fresh_dir("sample-oracle");
  nlohmann::json cfg = base_config("unit_gaussian");
  cfg["train"]["steps"] = 0;
  const fs::path ckpt = make_run(dir, cfg);
  const fs::path out = dir / "samples";
  const int rc = run_cli("sample --checkpoint \"" + ckpt.string() +
                             "\" --n 100000 --oracle --out \"" +
                             out.string() + "\"",
                         dir / "out.txt");
  CHECK(rc == 0);

  const ddpm::io::CsvTable t = ddpm::io::read_csv(out / "samples.csv");
  REQUIRE(t.rows.size() == 100000);
  ddpm::Batch b(t.rows.size(), 1);
  for (std::size_t i = 0; i < t.rows.size(); ++i) b.at(i, 0) = t.rows[i][0];
  const ddpm::MomentTest mt = ddpm::moment_test(b);
  CHECK(mt.pass());
}

TEST_CASE("cli: sample seeding is reproducible with flag over environment") {
  const fs::path dir = fresh_dir("sample-seed");
  const fs::path ckpt = make_run(dir, base_config("unit_gaussian"));

  const auto draw = [&](const std::string& tag, const std::string& args,
                        const std::string& env) {
    const fs::path out = dir / tag;
    const int rc = run_cli("sample --checkpoint \"" + ckpt.string() +
                               "\" --n 2000 --out \"" + out.string() +
                               "\" " + args,
                           dir / (tag + ".txt"), env);
    REQUIRE(rc == 0);
    return slurp(out / "samples.csv");
  };

  const std::string by_flag = draw("flag", "--seed 123", "");
  const std::string by_flag_again = draw("flag2", "--seed 123", "");
  const std::string by_env = draw("env", "", "DDPM_SEED=123");
  const std::string flag_beats_env = draw("both", "--seed 123",
                                          "DDPM_SEED=5");
  const std::string other_seed = draw("other", "--seed 124", "");

  CHECK(by_flag == by_flag_again);
  CHECK(by_flag == by_env);
  CHECK(by_flag == flag_beats_env);
  CHECK(by_flag != other_seed);
}

TEST_CASE("cli: sample trace records every level for every draw") {
  const fs::path dir = fresh_dir("sample-trace");
  const fs::path ckpt = make_run(dir, base_config("unit_gaussian"));
  const fs::path out = dir / "samples";
  const int rc = run_cli("sample --checkpoint \"" + ckpt.string() +
                             "\" --n 7 --trace --out \"" + out.string() +
                             "\"",
                         dir / "out.txt");
  CHECK(rc == 0);
  const ddpm::io::CsvTable t = ddpm::io::read_csv(out / "trace.csv");
  REQUIRE(t.header == std::vector<std::string>{"t", "x0"});
  // T + 1 recorded states (start plus one per reverse step) per draw.
  CHECK(t.rows.size() == 9 * 7);
}

TEST_CASE("cli: sample fails cleanly on a missing checkpoint") {
  const fs::path dir = fresh_dir("sample-missing");
  const int rc = run_cli(
      "sample --checkpoint \"" + (dir / "absent.json").string() + "\"",
      dir / "out.txt");
  CHECK(rc == 4);
}

TEST_CASE("cli: eval reports every requested metric and gates thresholds") {
  const fs::path dir = fresh_dir("eval");
  nlohmann::json cfg = base_config("unit_gaussian");
  cfg["train"]["steps"] = 0;
  cfg["eval"] = {{"metrics", {"moments", "histogram_kl", "score_rmse"}},
                 {"samples", 20000},
                 {"thresholds", {{"histogram_kl", 0.05}}}};
  const fs::path ckpt = make_run(dir, cfg);
  const fs::path cfg_path = dir / "config.json";

  const fs::path out = dir / "eval";
  const int rc = run_cli("eval --checkpoint \"" + ckpt.string() +
                             "\" --config \"" + cfg_path.string() +
                             "\" --oracle --out \"" + out.string() + "\"",
                         dir / "out.txt");
  CHECK(rc == 0);

  // Metric keys sit at the top level of the report, next to the metadata.
  const nlohmann::json m = ddpm::io::read_json(out / "metrics.json");
  for (const char* key :
       {"moment_abs_mean_max", "moment_var_err_max", "moments_pass",
        "histogram_kl", "score_rmse_max"}) {
    CAPTURE(key);
    CHECK(m.contains(key));
  }
  CHECK(m.at("moments_pass").get<double>() == 1.0);
  CHECK(m.at("histogram_kl").get<double>() < 0.05);
  // The analytic noise predictor is exact here, so the sweep is flat zero.
  CHECK(m.at("score_rmse_max").get<double>() == 0.0);
  CHECK(fs::exists(out / "metrics.csv"));
  CHECK(fs::exists(out / "score_rmse.csv"));

  SUBCASE("an unachievable threshold trips the gate") {
    nlohmann::json strict = cfg;
    strict["eval"]["thresholds"] = {{"histogram_kl", 1e-12}};
    const fs::path strict_path = dir / "strict.json";
    ddpm::io::write_json(strict_path, strict);
    const int rc2 = run_cli("eval --checkpoint \"" + ckpt.string() +
                                "\" --config \"" + strict_path.string() +
                                "\" --oracle --out \"" +
                                (dir / "eval2").string() + "\"",
                            dir / "out2.txt");
    CHECK(rc2 == 1);
    CHECK(slurp(dir / "out2.txt").find("threshold violated") !=
          std::string::npos);
  }

  SUBCASE("a threshold on an unreported metric is a config error") {
    nlohmann::json bad = cfg;
    bad["eval"]["thresholds"] = {{"endpoint_relative_gap_final", 1.0}};
    const fs::path bad_path = dir / "bad.json";
    ddpm::io::write_json(bad_path, bad);
    const int rc2 = run_cli("eval --checkpoint \"" + ckpt.string() +
                                "\" --config \"" + bad_path.string() +
                                "\" --oracle --out \"" +
                                (dir / "eval3").string() + "\"",
                            dir / "out3.txt");
    CHECK(rc2 == 2);
  }
}

TEST_CASE("cli: eval endpoint mode emits the gap series CSV") {
  const fs::path dir = fresh_dir("eval-endpoint");
  nlohmann::json cfg = base_config("unit_gaussian");
  cfg["train"]["steps"] = 0;
  cfg["eval"] = {{"metrics", {"endpoint_gap"}},
                 {"endpoint_T_values", {8, 16}},
                 {"endpoint_snr_max", 50.0},
                 {"endpoint_snr_min", 0.05}};
  const fs::path ckpt = make_run(dir, cfg);
  const fs::path out = dir / "eval";
  const int rc = run_cli("eval --checkpoint \"" + ckpt.string() +
                             "\" --config \"" + (dir / "config.json").string() +
                             "\" --out \"" + out.string() + "\"",
                         dir / "out.txt");
  CHECK(rc == 0);

  const ddpm::io::CsvTable t = ddpm::io::read_csv(out / "endpoint_gap.csv");
  REQUIRE(t.header == std::vector<std::string>{"T", "loss_a", "loss_b", "gap",
                                               "relative_gap"});
  REQUIRE(t.rows.size() == 2);
  const nlohmann::json m = ddpm::io::read_json(out / "metrics.json");
  CHECK(m.contains("endpoint_relative_gap_final"));
  CHECK(m.at("endpoint_relative_gap_T16").get<double>() <
        m.at("endpoint_relative_gap_T8").get<double>());
}
