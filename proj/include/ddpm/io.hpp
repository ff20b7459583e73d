// SPDX-License-Identifier: Apache-2.0

// Small file helpers shared by the trainer, the metrics code and the CLI.
// All floating-point text is written with 17 significant digits so that
// values round-trip exactly through the artifacts.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddpm/batch.hpp"

namespace ddpm::io {

std::string format_double(double v);

// Reads and parses a JSON file. Missing file -> MissingArtifactError,
// malformed content -> ConfigError.
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// CSV with a header row; every cell is formatted via format_double.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

std::string to_csv(const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

// Samples as one row per record: the D coordinates, no level column.
void write_batch_csv(const std::filesystem::path& path, const Batch& b);

void ensure_dir(const std::filesystem::path& dir);

}  // namespace ddpm::io
