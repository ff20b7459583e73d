// SPDX-License-Identifier: Apache-2.0

#include "ddpm/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ddpm/errors.hpp"

namespace ddpm::io {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw MissingArtifactError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw MissingArtifactError("cannot write " + path.string());
  out << text;
  if (!out)
    throw MissingArtifactError("short write to " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw MissingArtifactError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += table.header[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  write_text(path, to_csv(table));
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  CsvTable table;
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError(path.string() + ": empty CSV");
  std::istringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) table.header.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream rs(line);
    std::vector<double> row;
    while (std::getline(rs, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError(path.string() + ": bad numeric cell '" + cell +
                          "'");
      }
    }
    if (row.size() != table.header.size())
      throw ConfigError(path.string() + ": ragged CSV row");
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_batch_csv(const std::filesystem::path& path, const Batch& b) {
  CsvTable table;
  for (std::size_t j = 0; j < b.D; ++j)
    table.header.push_back("x" + std::to_string(j));
  table.rows.reserve(b.n);
  for (std::size_t i = 0; i < b.n; ++i) {
    std::vector<double> row(b.row(i), b.row(i) + b.D);
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw MissingArtifactError("cannot create directory " + dir.string() +
                               ": " + ec.message());
}

}  // namespace ddpm::io
