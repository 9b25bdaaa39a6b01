#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bnspike/dataset.hpp"

namespace bnspike {

inline constexpr int kDatasetSchemaVersion = 1;

/// X is stored row-major as d rows of n entries.
inline nlohmann::json dataset_to_json(const Dataset& ds) {
  nlohmann::json j;
  j["schema_version"] = kDatasetSchemaVersion;
  j["n"] = ds.n();
  j["d"] = ds.d();
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < ds.d(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(ds.n()));
    for (Eigen::Index k = 0; k < ds.n(); ++k) row[static_cast<std::size_t>(k)] = ds.X()(i, k);
    rows.push_back(row);
  }
  j["X"] = std::move(rows);
  j["y"] = std::vector<double>(ds.y().data(), ds.y().data() + ds.y().size());
  j["metadata"] = ds.metadata();
  return j;
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kDatasetSchemaVersion) {
      raise(ErrorKind::Parse, "unsupported dataset schema_version " +
                                  std::to_string(j.at("schema_version").get<int>()));
    }
    const auto n = j.at("n").get<Eigen::Index>();
    const auto d = j.at("d").get<Eigen::Index>();
    const auto& rows = j.at("X");
    if (static_cast<Eigen::Index>(rows.size()) != d) raise(ErrorKind::Parse, "X must have d rows");
    Mat X(d, n);
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto& row = rows.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(row.size()) != n) {
        raise(ErrorKind::Parse, "X row " + std::to_string(i) + " must have n entries");
      }
      for (Eigen::Index k = 0; k < n; ++k) X(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
    auto yv = j.at("y").get<std::vector<double>>();
    Vec y = Eigen::Map<Vec>(yv.data(), static_cast<Eigen::Index>(yv.size()));
    std::map<std::string, std::string> meta;
    if (j.contains("metadata")) meta = j.at("metadata").get<std::map<std::string, std::string>>();
    return Dataset(std::move(X), std::move(y), std::move(meta));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Parse, std::string("dataset json: ") + e.what());
  }
}

/// One sample per row, label in the last column. Blank lines and lines
/// starting with '#' are skipped; a non-numeric first row is treated as a header.
inline Dataset dataset_from_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) numeric = false;
        row.push_back(v);
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty()) continue;
      raise(ErrorKind::Parse, "csv line " + std::to_string(line_no) + " is not numeric");
    }
    if (row.size() < 2) raise(ErrorKind::Parse, "csv line " + std::to_string(line_no) + " needs features and a label");
    if (!rows.empty() && row.size() != rows.front().size()) {
      raise(ErrorKind::Parse, "csv line " + std::to_string(line_no) + " has a different column count");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) raise(ErrorKind::Parse, "csv contains no samples");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size() - 1);
  Mat X(d, n);
  Vec y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& row = rows[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < d; ++i) X(i, k) = row[static_cast<std::size_t>(i)];
    y[k] = row.back();
  }
  return Dataset(std::move(X), std::move(y), {{"generator", "csv"}});
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open dataset file " + path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return dataset_from_csv(in);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Parse, path + ": " + e.what());
  }
  return dataset_from_json(j);
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorKind::Io, "cannot write " + path);
  out << std::setprecision(17) << dataset_to_json(ds).dump(1) << '\n';
}

}  // namespace bnspike
