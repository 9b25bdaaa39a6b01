#pragma once

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bnspike/dynamics.hpp"

namespace bnspike {

inline constexpr int kTrajectorySchemaVersion = 1;

inline const std::vector<std::string>& trajectory_csv_columns() {
  static const std::vector<std::string> cols = {"t",      "rho",           "rho_perp",     "ratio",
                                                "alpha",  "w_norm",        "eff_lr_euclid", "eff_lr_sigma",
                                                "risk",   "edge"};
  return cols;
}

/// Shortest round-trip decimal form; "nan" for undefined values.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, long line, const char* column) {
  if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    raise(ErrorKind::Parse, "line " + std::to_string(line) + ": bad number '" + s + "' in column " + column);
  }
  return v;
}

inline void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRecord>& recs) {
  const auto& cols = trajectory_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : recs) {
    const auto& s = r.stats;
    out << r.t << ',' << format_double(s.rho) << ',' << format_double(s.rho_perp) << ','
        << format_double(s.ratio) << ',' << format_double(s.alpha) << ',' << format_double(s.w_norm) << ','
        << format_double(s.eff_lr) << ',' << format_double(s.eff_lr_sigma) << ','
        << format_double(s.risk) << ',' << to_string(r.edge) << '\n';
  }
}

/// Parses the CSV layout written above. Columns beyond the fixed set are
/// not expected; errors carry the 1-based line number.
inline std::vector<TrajectoryRecord> read_trajectory_csv(std::istream& in) {
  std::vector<TrajectoryRecord> recs;
  std::string line;
  long lineno = 0;
  const auto& cols = trajectory_csv_columns();
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!header_seen) {
      if (fields != cols) raise(ErrorKind::Parse, "line " + std::to_string(lineno) + ": unexpected header");
      header_seen = true;
      continue;
    }
    if (fields.size() != cols.size()) {
      raise(ErrorKind::Parse, "line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(cols.size()) + " fields, got " + std::to_string(fields.size()));
    }
    TrajectoryRecord r;
    r.t = static_cast<long>(parse_double(fields[0], lineno, "t"));
    auto& s = r.stats;
    s.rho = parse_double(fields[1], lineno, "rho");
    s.rho_perp = parse_double(fields[2], lineno, "rho_perp");
    s.ratio = parse_double(fields[3], lineno, "ratio");
    s.alpha = parse_double(fields[4], lineno, "alpha");
    s.w_norm = parse_double(fields[5], lineno, "w_norm");
    s.eff_lr = parse_double(fields[6], lineno, "eff_lr_euclid");
    s.eff_lr_sigma = parse_double(fields[7], lineno, "eff_lr_sigma");
    s.risk = parse_double(fields[8], lineno, "risk");
    r.edge = parse_edge(fields[9]);
    if (fields[9] != to_string(r.edge)) {
      raise(ErrorKind::Parse, "line " + std::to_string(lineno) + ": unknown edge label '" + fields[9] + "'");
    }
    recs.push_back(std::move(r));
  }
  if (!header_seen) raise(ErrorKind::Parse, "trajectory CSV has no header");
  return recs;
}

namespace detail {

inline nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }
inline double num_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

inline nlohmann::json gd_config_to_json(const GDConfig& cfg) {
  return {{"eta", cfg.eta},
          {"eta_alpha", cfg.eta_alpha},
          {"max_iters", cfg.max_iters},
          {"loss", std::string(to_string(cfg.loss))},
          {"mode", std::string(to_string(cfg.mode))},
          {"edge_tol", cfg.edge_tol},
          {"snapshot_every", cfg.snapshot_every}};
}

/// Full trajectory document; `metadata` is merged in verbatim (config,
/// dataset hash, seed). Undefined values are written as null.
inline nlohmann::json trajectory_to_json(const std::vector<TrajectoryRecord>& recs,
                                         const nlohmann::json& metadata) {
  nlohmann::json j;
  j["schema_version"] = kTrajectorySchemaVersion;
  j["metadata"] = metadata;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : recs) {
    const auto& s = r.stats;
    nlohmann::json row = {{"t", r.t},
                          {"rho", detail::num(s.rho)},
                          {"rho_perp", detail::num(s.rho_perp)},
                          {"ratio", detail::num(s.ratio)},
                          {"rho_perp_sigma", detail::num(s.rho_perp_sigma)},
                          {"alpha", detail::num(s.alpha)},
                          {"w_norm", detail::num(s.w_norm)},
                          {"w_sigma_norm", detail::num(s.w_sigma_norm)},
                          {"eff_lr_euclid", detail::num(s.eff_lr)},
                          {"eff_lr_sigma", detail::num(s.eff_lr_sigma)},
                          {"risk", detail::num(s.risk)},
                          {"edge", std::string(to_string(r.edge))}};
    if (r.state_snapshot) {
      row["snapshot"] = {{"w", std::vector<double>(r.state_snapshot->w.data(),
                                                   r.state_snapshot->w.data() + r.state_snapshot->w.size())},
                         {"alpha", r.state_snapshot->alpha}};
    }
    rows.push_back(std::move(row));
  }
  j["records"] = std::move(rows);
  return j;
}

inline std::vector<TrajectoryRecord> trajectory_from_json(const nlohmann::json& j) {
  try {
    const int v = j.at("schema_version").get<int>();
    if (v != kTrajectorySchemaVersion) {
      raise(ErrorKind::Parse, "unsupported trajectory schema_version " + std::to_string(v));
    }
    std::vector<TrajectoryRecord> recs;
    for (const auto& row : j.at("records")) {
      TrajectoryRecord r;
      r.t = row.at("t").get<long>();
      auto& s = r.stats;
      s.rho = detail::num_or_nan(row.at("rho"));
      s.rho_perp = detail::num_or_nan(row.at("rho_perp"));
      s.ratio = detail::num_or_nan(row.at("ratio"));
      s.rho_perp_sigma = detail::num_or_nan(row.value("rho_perp_sigma", nlohmann::json()));
      s.alpha = detail::num_or_nan(row.at("alpha"));
      s.w_norm = detail::num_or_nan(row.at("w_norm"));
      s.w_sigma_norm = detail::num_or_nan(row.value("w_sigma_norm", nlohmann::json()));
      s.eff_lr = detail::num_or_nan(row.at("eff_lr_euclid"));
      s.eff_lr_sigma = detail::num_or_nan(row.at("eff_lr_sigma"));
      s.risk = detail::num_or_nan(row.at("risk"));
      r.edge = parse_edge(row.at("edge").get<std::string>());
      if (row.contains("snapshot")) {
        const auto w = row["snapshot"].at("w").get<std::vector<double>>();
        r.state_snapshot = ModelState{Eigen::Map<const Vec>(w.data(), static_cast<Eigen::Index>(w.size())),
                                      row["snapshot"].at("alpha").get<double>()};
      }
      recs.push_back(std::move(r));
    }
    return recs;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Parse, std::string("trajectory JSON: ") + e.what());
  }
}

/// Loads either format, chosen by extension (.csv, otherwise JSON).
inline std::vector<TrajectoryRecord> load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open " + path);
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return read_trajectory_csv(in);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Parse, path + ": " + e.what());
  }
  return trajectory_from_json(j);
}

}  // namespace bnspike
