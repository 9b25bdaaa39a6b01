#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bnspike/dynamics.hpp"
#include "bnspike/error.hpp"
#include "bnspike/trajectory_io.hpp"

namespace bnspike::harness {

inline constexpr int kConfigSchemaVersion = 1;

enum class DatasetSource { Hilbert, ActiveMargin, File };
enum class InitRule { AlignedMix, Gaussian };
enum class ReferenceChoice { Auto, LeastSquares, SVM };
enum class OutputFormat { Csv, Json };

inline std::string_view to_string(DatasetSource s) {
  switch (s) {
    case DatasetSource::Hilbert: return "hilbert";
    case DatasetSource::ActiveMargin: return "active_margin";
    case DatasetSource::File: return "file";
  }
  return "hilbert";
}
inline std::string_view to_string(InitRule r) { return r == InitRule::AlignedMix ? "aligned_mix" : "gaussian"; }
inline std::string_view to_string(ReferenceChoice r) {
  switch (r) {
    case ReferenceChoice::Auto: return "auto";
    case ReferenceChoice::LeastSquares: return "least_squares";
    case ReferenceChoice::SVM: return "svm";
  }
  return "auto";
}
inline std::string_view to_string(OutputFormat f) { return f == OutputFormat::Csv ? "csv" : "json"; }

inline OutputFormat parse_format(std::string_view s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  raise(ErrorKind::Config, "unknown format '" + std::string(s) + "' (expected csv or json)");
}

struct DatasetSpec {
  DatasetSource source = DatasetSource::Hilbert;
  std::string path;
  long n = 10;
  long d = 20;
  double noise_std = 1e-2;
  bool rotate = true;
  long row_offset = 0;
  long col_offset = 0;
  double gamma = 1.0;
  double spread = 1.0;
  bool whiten = true;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
};

struct InitSpec {
  InitRule rule = InitRule::AlignedMix;
  double ratio = 0.5;
  double w_norm = 1.0;
  double k = 0.1;
  double alpha0 = 0.5;
};

struct AnalysisSpec {
  bool onset = true;
  bool stabilization = true;
  bool falling_edge = true;
  bool lemma5 = true;
  bool logistic_bounds = true;
  bool theorem4 = true;
  bool sharpness = false;
  long sharpness_every = 10;
  long t0 = 0;
};

struct OutputSpec {
  std::string dir = "out";
  std::string prefix = "run";
  OutputFormat format = OutputFormat::Csv;
  bool log_risk = false;
};

struct SweepSpec {
  std::vector<double> eta;
  std::vector<double> eta_alpha;
  std::vector<std::uint64_t> seeds;
};

/// Everything a run depends on. Two equal RunConfigs produce identical files.
struct RunConfig {
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  ReferenceChoice reference = ReferenceChoice::Auto;
  InitSpec init;
  GDConfig gd;
  AnalysisSpec analysis;
  OutputSpec output;
  SweepSpec sweep;

  std::uint64_t dataset_seed() const { return dataset.seed.value_or(seed); }
  /// Independent stream for the initial state, derived from the run seed.
  std::uint64_t init_seed() const { return seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL; }
};

namespace detail {

struct RawValue {
  std::string text;
  long line = 0;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

/// Strips a trailing comment that is not inside a quoted string.
inline std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (!quoted && s[i] == '#') return s.substr(0, i);
  }
  return s;
}

inline std::map<std::string, RawValue> parse_key_values(std::istream& in) {
  std::map<std::string, RawValue> out;
  std::string line;
  std::string section;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') raise(ErrorKind::Config, "line " + std::to_string(lineno) + ": unterminated section");
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      raise(ErrorKind::Config, "line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(s.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    if (out.count(key)) raise(ErrorKind::Config, "line " + std::to_string(lineno) + ": duplicate key " + key);
    out[key] = RawValue{trim(s.substr(eq + 1)), lineno};
  }
  return out;
}

class Reader {
 public:
  explicit Reader(std::map<std::string, RawValue> kv) : kv_(std::move(kv)) {}

  template <typename F>
  void take(const std::string& key, F&& apply) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    try {
      apply(it->second.text);
    } catch (const Error& e) {
      raise(ErrorKind::Config, key + " (line " + std::to_string(it->second.line) + "): " + e.what());
    }
    kv_.erase(it);
  }

  void real(const std::string& key, double& dst) {
    take(key, [&](const std::string& v) { dst = to_real(v); });
  }
  void integer(const std::string& key, long& dst) {
    take(key, [&](const std::string& v) { dst = to_integer(v); });
  }
  void u64(const std::string& key, std::uint64_t& dst) {
    take(key, [&](const std::string& v) { dst = to_u64(v); });
  }
  void boolean(const std::string& key, bool& dst) {
    take(key, [&](const std::string& v) {
      if (v == "true") dst = true;
      else if (v == "false") dst = false;
      else raise(ErrorKind::Config, "expected true or false, got '" + v + "'");
    });
  }
  void string(const std::string& key, std::string& dst) {
    take(key, [&](const std::string& v) { dst = unquote(v); });
  }

  void reject_leftovers() const {
    if (kv_.empty()) return;
    const auto& [k, v] = *kv_.begin();
    raise(ErrorKind::Config, "unknown key '" + k + "' (line " + std::to_string(v.line) + ")");
  }

  static std::string unquote(const std::string& v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    return v;
  }
  static double to_real(const std::string& v) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
      x = std::stod(v, &pos);
    } catch (const std::exception&) {
      raise(ErrorKind::Config, "expected a real number, got '" + v + "'");
    }
    if (pos != v.size()) raise(ErrorKind::Config, "expected a real number, got '" + v + "'");
    return x;
  }
  static long to_integer(const std::string& v) {
    std::size_t pos = 0;
    long x = 0;
    try {
      x = std::stol(v, &pos);
    } catch (const std::exception&) {
      raise(ErrorKind::Config, "expected an integer, got '" + v + "'");
    }
    if (pos != v.size()) raise(ErrorKind::Config, "expected an integer, got '" + v + "'");
    return x;
  }
  static std::uint64_t to_u64(const std::string& v) {
    std::size_t pos = 0;
    unsigned long long x = 0;
    if (!v.empty() && v[0] == '-') raise(ErrorKind::Config, "expected an unsigned integer, got '" + v + "'");
    try {
      x = std::stoull(v, &pos);
    } catch (const std::exception&) {
      raise(ErrorKind::Config, "expected an unsigned integer, got '" + v + "'");
    }
    if (pos != v.size()) raise(ErrorKind::Config, "expected an unsigned integer, got '" + v + "'");
    return x;
  }
  static std::vector<std::string> list_items(const std::string& v) {
    if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
      raise(ErrorKind::Config, "expected a list like [a, b, c], got '" + v + "'");
    }
    std::vector<std::string> items;
    std::stringstream ss(v.substr(1, v.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) items.push_back(item);
    }
    return items;
  }

 private:
  std::map<std::string, RawValue> kv_;
};

}  // namespace detail

/// Parses and validates a config document. Every key must be known.
inline RunConfig parse_run_config(std::istream& in) {
  detail::Reader r(detail::parse_key_values(in));
  RunConfig c;
  long version = -1;
  r.integer("schema_version", version);
  if (version != kConfigSchemaVersion) {
    raise(ErrorKind::Config, version < 0 ? std::string("schema_version is required")
                                         : "unsupported schema_version " + std::to_string(version));
  }
  r.u64("seed", c.seed);

  r.take("dataset.source", [&](const std::string& v) {
    const std::string s = detail::Reader::unquote(v);
    if (s == "hilbert") c.dataset.source = DatasetSource::Hilbert;
    else if (s == "active_margin") c.dataset.source = DatasetSource::ActiveMargin;
    else if (s == "file") c.dataset.source = DatasetSource::File;
    else raise(ErrorKind::Config, "expected hilbert, active_margin or file");
  });
  r.string("dataset.path", c.dataset.path);
  r.integer("dataset.n", c.dataset.n);
  r.integer("dataset.d", c.dataset.d);
  r.real("dataset.noise_std", c.dataset.noise_std);
  r.boolean("dataset.rotate", c.dataset.rotate);
  r.integer("dataset.row_offset", c.dataset.row_offset);
  r.integer("dataset.col_offset", c.dataset.col_offset);
  r.real("dataset.gamma", c.dataset.gamma);
  r.real("dataset.spread", c.dataset.spread);
  r.boolean("dataset.whiten", c.dataset.whiten);
  r.take("dataset.seed", [&](const std::string& v) { c.dataset.seed = detail::Reader::to_u64(v); });

  r.take("reference.kind", [&](const std::string& v) {
    const std::string s = detail::Reader::unquote(v);
    if (s == "auto") c.reference = ReferenceChoice::Auto;
    else if (s == "least_squares") c.reference = ReferenceChoice::LeastSquares;
    else if (s == "svm") c.reference = ReferenceChoice::SVM;
    else raise(ErrorKind::Config, "expected auto, least_squares or svm");
  });

  r.take("init.rule", [&](const std::string& v) {
    const std::string s = detail::Reader::unquote(v);
    if (s == "aligned_mix") c.init.rule = InitRule::AlignedMix;
    else if (s == "gaussian") c.init.rule = InitRule::Gaussian;
    else raise(ErrorKind::Config, "expected aligned_mix or gaussian");
  });
  r.real("init.ratio", c.init.ratio);
  r.real("init.w_norm", c.init.w_norm);
  r.real("init.k", c.init.k);
  r.real("init.alpha0", c.init.alpha0);

  r.real("gd.eta", c.gd.eta);
  r.real("gd.eta_alpha", c.gd.eta_alpha);
  r.integer("gd.max_iters", c.gd.max_iters);
  r.take("gd.loss", [&](const std::string& v) { c.gd.loss = parse_loss(detail::Reader::unquote(v)); });
  r.take("gd.mode", [&](const std::string& v) { c.gd.mode = parse_mode(detail::Reader::unquote(v)); });
  r.integer("gd.snapshot_every", c.gd.snapshot_every);
  r.real("edge.tol", c.gd.edge_tol);

  r.boolean("analysis.onset", c.analysis.onset);
  r.boolean("analysis.stabilization", c.analysis.stabilization);
  r.boolean("analysis.falling_edge", c.analysis.falling_edge);
  r.boolean("analysis.lemma5", c.analysis.lemma5);
  r.boolean("analysis.logistic_bounds", c.analysis.logistic_bounds);
  r.boolean("analysis.theorem4", c.analysis.theorem4);
  r.boolean("analysis.sharpness", c.analysis.sharpness);
  r.integer("analysis.sharpness_every", c.analysis.sharpness_every);
  r.integer("analysis.t0", c.analysis.t0);

  r.string("output.dir", c.output.dir);
  r.string("output.prefix", c.output.prefix);
  r.take("output.format", [&](const std::string& v) { c.output.format = parse_format(detail::Reader::unquote(v)); });
  r.boolean("output.log_risk", c.output.log_risk);

  r.take("sweep.eta", [&](const std::string& v) {
    for (const auto& s : detail::Reader::list_items(v)) c.sweep.eta.push_back(detail::Reader::to_real(s));
  });
  r.take("sweep.eta_alpha", [&](const std::string& v) {
    for (const auto& s : detail::Reader::list_items(v)) c.sweep.eta_alpha.push_back(detail::Reader::to_real(s));
  });
  r.take("sweep.seeds", [&](const std::string& v) {
    for (const auto& s : detail::Reader::list_items(v)) c.sweep.seeds.push_back(detail::Reader::to_u64(s));
  });
  r.reject_leftovers();

  try {
    c.gd.validate();
  } catch (const Error& e) {
    raise(ErrorKind::Config, std::string("gd: ") + e.what());
  }
  if (c.dataset.source == DatasetSource::File && c.dataset.path.empty()) {
    raise(ErrorKind::Config, "dataset.path is required when dataset.source = file");
  }
  if (c.analysis.sharpness_every < 1) raise(ErrorKind::Config, "analysis.sharpness_every must be >= 1");
  if (c.analysis.t0 < 0 || c.analysis.t0 >= c.gd.max_iters) {
    raise(ErrorKind::Config, "analysis.t0 must lie in [0, gd.max_iters)");
  }
  return c;
}

inline RunConfig parse_run_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open config " + path);
  return parse_run_config(in);
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["seed"] = c.seed;
  j["dataset"] = {{"source", std::string(to_string(c.dataset.source))},
                  {"path", c.dataset.path},
                  {"n", c.dataset.n},
                  {"d", c.dataset.d},
                  {"noise_std", c.dataset.noise_std},
                  {"rotate", c.dataset.rotate},
                  {"row_offset", c.dataset.row_offset},
                  {"col_offset", c.dataset.col_offset},
                  {"gamma", c.dataset.gamma},
                  {"spread", c.dataset.spread},
                  {"whiten", c.dataset.whiten},
                  {"seed", c.dataset_seed()}};
  j["reference"] = std::string(to_string(c.reference));
  j["init"] = {{"rule", std::string(to_string(c.init.rule))},
               {"ratio", c.init.ratio},
               {"w_norm", c.init.w_norm},
               {"k", c.init.k},
               {"alpha0", c.init.alpha0}};
  j["gd"] = gd_config_to_json(c.gd);
  return j;
}

}  // namespace bnspike::harness
