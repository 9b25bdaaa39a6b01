#pragma once

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bnspike/verdict.hpp"

namespace bnspike::harness {

struct Clause {
  std::string group;
  std::string name;
  Verdict verdict = Verdict::NotApplicable;
  std::string detail;
};

/// Flat list of clause outcomes plus free-form per-analysis reports.
struct Scoreboard {
  std::vector<Clause> clauses;
  nlohmann::json reports = nlohmann::json::object();

  void add(std::string group, std::string name, Verdict v, std::string detail = {}) {
    clauses.push_back(Clause{std::move(group), std::move(name), v, std::move(detail)});
  }
  std::size_t count(Verdict v) const {
    return static_cast<std::size_t>(
        std::count_if(clauses.begin(), clauses.end(), [v](const Clause& c) { return c.verdict == v; }));
  }
  /// The exit-status predicate: NotApplicable never counts as failure.
  bool failed() const { return count(Verdict::Fail) > 0; }
  const Clause* find(const std::string& group, const std::string& name) const {
    for (const auto& c : clauses)
      if (c.group == group && c.name == name) return &c;
    return nullptr;
  }
};

inline nlohmann::json to_json(const Scoreboard& sb) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : sb.clauses) {
    rows.push_back({{"group", c.group},
                    {"clause", c.name},
                    {"verdict", std::string(to_string(c.verdict))},
                    {"detail", c.detail}});
  }
  return {{"clauses", rows},
          {"counts",
           {{"pass", sb.count(Verdict::Pass)},
            {"fail", sb.count(Verdict::Fail)},
            {"not_applicable", sb.count(Verdict::NotApplicable)}}},
          {"failed", sb.failed()},
          {"reports", sb.reports}};
}

inline void render_table(std::ostream& out, const Scoreboard& sb) {
  std::size_t wg = 5, wn = 6;
  for (const auto& c : sb.clauses) {
    wg = std::max(wg, c.group.size());
    wn = std::max(wn, c.name.size());
  }
  out << std::left << std::setw(static_cast<int>(wg)) << "group" << "  " << std::setw(static_cast<int>(wn))
      << "clause" << "  " << std::setw(16) << "verdict" << "detail\n";
  for (const auto& c : sb.clauses) {
    out << std::setw(static_cast<int>(wg)) << c.group << "  " << std::setw(static_cast<int>(wn)) << c.name
        << "  " << std::setw(16) << to_string(c.verdict) << c.detail << '\n';
  }
  out << sb.count(Verdict::Pass) << " pass, " << sb.count(Verdict::Fail) << " fail, "
      << sb.count(Verdict::NotApplicable) << " not applicable\n";
}

}  // namespace bnspike::harness
