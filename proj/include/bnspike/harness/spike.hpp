#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "json.hpp"

#include "bnspike/dynamics.hpp"

namespace bnspike::harness {

/// Quantifies the loss spike around the first rising episode.
struct SpikeSummary {
  long t_descent_end = 0;  // first rising step, or the last record if none
  double peak_risk = 0.0;
  std::optional<long> peak_t;
  double trough_risk_before = 0.0;
  std::optional<long> recovery_time;
  double spike_ratio = 1.0;
  bool has_rise = false;
};

inline constexpr double kRecoveryFactor = 1.01;

/// The episode the summary is built around: the first delayed rise if there
/// is one, otherwise the first rise of any kind.
inline const RiseEpisode* spike_episode(const EdgeAnalysis& edges) {
  for (const auto& e : edges.episodes)
    if (e.delayed) return &e;
  return edges.episodes.empty() ? nullptr : &edges.episodes.front();
}

inline SpikeSummary spike_summary(const std::vector<TrajectoryRecord>& recs, const EdgeAnalysis& edges) {
  SpikeSummary s;
  if (recs.empty()) return s;
  const long last = static_cast<long>(recs.size()) - 1;
  auto risk = [&](long t) { return recs[static_cast<std::size_t>(t)].stats.risk; };

  const RiseEpisode* ep = spike_episode(edges);
  if (ep == nullptr) {
    s.t_descent_end = last;
    double lo = risk(0);
    for (long t = 1; t <= last; ++t) lo = std::min(lo, risk(t));
    s.trough_risk_before = lo;
    s.peak_risk = lo;
    return s;
  }
  s.has_rise = true;
  s.t_descent_end = ep->begin;
  double lo = risk(0);
  for (long t = 1; t <= ep->begin; ++t) lo = std::min(lo, risk(t));
  s.trough_risk_before = lo;

  const long end = std::min(ep->t2.value_or(last), last);
  long arg = ep->begin;
  for (long t = ep->begin; t <= end; ++t)
    if (risk(t) > risk(arg)) arg = t;
  s.peak_t = arg;
  s.peak_risk = risk(arg);
  s.spike_ratio = s.trough_risk_before > 0.0 ? s.peak_risk / s.trough_risk_before : 1.0;
  for (long t = arg + 1; t <= last; ++t) {
    if (risk(t) <= s.trough_risk_before * kRecoveryFactor) {
      s.recovery_time = t;
      break;
    }
  }
  return s;
}

inline nlohmann::json to_json(const SpikeSummary& s) {
  nlohmann::json j = {{"t_descent_end", s.t_descent_end},
                      {"peak_risk", s.peak_risk},
                      {"trough_risk_before", s.trough_risk_before},
                      {"spike_ratio", s.spike_ratio},
                      {"has_rise", s.has_rise}};
  j["peak_t"] = s.peak_t ? nlohmann::json(*s.peak_t) : nlohmann::json();
  j["recovery_time"] = s.recovery_time ? nlohmann::json(*s.recovery_time) : nlohmann::json();
  return j;
}

}  // namespace bnspike::harness
