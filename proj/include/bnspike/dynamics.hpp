#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bnspike/dataset.hpp"
#include "bnspike/model.hpp"
#include "bnspike/reference.hpp"

namespace bnspike {

enum class StepMode { Vector, Recurrence };

inline std::string_view to_string(StepMode mode) {
  return mode == StepMode::Vector ? "vector" : "recurrence";
}

inline StepMode parse_mode(std::string_view s) {
  if (s == "vector") return StepMode::Vector;
  if (s == "recurrence") return StepMode::Recurrence;
  raise(ErrorKind::Config, "unknown mode '" + std::string(s) + "' (expected vector or recurrence)");
}

/// Full-batch GD settings: w moves with eta, alpha with eta_alpha.
struct GDConfig {
  double eta = 1.0;
  double eta_alpha = 0.1;
  long max_iters = 1000;
  LossKind loss = LossKind::Square;
  StepMode mode = StepMode::Vector;
  double edge_tol = 0.0;
  long snapshot_every = 100;

  void validate() const {
    if (!(eta > 0.0)) raise(ErrorKind::Config, "eta must be positive");
    if (!(eta_alpha > 0.0)) raise(ErrorKind::Config, "eta_alpha must be positive");
    if (max_iters < 1) raise(ErrorKind::Config, "max_iters must be at least 1");
    if (!(edge_tol >= 0.0)) raise(ErrorKind::Config, "edge_tol must be nonnegative");
    if (snapshot_every < 1) raise(ErrorKind::Config, "snapshot_every must be at least 1");
  }
};

/// Directional summary of one iterate relative to w_hat. `ratio` is
/// rho_perp / rho and is NaN off the positive-alignment branch (rho <= 0).
struct DirectionalStats {
  double rho = 0.0;
  double rho_perp = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double rho_perp_sigma = 0.0;
  double eff_lr = 0.0;        // eta * alpha * rho / ||w||^2
  double eff_lr_sigma = 0.0;  // eta * alpha * rho / ||w||_Sigma^2
  double w_norm = 0.0;
  double w_sigma_norm = 0.0;
  double alpha = 0.0;
  double risk = 0.0;

  bool on_branch() const { return !std::isnan(ratio); }
  double hatw_norm() const { return std::hypot(rho, rho_perp); }
};

enum class Edge { Rising, Falling, Flat, Undefined };

inline std::string_view to_string(Edge e) {
  switch (e) {
    case Edge::Rising: return "rising";
    case Edge::Falling: return "falling";
    case Edge::Flat: return "flat";
    case Edge::Undefined: return "undefined";
  }
  return "undefined";
}

inline Edge parse_edge(std::string_view s) {
  if (s == "rising") return Edge::Rising;
  if (s == "falling") return Edge::Falling;
  if (s == "flat") return Edge::Flat;
  return Edge::Undefined;
}

/// `edge` labels the step t -> t+1; the final record has no successor and is Undefined.
struct TrajectoryRecord {
  long t = 0;
  DirectionalStats stats;
  Edge edge = Edge::Undefined;
  std::optional<ModelState> state_snapshot;
};

/// One GD step: both gradients are read at the input state.
inline ModelState step_vector(const ModelState& state, const Dataset& ds, const GDConfig& cfg) {
  Gradient g = gradient(state, ds, cfg.loss);
  return ModelState{state.w - cfg.eta * g.w, state.alpha - cfg.eta_alpha * g.alpha};
}

/// Reduced state of the whitened square-loss dynamics.
struct RecurrenceState {
  double ratio = 0.0;
  double alpha = 0.0;
  double rho = 0.0;
  double w_norm = 0.0;
};

/// Closed-form whitened square-loss step on (ratio, alpha, ||w||):
///   ratio' = |eta_hat - 1| / (1 + eta_hat ratio^2) * ratio
///   alpha' = alpha + eta_alpha (rho - alpha)
///   ||w'||^2 = ||w||^2 + eta^2 alpha^2 rho_perp^2 / ||w||^2
/// with eta_hat = eta alpha rho / ||w||^2 and rho recovered from the ratio.
inline RecurrenceState step_recurrence(const RecurrenceState& s, double hatw_norm,
                                       const GDConfig& cfg) {
  if (!(s.rho > 0.0)) {
    raise(ErrorKind::BranchViolation,
          "closed-form recurrence needs rho > 0, got " + std::to_string(s.rho));
  }
  const double w2 = s.w_norm * s.w_norm;
  const double eta_hat = cfg.eta * s.alpha * s.rho / w2;
  const double rho_perp = s.rho * s.ratio;
  RecurrenceState next;
  next.ratio = std::abs(eta_hat - 1.0) / (1.0 + eta_hat * s.ratio * s.ratio) * s.ratio;
  next.alpha = s.alpha + cfg.eta_alpha * (s.rho - s.alpha);
  const double step = cfg.eta * s.alpha * rho_perp / s.w_norm;
  next.w_norm = std::sqrt(w2 + step * step);
  next.rho = hatw_norm / std::sqrt(1.0 + next.ratio * next.ratio);
  return next;
}

/// rho, rho_perp and their Sigma-geometry companion for direction w.
inline DirectionalStats directional_stats(const ModelState& state, const Dataset& ds,
                                          const ReferenceDirection& ref, const GDConfig& cfg) {
  check_dim(state.w, ds.d(), "w");
  check_dim(ref.w_hat, ds.d(), "w_hat");
  DirectionalStats st;
  st.w_norm = state.w.norm();
  if (!(st.w_norm > 0.0)) raise(ErrorKind::DegenerateState, "||w|| = 0");
  Vec u = state.w / st.w_norm;
  st.rho = ref.w_hat.dot(u);
  st.rho_perp = (ref.w_hat - st.rho * u).norm();
  if (st.rho > 0.0) st.ratio = st.rho_perp / st.rho;
  st.alpha = state.alpha;

  const double sqrt_n = std::sqrt(static_cast<double>(ds.n()));
  Vec a = ds.Xtilde().transpose() * ref.w_hat;
  Vec b = ds.Xtilde().transpose() * state.w;
  st.w_sigma_norm = b.norm() / sqrt_n;
  const double bb = b.squaredNorm();
  st.rho_perp_sigma = bb > 0.0 ? (a - (a.dot(b) / bb) * b).norm() / sqrt_n : a.norm() / sqrt_n;

  st.eff_lr = cfg.eta * st.alpha * st.rho / (st.w_norm * st.w_norm);
  st.eff_lr_sigma = st.w_sigma_norm > 0.0
                        ? cfg.eta * st.alpha * st.rho / (st.w_sigma_norm * st.w_sigma_norm)
                        : std::numeric_limits<double>::quiet_NaN();
  st.risk = risk(state, ds, cfg.loss);
  return st;
}

/// Square-loss risk on whitened data rebuilt from (alpha, rho, rho_perp):
/// half of (alpha - rho)^2 + rho_perp^2 + 1 - ||w_hat||^2.
inline double whitened_square_risk(double alpha, double rho, double rho_perp, double hatw_norm) {
  return 0.5 * ((alpha - rho) * (alpha - rho) + rho_perp * rho_perp + 1.0 - hatw_norm * hatw_norm);
}

inline DirectionalStats stats_from_recurrence(const RecurrenceState& s, double hatw_norm,
                                              const GDConfig& cfg) {
  DirectionalStats st;
  st.rho = s.rho;
  st.rho_perp = s.rho * s.ratio;
  st.ratio = s.ratio;
  st.rho_perp_sigma = st.rho_perp;
  st.w_norm = s.w_norm;
  st.w_sigma_norm = s.w_norm;
  st.alpha = s.alpha;
  st.eff_lr = cfg.eta * s.alpha * s.rho / (s.w_norm * s.w_norm);
  st.eff_lr_sigma = st.eff_lr;
  st.risk = whitened_square_risk(s.alpha, s.rho, st.rho_perp, hatw_norm);
  return st;
}

/// Ratios at or below this are rounding noise around an exact alignment:
/// rho_perp is recovered from a difference of O(||w_hat||) vectors, so its
/// absolute error is a few ulps and the ratio jitters near 1e-15 once the
/// direction has converged. Steps between two such values are Flat.
inline constexpr double kRatioFloor = 1e-9;

inline Edge label_step(double ratio_now, double ratio_next, double tol) {
  if (std::isnan(ratio_now) || std::isnan(ratio_next)) return Edge::Undefined;
  if (ratio_now <= kRatioFloor && ratio_next <= kRatioFloor) return Edge::Flat;
  if (ratio_next > ratio_now * (1.0 + tol)) return Edge::Rising;
  if (ratio_next < ratio_now * (1.0 - tol)) return Edge::Falling;
  return Edge::Flat;
}

struct EdgeSegment {
  Edge kind = Edge::Undefined;
  long begin = 0;  // first step index
  long end = 0;    // last step index, inclusive
};

/// A rising excursion of the ratio. `delayed` is set when the rise follows a
/// falling run (the delayed-onset event t1); `t2` is the first falling step
/// after the rise, when it occurs inside the trajectory.
struct RiseEpisode {
  long begin = 0;
  bool delayed = false;
  std::optional<long> t2;
  long rising_steps = 0;
  long flat_ties = 0;
};

struct EdgeAnalysis {
  std::vector<Edge> labels;
  std::vector<EdgeSegment> segments;
  std::vector<RiseEpisode> episodes;
  long rising_steps = 0;
  long falling_steps = 0;
  long flat_steps = 0;
  long undefined_steps = 0;

  std::optional<long> first_onset(long after = -1) const {
    for (const auto& ep : episodes)
      if (ep.delayed && ep.begin > after) return ep.begin;
    return std::nullopt;
  }
};

/// Online labeler shared by the batch classifier and the trajectory runner.
class EdgeTracker {
 public:
  struct Events {
    bool onset = false;
    bool stabilized = false;
  };

  explicit EdgeTracker(EdgeAnalysis& out) : out_(out) {}

  Events push(long t, Edge label) {
    Events ev;
    out_.labels.push_back(label);
    switch (label) {
      case Edge::Rising: ++out_.rising_steps; break;
      case Edge::Falling: ++out_.falling_steps; break;
      case Edge::Flat: ++out_.flat_steps; break;
      case Edge::Undefined: ++out_.undefined_steps; break;
    }
    if (out_.segments.empty() || out_.segments.back().kind != label) {
      out_.segments.push_back(EdgeSegment{label, t, t});
    } else {
      out_.segments.back().end = t;
    }
    if (label == Edge::Undefined) {
      // Off-branch steps break any episode in progress.
      in_rise_ = false;
      last_directional_ = Edge::Undefined;
      return ev;
    }
    if (in_rise_) {
      auto& ep = out_.episodes.back();
      if (label == Edge::Rising) ++ep.rising_steps;
      if (label == Edge::Flat) ++ep.flat_ties;
      if (label == Edge::Falling) {
        ep.t2 = t;
        in_rise_ = false;
        ev.stabilized = true;
      }
    } else if (label == Edge::Rising) {
      RiseEpisode ep;
      ep.begin = t;
      ep.delayed = last_directional_ == Edge::Falling;
      ep.rising_steps = 1;
      out_.episodes.push_back(ep);
      in_rise_ = true;
      ev.onset = ep.delayed;
    }
    if (label != Edge::Flat) last_directional_ = label;
    return ev;
  }

 private:
  EdgeAnalysis& out_;
  bool in_rise_ = false;
  Edge last_directional_ = Edge::Undefined;
};

/// Labels each step by the multiplicative change of the ratio. NaN entries
/// mark off-branch records and yield Undefined labels.
inline EdgeAnalysis classify_edges(const std::vector<double>& ratios, double tol = 0.0) {
  if (ratios.empty()) raise(ErrorKind::Precondition, "cannot classify an empty trajectory");
  if (!(tol >= 0.0)) raise(ErrorKind::Precondition, "edge tolerance must be nonnegative");
  EdgeAnalysis out;
  EdgeTracker tracker(out);
  for (std::size_t t = 0; t + 1 < ratios.size(); ++t)
    tracker.push(static_cast<long>(t), label_step(ratios[t], ratios[t + 1], tol));
  out.labels.push_back(Edge::Undefined);  // last record has no successor
  return out;
}

inline std::vector<double> ratios_of(const std::vector<TrajectoryRecord>& records) {
  std::vector<double> r;
  r.reserve(records.size());
  for (const auto& rec : records) r.push_back(rec.stats.ratio);
  return r;
}

inline EdgeAnalysis classify_edges(const std::vector<TrajectoryRecord>& records, double tol = 0.0) {
  return classify_edges(ratios_of(records), tol);
}

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  EdgeAnalysis edges;
  GDConfig cfg;
  double hatw_norm = 0.0;
};

/// Called with every vector-mode iterate and its statistics, before the step.
using StepObserver = std::function<void(long, const ModelState&, const DirectionalStats&)>;

inline bool is_whitened(const Dataset& ds, double tol = 1e-8) { return whitening_defect(ds) < tol; }

/// Runs max_iters records (max_iters - 1 steps) from `init`. Snapshots of
/// the full state are kept every `snapshot_every` steps and at onset,
/// stabilization and alpha-catch-up events (vector mode only).
inline Trajectory run_trajectory(const ModelState& init, const Dataset& ds,
                                 const ReferenceDirection& ref, const GDConfig& cfg,
                                 const StepObserver& observer = {}) {
  cfg.validate();
  if (!(init.alpha > 0.0)) raise(ErrorKind::Precondition, "alpha_0 must be positive");
  Trajectory traj;
  traj.cfg = cfg;
  traj.hatw_norm = ref.norm();
  traj.records.reserve(static_cast<std::size_t>(cfg.max_iters));
  EdgeTracker tracker(traj.edges);

  if (cfg.mode == StepMode::Recurrence) {
    if (cfg.loss != LossKind::Square) {
      raise(ErrorKind::Config, "recurrence mode requires the square loss");
    }
    if (!is_whitened(ds)) raise(ErrorKind::Config, "recurrence mode requires whitened data");
    DirectionalStats st0 = directional_stats(init, ds, ref, cfg);
    if (!st0.on_branch()) {
      raise(ErrorKind::BranchViolation, "recurrence mode needs rho_0 > 0");
    }
    RecurrenceState s{st0.ratio, st0.alpha, st0.rho, st0.w_norm};
    for (long t = 0; t < cfg.max_iters; ++t) {
      TrajectoryRecord rec;
      rec.t = t;
      rec.stats = t == 0 ? st0 : stats_from_recurrence(s, traj.hatw_norm, cfg);
      if (t == 0) rec.state_snapshot = init;
      if (t > 0) {
        auto& prev = traj.records.back();
        prev.edge = label_step(prev.stats.ratio, rec.stats.ratio, cfg.edge_tol);
        tracker.push(t - 1, prev.edge);
      }
      traj.records.push_back(std::move(rec));
      if (t + 1 < cfg.max_iters) {
        try {
          s = step_recurrence(s, traj.hatw_norm, cfg);
        } catch (const Error& e) {
          raise(e.kind(), "iteration " + std::to_string(t) + ": " + e.what());
        }
      }
    }
    traj.edges.labels.push_back(Edge::Undefined);
    return traj;
  }

  ModelState state = init;
  ModelState prev_state = init;
  bool alpha_caught_up = false;
  for (long t = 0; t < cfg.max_iters; ++t) {
    TrajectoryRecord rec;
    rec.t = t;
    try {
      rec.stats = directional_stats(state, ds, ref, cfg);
    } catch (const Error& e) {
      raise(e.kind(), "iteration " + std::to_string(t) + ": " + e.what());
    }
    if (observer) observer(t, state, rec.stats);
    if (t % cfg.snapshot_every == 0) rec.state_snapshot = state;
    if (t > 0) {
      auto& prev = traj.records.back();
      prev.edge = label_step(prev.stats.ratio, rec.stats.ratio, cfg.edge_tol);
      EdgeTracker::Events ev = tracker.push(t - 1, prev.edge);
      if (ev.onset) alpha_caught_up = false;
      if ((ev.onset || ev.stabilized) && !prev.state_snapshot) prev.state_snapshot = prev_state;
    }
    if (!alpha_caught_up && !traj.edges.episodes.empty() && rec.stats.alpha >= rec.stats.rho) {
      alpha_caught_up = true;
      if (!rec.state_snapshot) rec.state_snapshot = state;
    }
    traj.records.push_back(std::move(rec));
    if (t + 1 < cfg.max_iters) {
      prev_state = state;
      try {
        state = step_vector(state, ds, cfg);
      } catch (const Error& e) {
        raise(e.kind(), "iteration " + std::to_string(t) + ": " + e.what());
      }
    }
  }
  traj.edges.labels.push_back(Edge::Undefined);
  return traj;
}

}  // namespace bnspike
