#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bnspike/dynamics.hpp"
#include "bnspike/verdict.hpp"

namespace bnspike {

// ---------------------------------------------------------------------------
// Directional convergence / divergence conditions (scale-invariant objectives)

struct Lemma5Report {
  Tri converge = Tri::NotApplicable;
  Tri diverge = Tri::NotApplicable;
  double rho = 0.0;
  double rho_perp = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = 0.0;
  double converge_lhs = 0.0;  // eta * rho / ||w|| * ||grad||^2
  double converge_rhs = 0.0;  // -2 <w_hat, grad>
  double diverge_lhs = 0.0;   // eta * ||grad|| / ||w||
  double diverge_rhs = 0.0;   // 2 rho rho_perp / (rho^2 - rho_perp^2)
};

/// Evaluates both one-step conditions. A branch whose hypotheses fail is
/// reported NotApplicable, never DoesNotHold.
inline Lemma5Report lemma5_conditions(const ModelState& state, const Vec& grad,
                                      const ReferenceDirection& ref, double eta) {
  check_dim(grad, state.w.size(), "grad");
  check_dim(ref.w_hat, state.w.size(), "w_hat");
  const double w_norm = state.w.norm();
  if (!(w_norm > 0.0)) raise(ErrorKind::DegenerateState, "||w|| = 0");
  Lemma5Report r;
  r.rho = ref.w_hat.dot(state.w) / w_norm;
  r.rho_perp = (ref.w_hat - r.rho * state.w / w_norm).norm();
  r.grad_norm = grad.norm();
  r.converge_lhs = eta * r.rho / w_norm * r.grad_norm * r.grad_norm;
  r.converge_rhs = -2.0 * ref.w_hat.dot(grad);
  if (r.rho > 0.0) {
    r.ratio = r.rho_perp / r.rho;
    r.converge = tri(r.converge_lhs <= r.converge_rhs);
  }
  r.diverge_lhs = eta * r.grad_norm / w_norm;
  const double gap = r.rho * r.rho - r.rho_perp * r.rho_perp;
  r.diverge_rhs = gap > 0.0 ? 2.0 * r.rho * r.rho_perp / gap
                            : std::numeric_limits<double>::infinity();
  if (r.rho > 0.0 && r.ratio > 0.0 && r.ratio <= 1.0 && state.alpha > 0.0) {
    r.diverge = tri(r.diverge_lhs >= r.diverge_rhs);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Delayed onset of the rising edge

enum class EtaRegime { NoRisingEdge, DelayedOnset, Indeterminate };

inline std::string_view to_string(EtaRegime r) {
  switch (r) {
    case EtaRegime::NoRisingEdge: return "no-rising-edge";
    case EtaRegime::DelayedOnset: return "delayed-onset";
    case EtaRegime::Indeterminate: return "indeterminate";
  }
  return "indeterminate";
}

struct OnsetReport {
  long t0 = 0;
  double hatw_norm = 0.0;
  double ratio_t0 = 0.0;
  double k_t0 = 0.0;
  double C_t0 = 0.0;
  double C_scale_branch = 0.0;     // 1 / (alpha rho)
  double C_feedback_branch = 0.0;  // 3 eta_alpha / (16 ||w_hat||^2 e^2 (1 - k))
  double log_argument = 0.0;
  long delta_T0 = 0;
  bool delta_T0_clamped = false;
  double no_rise_threshold = 0.0;      // 2 / ||w_hat||^2
  double onset_lower_threshold = 0.0;  // 8 / ||w_hat||^2
  double eta_over_w2 = 0.0;
  EtaRegime condition = EtaRegime::Indeterminate;
  std::string reason;
  std::vector<std::string> warnings;

  // Filled in by verify_onset.
  std::optional<long> observed_t1;
  long rising_steps_after_t0 = 0;
  long flat_ties = 0;
  long horizon = 0;
  Verdict verdict = Verdict::NotApplicable;
};

/// Thresholds and waiting-time bound at t0. The proof's e^{1 + eta_alpha}
/// is replaced by the stated e^2; `C_feedback_branch` uses the stated form.
inline OnsetReport onset_analysis(const DirectionalStats& s0, long t0, double hatw_norm,
                                  const GDConfig& cfg) {
  OnsetReport r;
  r.t0 = t0;
  r.hatw_norm = hatw_norm;
  const double h2 = hatw_norm * hatw_norm;
  r.no_rise_threshold = 2.0 / h2;
  r.onset_lower_threshold = 8.0 / h2;
  r.eta_over_w2 = cfg.eta / (s0.w_norm * s0.w_norm);
  r.ratio_t0 = s0.ratio;

  auto indeterminate = [&](std::string why) {
    r.condition = EtaRegime::Indeterminate;
    r.reason = std::move(why);
    return r;
  };
  if (cfg.loss != LossKind::Square) return indeterminate("requires the square loss");
  if (!s0.on_branch()) return indeterminate("rho_t0 <= 0");
  if (!(s0.ratio <= 1.0 / std::sqrt(3.0))) {
    return indeterminate("rho_perp/rho at t0 exceeds 1/sqrt(3)");
  }
  if (!(s0.alpha > 0.0 && s0.alpha < s0.rho)) {
    return indeterminate("requires 0 < alpha_t0 < rho_t0");
  }
  if (!(cfg.eta_alpha > 0.0 && cfg.eta_alpha < 1.0)) {
    return indeterminate("requires eta_alpha in (0, 1)");
  }

  r.k_t0 = s0.alpha / s0.rho;
  r.C_scale_branch = 1.0 / (s0.alpha * s0.rho);
  r.C_feedback_branch = 3.0 / (16.0 * h2) * cfg.eta_alpha / (std::exp(2.0) * (1.0 - r.k_t0));
  r.C_t0 = std::min(r.C_scale_branch, r.C_feedback_branch);

  const double w2 = s0.w_norm * s0.w_norm;
  r.log_argument = cfg.eta_alpha * (1.0 - r.k_t0) * w2 /
                   (4.0 * cfg.eta * h2 * s0.ratio * s0.ratio);
  if (!(r.log_argument > 1.0)) {
    r.delta_T0 = 1;
    r.delta_T0_clamped = true;
    r.warnings.push_back("log argument " + std::to_string(r.log_argument) +
                         " <= 1; waiting-time bound clamped to 1");
  } else {
    const double raw = std::log(r.log_argument) / cfg.eta_alpha + 1.0;
    r.delta_T0 = std::isfinite(raw) ? static_cast<long>(std::floor(raw))
                                    : std::numeric_limits<long>::max() / 4;
  }

  if (r.eta_over_w2 < r.no_rise_threshold) {
    r.condition = EtaRegime::NoRisingEdge;
  } else if (r.eta_over_w2 > r.onset_lower_threshold && r.eta_over_w2 <= r.C_t0) {
    r.condition = EtaRegime::DelayedOnset;
  } else {
    r.condition = EtaRegime::Indeterminate;
    r.reason = r.eta_over_w2 <= r.onset_lower_threshold
                   ? "eta/||w||^2 lies in the uncovered band [2, 8] / ||w_hat||^2"
                   : "eta/||w||^2 exceeds C_t0";
  }
  return r;
}

/// Replays the trajectory from t0 against the regime's claim.
inline void verify_onset(OnsetReport& r, const Trajectory& traj) {
  const auto& labels = traj.edges.labels;
  const long steps = static_cast<long>(labels.size()) - 1;  // last label is the terminal marker
  r.horizon = steps - r.t0;
  r.rising_steps_after_t0 = 0;
  r.flat_ties = 0;
  r.observed_t1.reset();
  for (long t = r.t0; t < steps; ++t) {
    const Edge e = labels[static_cast<std::size_t>(t)];
    if (e == Edge::Rising) {
      ++r.rising_steps_after_t0;
      if (!r.observed_t1) r.observed_t1 = t;
    } else if (e == Edge::Flat && !r.observed_t1) {
      ++r.flat_ties;
    }
  }
  if (r.flat_ties > 0) {
    r.warnings.push_back(std::to_string(r.flat_ties) + " flat step(s) before onset");
  }
  switch (r.condition) {
    case EtaRegime::NoRisingEdge:
      r.verdict = verdict(r.rising_steps_after_t0 == 0);
      break;
    case EtaRegime::DelayedOnset:
      if (r.observed_t1) {
        r.verdict = verdict(*r.observed_t1 > r.t0 && *r.observed_t1 <= r.t0 + r.delta_T0);
      } else if (r.horizon > r.delta_T0) {
        r.verdict = Verdict::Fail;
      } else {
        r.verdict = Verdict::NotApplicable;
        r.warnings.push_back("horizon shorter than the waiting-time bound");
      }
      break;
    case EtaRegime::Indeterminate:
      r.verdict = Verdict::NotApplicable;
      break;
  }
}

// ---------------------------------------------------------------------------
// Finite-time self-stabilization of the rising edge

struct ShapeViolation {
  long t = 0;
  double bound = 0.0;
  double observed = 0.0;
  int phase = 1;  // 1: [t1, phi], 2: (phi, t2]
};

struct StabilizationReport {
  long t1 = 0;
  double delta_T1_first = 0.0;   // real-valued terms before ceiling
  double delta_T1_second = 0.0;
  long delta_T1 = 0;
  bool degenerate = false;
  std::optional<long> phi;
  std::optional<long> observed_t2;
  double peak_ratio = 0.0;
  long peak_t = 0;
  long checked_steps = 0;
  std::vector<ShapeViolation> shape_bound_violations;
  Verdict duration_verdict = Verdict::NotApplicable;
  Verdict shape_verdict = Verdict::NotApplicable;
  Verdict peak_verdict = Verdict::NotApplicable;
  std::vector<std::string> warnings;

  bool passed() const {
    return duration_verdict != Verdict::Fail && shape_verdict != Verdict::Fail &&
           peak_verdict != Verdict::Fail;
  }
};

inline constexpr double kShapeBoundSlack = 1e-9;

/// Duration bound Delta T1 from the state at the onset time.
inline StabilizationReport stabilization_bound(const DirectionalStats& s1, double hatw_norm) {
  StabilizationReport r;
  const double rho = s1.rho;
  const double rp = s1.rho_perp;
  if (!(rho > 0.0) || !(rp > 0.0) || !(s1.alpha != 0.0)) {
    r.degenerate = true;
    r.warnings.push_back("duration bound undefined: needs rho, rho_perp and alpha nonzero");
    return r;
  }
  const double inv = 1.0 / (rp * rp) - 1.0 / (rho * rho);
  r.delta_T1_first = 0.25 * std::pow(hatw_norm, 4) / (s1.alpha * s1.alpha) * inv * inv;
  const double diff = rho / rp - rp / rho;
  r.delta_T1_second = 0.25 * hatw_norm * hatw_norm / (rho * rho) * diff * diff;
  const double total = std::ceil(r.delta_T1_first) + std::ceil(r.delta_T1_second);
  r.delta_T1 = std::isfinite(total) ? static_cast<long>(total) : std::numeric_limits<long>::max() / 4;
  if (r.delta_T1 == 0) {
    r.degenerate = true;
    r.warnings.push_back("ratio is 1 at onset; a rising edge cannot start there");
  }
  return r;
}

/// Checks duration, both square-root shape bounds and the peak ratio for the
/// rising episode that begins at step t1.
inline StabilizationReport stabilization_analysis(const std::vector<TrajectoryRecord>& recs,
                                                  const EdgeAnalysis& edges, long t1,
                                                  double hatw_norm) {
  const RiseEpisode* ep = nullptr;
  for (const auto& e : edges.episodes)
    if (e.begin == t1) ep = &e;
  if (ep == nullptr) {
    raise(ErrorKind::Precondition,
          "no rising segment starts at t1 = " + std::to_string(t1) + "; run the onset analysis first");
  }
  const auto at = [&](long t) -> const DirectionalStats& {
    return recs[static_cast<std::size_t>(t)].stats;
  };
  const long last = static_cast<long>(recs.size()) - 1;
  StabilizationReport r = stabilization_bound(at(t1), hatw_norm);
  r.t1 = t1;
  r.observed_t2 = ep->t2;
  const long end = ep->t2.value_or(last);

  for (long t = t1; t <= end; ++t) {
    if (at(t).ratio > r.peak_ratio) {
      r.peak_ratio = at(t).ratio;
      r.peak_t = t;
    }
  }
  r.peak_verdict = verdict(r.peak_ratio < 1.0);

  if (!r.degenerate) {
    if (ep->t2) {
      r.duration_verdict = verdict(*ep->t2 - t1 <= r.delta_T1);
    } else if (last - t1 > r.delta_T1) {
      r.duration_verdict = Verdict::Fail;
    } else {
      r.warnings.push_back("trajectory ends before the rising edge does");
    }
  }

  // phi: last t in [t1, t2] with alpha <= rho on all of [t1, t].
  if (at(t1).alpha <= at(t1).rho) {
    long phi = t1;
    while (phi + 1 <= end && at(phi + 1).alpha <= at(phi + 1).rho) ++phi;
    r.phi = phi;
    for (long t = phi + 1; t < end; ++t) {
      if (at(t).alpha < at(t).rho) {
        r.warnings.push_back("alpha falls back below rho at t = " + std::to_string(t));
        break;
      }
    }
  } else {
    r.warnings.push_back("alpha exceeds rho at t1; phi undefined and shape bounds not applicable");
  }

  if (r.phi && !r.degenerate) {
    const DirectionalStats& s1 = at(t1);
    const double c1 = 2.0 * s1.rho_perp * s1.alpha / (hatw_norm * hatw_norm);
    const double c2 = 2.0 * s1.rho_perp / hatw_norm;
    for (long t = t1; t <= end; ++t) {
      const bool first = t <= *r.phi;
      const double bound = first ? 1.0 - c1 * std::sqrt(static_cast<double>(t - t1))
                                 : 1.0 - c2 * std::sqrt(static_cast<double>(t - *r.phi));
      const double obs = at(t).ratio * at(t).ratio;
      ++r.checked_steps;
      if (obs > bound + kShapeBoundSlack) {
        r.shape_bound_violations.push_back(ShapeViolation{t, bound, obs, first ? 1 : 2});
      }
    }
    r.shape_verdict = verdict(r.shape_bound_violations.empty());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Existence of the falling edge

/// eta_hat (1 - ratio^2) compared with 2: above means the ratio grows at this
/// step, below means it shrinks. Written multiplicatively so ratio >= 1 needs
/// no special case.
inline double falling_edge_margin(double eff_lr, double ratio) {
  return eff_lr * (1.0 - ratio * ratio) - 2.0;
}

struct FallingEdgeCertificate {
  bool precondition_met = false;
  double eff_lr0 = 0.0;
  double ratio0 = 0.0;
  std::optional<long> crossing;
  long horizon = 0;
};

inline FallingEdgeCertificate falling_edge_monitor(const std::vector<TrajectoryRecord>& recs) {
  if (recs.empty()) raise(ErrorKind::Precondition, "empty trajectory");
  FallingEdgeCertificate c;
  c.horizon = static_cast<long>(recs.size());
  c.eff_lr0 = recs.front().stats.eff_lr;
  c.ratio0 = recs.front().stats.ratio;
  c.precondition_met = recs.front().stats.on_branch() && falling_edge_margin(c.eff_lr0, c.ratio0) > 0.0;
  if (!c.precondition_met) return c;
  for (std::size_t t = 1; t < recs.size(); ++t) {
    const auto& s = recs[t].stats;
    if (s.on_branch() && falling_edge_margin(s.eff_lr, s.ratio) < 0.0) {
      c.crossing = static_cast<long>(t);
      break;
    }
  }
  return c;
}

}  // namespace bnspike
