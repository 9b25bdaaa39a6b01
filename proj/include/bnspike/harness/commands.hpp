#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "bnspike/dataset_io.hpp"
#include "bnspike/dynamics.hpp"
#include "bnspike/harness/config.hpp"
#include "bnspike/harness/scoreboard.hpp"
#include "bnspike/harness/spike.hpp"
#include "bnspike/harness/svg.hpp"
#include "bnspike/init.hpp"
#include "bnspike/reference.hpp"
#include "bnspike/sharpness.hpp"
#include "bnspike/svm.hpp"
#include "bnspike/theorems_linear.hpp"
#include "bnspike/theorems_logistic.hpp"
#include "bnspike/trajectory_io.hpp"

namespace bnspike::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Building a run from its config

struct Prepared {
  Dataset ds;
  ReferenceDirection ref;
  ModelState init;
};

/// The whitening flag applies to Hilbert and file data. Active-margin data is
/// used as generated, since whitening would move samples off the margin.
inline Dataset build_dataset(const RunConfig& c) {
  const auto& s = c.dataset;
  Dataset ds;
  switch (s.source) {
    case DatasetSource::Hilbert: {
      HilbertConfig h;
      h.n = s.n;
      h.d = s.d;
      h.seed = c.dataset_seed();
      h.noise_std = s.noise_std;
      h.rotate = s.rotate;
      h.row_offset = s.row_offset;
      h.col_offset = s.col_offset;
      ds = gen_hilbert_dataset(h);
      break;
    }
    case DatasetSource::ActiveMargin: {
      ActiveMarginConfig a;
      a.n = s.n;
      a.d = s.d;
      a.gamma = s.gamma;
      a.seed = c.dataset_seed();
      a.spread = s.spread;
      return gen_active_margin_dataset(a);
    }
    case DatasetSource::File:
      ds = load_dataset(s.path);
      break;
  }
  return s.whiten ? whiten(ds) : ds;
}

/// `auto` pairs the square loss with the least-squares direction and the
/// logistic loss with the max-margin direction.
inline ReferenceDirection build_reference(const Dataset& ds, const RunConfig& c) {
  ReferenceChoice r = c.reference;
  if (r == ReferenceChoice::Auto) {
    r = c.gd.loss == LossKind::Square ? ReferenceChoice::LeastSquares : ReferenceChoice::SVM;
  }
  return r == ReferenceChoice::LeastSquares ? least_squares_reference(ds) : solve_svm(ds);
}

inline ModelState build_init(const Dataset& ds, const ReferenceDirection& ref, const RunConfig& c) {
  std::mt19937_64 rng(c.init_seed());
  if (c.init.rule == InitRule::AlignedMix) {
    return aligned_mix_init(ds, ref, c.init.ratio, c.init.w_norm, c.init.k, rng);
  }
  return gaussian_init(ds, c.init.w_norm, c.init.alpha0, rng);
}

inline Prepared prepare(const RunConfig& c) {
  Prepared p;
  p.ds = build_dataset(c);
  p.ref = build_reference(p.ds, c);
  p.init = build_init(p.ds, p.ref, c);
  return p;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Everything that identifies a run's numbers. Output locations are left out
/// so the same run written to two directories yields identical bytes.
inline nlohmann::json run_metadata(const RunConfig& c, const Prepared& p) {
  return {{"config", to_json(c)},
          {"dataset_hash", hex64(p.ds.content_hash())},
          {"n", p.ds.n()},
          {"d", p.ds.d()},
          {"reference", std::string(to_string(p.ref.kind))},
          {"hatw_norm", p.ref.norm()},
          {"trajectory_schema_version", kTrajectorySchemaVersion}};
}

// ---------------------------------------------------------------------------
// JSON views of the analysis reports

inline nlohmann::json opt_json(const std::optional<long>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline nlohmann::json to_json(const OnsetReport& r) {
  return {{"t0", r.t0},
          {"regime", std::string(to_string(r.condition))},
          {"reason", r.reason},
          {"eta_over_w2", bnspike::detail::num(r.eta_over_w2)},
          {"no_rise_threshold", bnspike::detail::num(r.no_rise_threshold)},
          {"onset_lower_threshold", bnspike::detail::num(r.onset_lower_threshold)},
          {"C_t0", bnspike::detail::num(r.C_t0)},
          {"C_scale_branch", bnspike::detail::num(r.C_scale_branch)},
          {"C_feedback_branch", bnspike::detail::num(r.C_feedback_branch)},
          {"k_t0", bnspike::detail::num(r.k_t0)},
          {"ratio_t0", bnspike::detail::num(r.ratio_t0)},
          {"log_argument", bnspike::detail::num(r.log_argument)},
          {"delta_T0", r.delta_T0},
          {"delta_T0_clamped", r.delta_T0_clamped},
          {"observed_t1", opt_json(r.observed_t1)},
          {"rising_steps_after_t0", r.rising_steps_after_t0},
          {"flat_ties", r.flat_ties},
          {"horizon", r.horizon},
          {"verdict", std::string(to_string(r.verdict))},
          {"warnings", r.warnings}};
}

inline nlohmann::json to_json(const StabilizationReport& r) {
  nlohmann::json v = nlohmann::json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(r.shape_bound_violations.size(), 20); ++i) {
    const auto& s = r.shape_bound_violations[i];
    v.push_back({{"t", s.t}, {"bound", s.bound}, {"observed", s.observed}, {"phase", s.phase}});
  }
  return {{"t1", r.t1},
          {"delta_T1", r.delta_T1},
          {"delta_T1_first", bnspike::detail::num(r.delta_T1_first)},
          {"delta_T1_second", bnspike::detail::num(r.delta_T1_second)},
          {"degenerate", r.degenerate},
          {"phi", opt_json(r.phi)},
          {"observed_t2", opt_json(r.observed_t2)},
          {"peak_ratio", r.peak_ratio},
          {"peak_t", r.peak_t},
          {"checked_steps", r.checked_steps},
          {"shape_violations", r.shape_bound_violations.size()},
          {"first_violations", v},
          {"duration", std::string(to_string(r.duration_verdict))},
          {"shape", std::string(to_string(r.shape_verdict))},
          {"peak", std::string(to_string(r.peak_verdict))},
          {"warnings", r.warnings}};
}

// ---------------------------------------------------------------------------
// Simulation

struct Lemma5Tally {
  long converge_steps = 0;
  long converge_violations = 0;
  long diverge_steps = 0;
  long diverge_violations = 0;
  double worst_converge_increase = 0.0;
  double worst_diverge_decrease = 0.0;
};

inline constexpr double kLemma5Tol = 1e-10;

struct LogisticTally {
  bool applicable = false;
  std::string reason;
  std::optional<double> margin_offset_b;
  long steps = 0;
  long upper_checked = 0;
  long upper_violations = 0;
  long lower_checked = 0;
  long lower_violations = 0;
  long lower_omitted = 0;
  double worst_upper_slack = std::numeric_limits<double>::infinity();
  double worst_lower_slack = std::numeric_limits<double>::infinity();
  std::map<std::string, std::pair<long, long>> ledger;  // name -> (checked, violations)
};

struct Evaluation {
  Prepared prep;
  Trajectory traj;
  SpikeSummary spike;
  SharpnessSeries sharpness;
  std::optional<Lemma5Tally> lemma5;
  std::optional<LogisticTally> logistic;
};

inline bool active_margin(const Dataset& ds, const ReferenceDirection& ref) {
  if (ref.kind != ReferenceKind::SVM) return false;
  Vec m = ds.Xtilde().transpose() * ref.w_hat;
  return (m.array() - 1.0).abs().maxCoeff() <= kActiveMarginTol;
}

/// Runs the trajectory once, evaluating the per-state checks on the way.
/// With `checks` false only the sharpness observer (if enabled) is attached.
inline Evaluation evaluate(const RunConfig& c, bool checks) {
  Evaluation ev;
  ev.prep = prepare(c);
  const Prepared& p = ev.prep;
  const bool vector_mode = c.gd.mode == StepMode::Vector;

  std::optional<LogisticConstants> consts;
  SpectrumBounds sb;
  if (checks && vector_mode && c.analysis.lemma5) ev.lemma5 = Lemma5Tally{};
  if (checks && vector_mode && c.analysis.logistic_bounds && c.gd.loss == LossKind::Logistic) {
    LogisticTally lt;
    if (!active_margin(p.ds, p.ref)) {
      lt.reason = "requires active-margin data with the max-margin reference";
    } else {
      lt.applicable = true;
      sb = spectrum_bounds(p.ds);
      consts = logistic_constants(logistic_inputs(p.ds, p.ref, p.init, c.gd));
      try {
        lt.margin_offset_b = margin_offset(p.ds, p.ref).b;
      } catch (const Error& e) {
        lt.reason = std::string("lower bound unavailable: ") + e.what();
      }
    }
    ev.logistic = lt;
  }

  // Lemma 5 compares rho_perp across consecutive states, so the observer
  // keeps the previous step's verdicts until the next state arrives.
  std::optional<Lemma5Report> pending;
  auto observer = [&](long t, const ModelState& state, const DirectionalStats& st) {
    if (ev.lemma5) {
      auto& L = *ev.lemma5;
      if (pending) {
        const double prev2 = pending->rho_perp * pending->rho_perp;
        const double next2 = st.rho_perp * st.rho_perp;
        if (pending->converge == Tri::Holds) {
          ++L.converge_steps;
          L.worst_converge_increase = std::max(L.worst_converge_increase, next2 - prev2);
          if (next2 > prev2 + kLemma5Tol) ++L.converge_violations;
        }
        if (pending->diverge == Tri::Holds) {
          ++L.diverge_steps;
          L.worst_diverge_decrease = std::max(L.worst_diverge_decrease, prev2 - next2);
          if (next2 < prev2 - kLemma5Tol) ++L.diverge_violations;
        }
      }
      const Gradient g = gradient(state, p.ds, c.gd.loss);
      pending = lemma5_conditions(state, g.w, p.ref, c.gd.eta);
    }
    if (ev.logistic && ev.logistic->applicable && st.on_branch()) {
      auto& lt = *ev.logistic;
      ++lt.steps;
      const RiskBounds rb = logistic_risk_bounds(st, *consts, lt.margin_offset_b, p.ds.n());
      if (rb.upper) {
        ++lt.upper_checked;
        const double slack = *rb.upper - st.risk;
        lt.worst_upper_slack = std::min(lt.worst_upper_slack, slack);
        if (slack < -kBoundSlack) ++lt.upper_violations;
      }
      if (rb.lower) {
        ++lt.lower_checked;
        const double slack = st.risk - *rb.lower;
        lt.worst_lower_slack = std::min(lt.worst_lower_slack, slack);
        if (slack < -kBoundSlack) ++lt.lower_violations;
      } else if (lt.margin_offset_b) {
        ++lt.lower_omitted;
      }
      for (const auto& b : lemma6_8_bounds(state, p.ds, p.ref, sb).checks) {
        auto& slot = lt.ledger[b.name];
        if (b.status != Tri::NotApplicable) ++slot.first;
        if (b.status == Tri::DoesNotHold) ++slot.second;
      }
    }
    if (c.analysis.sharpness && t % c.analysis.sharpness_every == 0) {
      ev.sharpness[t] = sharpness(state, p.ds, c.gd.loss).value;
    }
  };
  const bool need_observer = vector_mode && (ev.lemma5 || ev.logistic || c.analysis.sharpness);
  ev.traj = run_trajectory(p.init, p.ds, p.ref, c.gd, need_observer ? StepObserver(observer) : StepObserver{});
  ev.spike = spike_summary(ev.traj.records, ev.traj.edges);
  return ev;
}

// ---------------------------------------------------------------------------
// Scoring

/// Clauses that need only the logged records. Used for fresh runs and for
/// trajectory files read back from disk.
inline void score_records(Scoreboard& sb, const RunConfig& c, const Prepared& p, const Trajectory& traj) {
  const auto& recs = traj.records;
  const EdgeAnalysis& edges = traj.edges;
  if (recs.empty()) raise(ErrorKind::Precondition, "empty trajectory");

  // Stored labels must agree with a replay of the classifier on the ratios.
  long mismatches = 0;
  std::optional<long> first_mismatch;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].edge != edges.labels[i]) {
      ++mismatches;
      if (!first_mismatch) first_mismatch = static_cast<long>(i);
    }
  }
  sb.add("trajectory", "edge_labels", verdict(mismatches == 0),
         mismatches == 0 ? "labels match replay"
                         : std::to_string(mismatches) + " mismatched labels, first at t=" +
                               std::to_string(*first_mismatch));

  const bool square = c.gd.loss == LossKind::Square;
  const double hat = p.ref.norm();
  if (square && p.ref.kind == ReferenceKind::LeastSquares && is_whitened(p.ds)) {
    double worst = 0.0;
    for (const auto& r : recs) {
      const auto& s = r.stats;
      const double formula = (s.alpha - s.rho) * (s.alpha - s.rho) + s.rho_perp * s.rho_perp + 1.0 - hat * hat;
      worst = std::max(worst, std::abs(2.0 * s.risk - formula));
    }
    sb.add("lemma1", "identity", verdict(worst < 1e-10), "max deviation " + format_double(worst));
    sb.reports["lemma1"] = {{"max_deviation", worst}, {"steps", recs.size()}};
  } else {
    sb.add("lemma1", "identity", Verdict::NotApplicable, "needs the square loss on whitened data");
  }

  if (!square) {
    for (const char* name : {"onset", "duration", "shape", "peak"})
      sb.add(std::string(name) == "onset" ? "theorem1" : "theorem2", name, Verdict::NotApplicable,
             "square loss only");
    sb.add("falling_edge", "crossing", Verdict::NotApplicable, "square loss only");
    return;
  }

  const long t0 = c.analysis.t0;
  if (c.analysis.onset && t0 < static_cast<long>(recs.size())) {
    OnsetReport onset = onset_analysis(recs[static_cast<std::size_t>(t0)].stats, t0, hat, c.gd);
    verify_onset(onset, traj);
    std::string detail = std::string("regime ") + std::string(to_string(onset.condition));
    if (!onset.reason.empty()) detail += " (" + onset.reason + ")";
    sb.add("theorem1", "onset", onset.verdict, detail);
    sb.reports["onset"] = to_json(onset);

    if (c.analysis.stabilization) {
      const RiseEpisode* ep = nullptr;
      for (const auto& e : edges.episodes)
        if (e.begin >= t0) {
          ep = &e;
          break;
        }
      if (ep == nullptr) {
        for (const char* name : {"duration", "shape", "peak"})
          sb.add("theorem2", name, Verdict::NotApplicable, "no rising episode after t0");
      } else {
        StabilizationReport st = stabilization_analysis(recs, edges, ep->begin, hat);
        sb.reports["stabilization"] = to_json(st);
        // The stabilization claims are conditional on the delayed-onset
        // window; outside it the outcome is logged but does not gate.
        const bool in_window = onset.condition == EtaRegime::DelayedOnset;
        auto gate = [&](const char* name, Verdict v) {
          if (in_window) {
            sb.add("theorem2", name, v);
          } else {
            sb.add("theorem2", name, Verdict::NotApplicable,
                   "outside the delayed-onset window; observed " + std::string(to_string(v)));
          }
        };
        gate("duration", st.duration_verdict);
        gate("shape", st.shape_verdict);
        gate("peak", st.peak_verdict);
      }
    }
  }

  if (c.analysis.falling_edge) {
    FallingEdgeCertificate fe = falling_edge_monitor(recs);
    sb.reports["falling_edge"] = {{"precondition_met", fe.precondition_met},
                                  {"eff_lr0", fe.eff_lr0},
                                  {"ratio0", bnspike::detail::num(fe.ratio0)},
                                  {"crossing", opt_json(fe.crossing)},
                                  {"horizon", fe.horizon}};
    if (!fe.precondition_met) {
      sb.add("falling_edge", "crossing", Verdict::NotApplicable, "starts below the threshold");
    } else if (fe.crossing) {
      sb.add("falling_edge", "crossing", Verdict::Pass, "threshold crossed at t=" + std::to_string(*fe.crossing));
    } else {
      sb.add("falling_edge", "crossing", Verdict::NotApplicable,
             "no crossing within " + std::to_string(fe.horizon) + " records; the claim has no time bound");
    }
  }
}

/// Clauses that need every state, available only from an in-process run.
inline void score_states(Scoreboard& sb, const Evaluation& ev) {
  if (ev.lemma5) {
    const auto& L = *ev.lemma5;
    sb.add("lemma5", "convergence", L.converge_steps ? verdict(L.converge_violations == 0) : Verdict::NotApplicable,
           std::to_string(L.converge_steps) + " steps, " + std::to_string(L.converge_violations) + " violations");
    sb.add("lemma5", "divergence", L.diverge_steps ? verdict(L.diverge_violations == 0) : Verdict::NotApplicable,
           std::to_string(L.diverge_steps) + " steps, " + std::to_string(L.diverge_violations) + " violations");
    sb.reports["lemma5"] = {{"converge_steps", L.converge_steps},
                            {"converge_violations", L.converge_violations},
                            {"diverge_steps", L.diverge_steps},
                            {"diverge_violations", L.diverge_violations},
                            {"worst_converge_increase", L.worst_converge_increase},
                            {"worst_diverge_decrease", L.worst_diverge_decrease}};
  }
  if (ev.logistic) {
    const auto& lt = *ev.logistic;
    if (!lt.applicable) {
      for (const char* name : {"risk_upper", "risk_lower", "geometry_ledger"})
        sb.add("logistic", name, Verdict::NotApplicable, lt.reason);
      return;
    }
    sb.add("logistic", "risk_upper", lt.upper_checked ? verdict(lt.upper_violations == 0) : Verdict::NotApplicable,
           std::to_string(lt.upper_checked) + " steps, " + std::to_string(lt.upper_violations) + " violations");
    sb.add("logistic", "risk_lower", lt.lower_checked ? verdict(lt.lower_violations == 0) : Verdict::NotApplicable,
           lt.lower_checked ? std::to_string(lt.lower_checked) + " steps, " + std::to_string(lt.lower_violations) +
                                  " violations"
                            : (lt.reason.empty() ? "bound argument negative at every step" : lt.reason));
    long checked = 0, bad = 0;
    std::string offenders;
    nlohmann::json ledger = nlohmann::json::object();
    for (const auto& [name, cv] : lt.ledger) {
      checked += cv.first;
      bad += cv.second;
      ledger[name] = {{"checked", cv.first}, {"violations", cv.second}};
      if (cv.second > 0) offenders += (offenders.empty() ? " in " : ", ") + name;
    }
    sb.add("logistic", "geometry_ledger", checked ? verdict(bad == 0) : Verdict::NotApplicable,
           std::to_string(checked) + " checks, " + std::to_string(bad) + " violations" + offenders);
    sb.reports["logistic"] = {{"steps", lt.steps},
                              {"margin_offset_b", lt.margin_offset_b ? nlohmann::json(*lt.margin_offset_b)
                                                                     : nlohmann::json()},
                              {"upper_checked", lt.upper_checked},
                              {"upper_violations", lt.upper_violations},
                              {"worst_upper_slack", bnspike::detail::num(lt.worst_upper_slack)},
                              {"lower_checked", lt.lower_checked},
                              {"lower_violations", lt.lower_violations},
                              {"lower_omitted", lt.lower_omitted},
                              {"worst_lower_slack", bnspike::detail::num(lt.worst_lower_slack)},
                              {"ledger", ledger}};
  }
}

inline void score_theorem4(Scoreboard& sb, const RunConfig& c, const Prepared& p) {
  Theorem4Report r = theorem4_campaign(p.ds, p.ref, p.init, c.gd, CampaignOptions{2'000'000, c.gd.edge_tol});
  const std::string status(to_string(r.status));
  nlohmann::json j = {{"status", status},
                      {"reason", r.reason},
                      {"window_satisfiable", r.window_satisfiable},
                      {"eta_over_w2", bnspike::detail::num(r.eta_over_w2)},
                      {"eta_lower", bnspike::detail::num(r.eta_lower)},
                      {"eta_upper", bnspike::detail::num(r.eta_upper)},
                      {"eta_alpha_upper", bnspike::detail::num(r.eta_alpha_upper)},
                      {"clause1_checked", r.clause1_checked},
                      {"clause1_violations", r.clause1_violations},
                      {"t0_found", opt_json(r.t0_found)},
                      {"clause3_events", r.clause3_events},
                      {"clause3_violations", r.clause3_violations},
                      {"alpha_min", r.alpha_min},
                      {"alpha_max", r.alpha_max}};
  if (r.consts) j["constants"] = to_json(*r.consts);
  sb.reports["theorem4"] = j;
  const std::string why = status + (r.reason.empty() ? "" : ": " + r.reason);
  sb.add("theorem4", "clause1", r.clause1, r.status == CampaignStatus::Ran ? std::string() : why);
  sb.add("theorem4", "clause2", r.clause2, r.status == CampaignStatus::Ran ? std::string() : why);
  sb.add("theorem4", "clause3", r.clause3, r.status == CampaignStatus::Ran ? std::string() : why);
  sb.add("theorem4", "alpha_corridor", r.alpha_corridor, r.status == CampaignStatus::Ran ? std::string() : why);
}

inline Scoreboard scoreboard_for(const RunConfig& c, const Evaluation& ev) {
  Scoreboard sb;
  score_records(sb, c, ev.prep, ev.traj);
  score_states(sb, ev);
  if (c.gd.loss == LossKind::Logistic && c.analysis.theorem4) score_theorem4(sb, c, ev.prep);
  sb.reports["spike"] = to_json(ev.spike);
  return sb;
}

// ---------------------------------------------------------------------------
// Artifacts

inline std::string artifact(const RunConfig& c, const std::string& suffix) {
  return (fs::path(c.output.dir) / (c.output.prefix + suffix)).string();
}

inline void write_text(const std::string& path, const std::string& text) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::Io, "cannot write " + path);
  out << text;
  if (!out) raise(ErrorKind::Io, "write failed for " + path);
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// Writes the trajectory in the configured format and returns its path.
inline std::string write_trajectory(const RunConfig& c, const Evaluation& ev) {
  if (c.output.format == OutputFormat::Csv) {
    std::ostringstream out;
    write_trajectory_csv(out, ev.traj.records);
    const std::string path = artifact(c, ".trajectory.csv");
    write_text(path, out.str());
    return path;
  }
  const std::string path = artifact(c, ".trajectory.json");
  write_text(path, dump(trajectory_to_json(ev.traj.records, run_metadata(c, ev.prep))));
  return path;
}

inline std::string sharpness_csv(const SharpnessSeries& s) {
  std::ostringstream out;
  out << "t,sharpness\n";
  for (const auto& [t, v] : s) out << t << ',' << format_double(v) << '\n';
  return out.str();
}

struct SimulateOutput {
  Evaluation ev;
  std::string trajectory_path;
  nlohmann::json summary;
};

inline SimulateOutput cmd_simulate(const RunConfig& c) {
  SimulateOutput o;
  o.ev = evaluate(c, false);
  o.trajectory_path = write_trajectory(c, o.ev);
  o.summary = {{"metadata", run_metadata(c, o.ev.prep)},
               {"spike", to_json(o.ev.spike)},
               {"records", o.ev.traj.records.size()},
               {"rising_steps", o.ev.traj.edges.rising_steps},
               {"falling_steps", o.ev.traj.edges.falling_steps},
               {"flat_steps", o.ev.traj.edges.flat_steps},
               {"episodes", o.ev.traj.edges.episodes.size()}};
  write_text(artifact(c, ".summary.json"), dump(o.summary));
  if (!o.ev.sharpness.empty()) write_text(artifact(c, ".sharpness.csv"), sharpness_csv(o.ev.sharpness));
  return o;
}

struct VerifyOutput {
  Scoreboard board;
  std::string scoreboard_path;
};

/// Scores a fresh run, or a trajectory file when one is given. A file only
/// supports the record-level clauses.
inline VerifyOutput cmd_verify(const RunConfig& c, const std::optional<std::string>& trajectory_file = {}) {
  VerifyOutput o;
  if (trajectory_file) {
    Prepared p = prepare(c);
    Trajectory traj;
    traj.records = load_trajectory(*trajectory_file);
    traj.edges = classify_edges(traj.records, c.gd.edge_tol);
    traj.cfg = c.gd;
    traj.hatw_norm = p.ref.norm();
    score_records(o.board, c, p, traj);
    o.board.reports["spike"] = to_json(spike_summary(traj.records, traj.edges));
  } else {
    Evaluation ev = evaluate(c, true);
    o.board = scoreboard_for(c, ev);
  }
  o.scoreboard_path = artifact(c, ".scoreboard.json");
  write_text(o.scoreboard_path, dump(to_json(o.board)));
  return o;
}

// ---------------------------------------------------------------------------
// Sweep

inline unsigned thread_cap(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BNSPIKE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) raise(ErrorKind::Config, "BNSPIKE_THREADS must be a positive integer");
    n = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

inline constexpr std::size_t kMaxSweepCells = 10'000;

struct SweepCell {
  std::size_t index = 0;
  RunConfig cfg;
  std::optional<Scoreboard> board;
  SpikeSummary spike;
  long rising_steps = 0;
  std::string error;
};

inline std::vector<SweepCell> sweep_cells(const RunConfig& base) {
  const auto& s = base.sweep;
  const std::vector<double> etas = s.eta.empty() ? std::vector<double>{base.gd.eta} : s.eta;
  const std::vector<double> eas = s.eta_alpha.empty() ? std::vector<double>{base.gd.eta_alpha} : s.eta_alpha;
  const std::vector<std::uint64_t> seeds = s.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : s.seeds;
  const std::size_t total = etas.size() * eas.size() * seeds.size();
  if (total > kMaxSweepCells) {
    raise(ErrorKind::Config, "sweep has " + std::to_string(total) + " cells; the limit is 10000");
  }
  std::vector<SweepCell> cells;
  for (double e : etas)
    for (double ea : eas)
      for (std::uint64_t sd : seeds) {
        if (!std::isfinite(e) || !std::isfinite(ea)) raise(ErrorKind::Config, "sweep values must be finite");
        SweepCell cell;
        cell.index = cells.size();
        cell.cfg = base;
        cell.cfg.gd.eta = e;
        cell.cfg.gd.eta_alpha = ea;
        cell.cfg.seed = sd;
        char dir[32];
        std::snprintf(dir, sizeof(dir), "cell_%05zu", cell.index);
        cell.cfg.output.dir = (fs::path(base.output.dir) / dir).string();
        cell.cfg.sweep = SweepSpec{};
        cells.push_back(std::move(cell));
      }
  return cells;
}

/// Each cell writes only under its own directory; the summary is reduced in
/// cell order after all workers finish, so thread count never shows in output.
inline nlohmann::json cmd_sweep(const RunConfig& base) {
  std::vector<SweepCell> cells = sweep_cells(base);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      SweepCell& cell = cells[i];
      try {
        cell.cfg.gd.validate();
        Evaluation ev = evaluate(cell.cfg, true);
        write_trajectory(cell.cfg, ev);
        cell.board = scoreboard_for(cell.cfg, ev);
        write_text(artifact(cell.cfg, ".scoreboard.json"), dump(to_json(*cell.board)));
        cell.spike = ev.spike;
        cell.rising_steps = ev.traj.edges.rising_steps;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  const unsigned nthreads = thread_cap(cells.size());
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < nthreads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::map<std::string, std::array<long, 3>> tally;  // pass, fail, n/a
  nlohmann::json rows = nlohmann::json::array();
  long errors = 0;
  for (const auto& cell : cells) {
    nlohmann::json row = {{"index", cell.index},
                          {"eta", cell.cfg.gd.eta},
                          {"eta_alpha", cell.cfg.gd.eta_alpha},
                          {"seed", cell.cfg.seed},
                          {"dir", fs::path(cell.cfg.output.dir).filename().string()}};
    if (!cell.error.empty()) {
      ++errors;
      row["error"] = cell.error;
    } else {
      row["rising_steps"] = cell.rising_steps;
      row["spike_ratio"] = cell.spike.spike_ratio;
      row["failed"] = cell.board->failed();
      for (const auto& cl : cell.board->clauses) {
        auto& t = tally[cl.group + "." + cl.name];
        ++t[cl.verdict == Verdict::Pass ? 0 : cl.verdict == Verdict::Fail ? 1 : 2];
      }
    }
    rows.push_back(std::move(row));
  }
  nlohmann::json clauses = nlohmann::json::object();
  for (const auto& [name, t] : tally) {
    const long applicable = t[0] + t[1];
    clauses[name] = {{"pass", t[0]},
                     {"fail", t[1]},
                     {"not_applicable", t[2]},
                     {"pass_rate", applicable ? nlohmann::json(double(t[0]) / double(applicable)) : nlohmann::json()}};
  }
  nlohmann::json summary = {{"cells", rows}, {"clauses", clauses}, {"errors", errors}, {"cell_count", cells.size()}};
  write_text((fs::path(base.output.dir) / (base.output.prefix + ".sweep.json")).string(), dump(summary));
  return summary;
}

// ---------------------------------------------------------------------------
// gen-data, constants, plot

inline std::string dataset_csv(const Dataset& ds) {
  std::ostringstream out;
  for (Eigen::Index j = 0; j < ds.d(); ++j) out << 'x' << j << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    for (Eigen::Index j = 0; j < ds.d(); ++j) out << format_double(ds.X()(j, i)) << ',';
    out << format_double(ds.y()[i]) << '\n';
  }
  return out.str();
}

inline std::string cmd_gen_data(const RunConfig& c) {
  Dataset ds = build_dataset(c);
  if (c.output.format == OutputFormat::Csv) {
    const std::string path = artifact(c, ".dataset.csv");
    write_text(path, dataset_csv(ds));
    return path;
  }
  const std::string path = artifact(c, ".dataset.json");
  fs::create_directories(fs::path(path).parent_path());
  save_dataset(ds, path);
  return path;
}

inline nlohmann::json cmd_constants(RunConfig c) {
  c.gd.loss = LossKind::Logistic;
  Prepared p = prepare(c);
  LogisticConstants k = logistic_constants(logistic_inputs(p.ds, p.ref, p.init, c.gd));
  std::string offset_note;
  try {
    k.margin_offset_b = margin_offset(p.ds, p.ref).b;
  } catch (const Error& e) {
    offset_note = e.what();
  }
  const double g = p.ref.gamma;
  const double w0 = k.in.w0_norm;
  nlohmann::json j = {{"metadata", run_metadata(c, p)},
                      {"constants", to_json(k)},
                      {"window",
                       {{"eta_over_w2", c.gd.eta / (w0 * w0)},
                        {"eta_lower", k.C_low * g},
                        {"eta_upper", k.C_high / g},
                        {"eta_alpha_upper", k.C_alpha * w0 * w0 / (c.gd.eta * g)},
                        {"satisfiable", k.C_low * g <= k.C_high / g}}},
                      {"active_margin", active_margin(p.ds, p.ref)}};
  if (!offset_note.empty()) j["margin_offset_note"] = offset_note;
  write_text(artifact(c, ".constants.json"), dump(j));
  return j;
}

/// One SVG and one plot-data CSV per trajectory file, named after its stem.
inline std::vector<std::string> cmd_plot(const std::vector<std::string>& files, const std::string& out_dir,
                                         const PlotOptions& opt) {
  std::vector<std::string> written;
  for (const auto& f : files) {
    const auto recs = load_trajectory(f);
    std::string stem = fs::path(f).filename().string();
    for (const char* ext : {".csv", ".json"}) {
      const std::string e(ext);
      if (stem.size() > e.size() && stem.compare(stem.size() - e.size(), e.size(), e) == 0) {
        stem.resize(stem.size() - e.size());
        break;
      }
    }
    const std::string svg = (fs::path(out_dir) / (stem + ".svg")).string();
    const std::string csv = (fs::path(out_dir) / (stem + ".plot.csv")).string();
    write_text(svg, plot_svg(recs, opt));
    std::ostringstream data;
    write_plot_data_csv(data, recs, opt);
    write_text(csv, data.str());
    written.push_back(svg);
    written.push_back(csv);
  }
  return written;
}

}  // namespace bnspike::harness
