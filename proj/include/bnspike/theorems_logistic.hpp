#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bnspike/dynamics.hpp"
#include "bnspike/svm.hpp"
#include "bnspike/theorems_linear.hpp"
#include "bnspike/verdict.hpp"

namespace bnspike {

/// Everything the logistic constants depend on.
struct LogisticInputs {
  double alpha0 = 0.0;
  double gamma = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double w0_norm = 0.0;
  double rho0_perp_sigma = 0.0;
  double eta = 0.0;
  double eta_alpha = 0.0;
};

struct LogisticConstants {
  LogisticInputs in;
  double kappa = 0.0;  // lambda_max / lambda_min
  double C0 = 0.0;
  double C = 0.0;            // chained form used downstream
  double C_statement = 0.0;  // the form printed in the lemma statement, logged only
  double C1 = 0.0;
  double C2 = 0.0;
  double C3 = 0.0;
  double C_tilde = 0.0;
  double C4 = 0.0;
  double C5 = 0.0;
  double C6 = 0.0;
  double Phi = 0.0;
  double tan_min_sq = 0.0;
  double T0_real = 0.0;
  long T0 = 0;
  double theta_down = 0.0;
  double theta_up = 0.0;
  double C_low = 0.0;
  double C_high = 0.0;
  double C_alpha = 0.0;
  std::optional<double> margin_offset_b;
};

/// Appendix constant package. Pure function of the inputs.
inline LogisticConstants logistic_constants(const LogisticInputs& in) {
  if (!(in.lambda_min > 0.0) || !(in.lambda_max >= in.lambda_min)) {
    raise(ErrorKind::Precondition, "need 0 < lambda_min <= lambda_max");
  }
  if (!(in.alpha0 > 0.0) || !(in.gamma > 0.0) || !(in.w0_norm > 0.0) || !(in.eta > 0.0)) {
    raise(ErrorKind::Precondition, "alpha0, gamma, ||w0|| and eta must be positive");
  }
  if (!(in.rho0_perp_sigma > 0.0)) {
    raise(ErrorKind::Precondition, "rho0_perp_sigma must be positive (w0 not aligned with w_hat)");
  }
  LogisticConstants c;
  c.in = in;
  const double k = in.lambda_max / in.lambda_min;
  const double a0 = in.alpha0;
  const double scale = in.eta * in.gamma / (in.w0_norm * in.w0_norm);  // eta gamma / ||w0||^2
  c.kappa = k;
  c.C0 = std::sqrt(k) + 2.0 * std::sqrt(2.0) * k;
  c.C = 32.0 * k / a0;
  c.C_statement = 32.0 * std::sqrt(k) * std::exp(1.5 * a0) / a0;
  c.C1 = 2.0 * c.C * (1.0 + 36.0 * k * k * std::exp(2.0 * a0) / (in.rho0_perp_sigma * in.rho0_perp_sigma));
  c.C2 = 2.0 * c.C * a0 * a0 * std::pow(k, 1.5);
  c.C3 = a0 / (2.0 * c.C2);
  c.tan_min_sq = in.gamma * in.gamma * in.lambda_min / (8.0 * in.lambda_max * in.lambda_max);
  c.T0_real = c.C2 * (1.0 + 1.0 / c.tan_min_sq) * scale;
  c.T0 = c.T0_real < 9.0e18 ? static_cast<long>(std::ceil(c.T0_real)) : std::numeric_limits<long>::max();
  c.Phi = 6.0 * k * k * a0 * scale;
  // 4 / (sqrt(Phi^2 + 4) - Phi)^2 rewritten without cancellation.
  const double root = 0.5 * (std::sqrt(c.Phi * c.Phi + 4.0) + c.Phi);
  c.theta_down = root * root - 1.0;
  c.C_tilde = 3.0 / 256.0 * a0 / k;
  c.C4 = 2.0 / c.C_tilde;
  c.C5 = std::sqrt((c.C_tilde / 2.0) / (36.0 * c.C2 * a0 * a0 * k * k * k));
  const double c6_root = 6.0 * std::pow(k, 2.5) * a0 * std::exp(1.5 * a0) * std::pow(1.5 * a0 + 1.0, 2);
  c.C6 = c6_root * c6_root;
  c.theta_up = c.C6 * in.eta * in.eta / std::pow(in.w0_norm, 4) / (in.gamma * in.gamma) - 1.0;
  c.C_low = std::max(16.0 * k * k * c.C1, c.C4);
  c.C_high = c.C5;
  c.C_alpha = c.C3 / (16.0 * k * k);
  return c;
}

inline nlohmann::json to_json(const LogisticConstants& c) {
  nlohmann::json j;
  j["inputs"] = {{"alpha0", c.in.alpha0},         {"gamma", c.in.gamma},
                 {"lambda_min", c.in.lambda_min}, {"lambda_max", c.in.lambda_max},
                 {"w0_norm", c.in.w0_norm},       {"rho0_perp_sigma", c.in.rho0_perp_sigma},
                 {"eta", c.in.eta},               {"eta_alpha", c.in.eta_alpha}};
  j["kappa"] = c.kappa;
  j["C0"] = c.C0;
  j["C"] = c.C;
  j["C_statement"] = c.C_statement;
  j["C1"] = c.C1;
  j["C2"] = c.C2;
  j["C3"] = c.C3;
  j["C_tilde"] = c.C_tilde;
  j["C4"] = c.C4;
  j["C5"] = c.C5;
  j["C6"] = c.C6;
  j["Phi"] = c.Phi;
  j["tan_min_sq"] = c.tan_min_sq;
  j["T0_real"] = c.T0_real;
  j["T0"] = c.T0;
  j["theta_down"] = c.theta_down;
  j["theta_up"] = c.theta_up;
  j["C_low"] = c.C_low;
  j["C_high"] = c.C_high;
  j["C_alpha"] = c.C_alpha;
  j["margin_offset_b"] = c.margin_offset_b ? nlohmann::json(*c.margin_offset_b) : nlohmann::json();
  return j;
}

inline LogisticInputs logistic_inputs_from_json(const nlohmann::json& j) {
  const auto& i = j.at("inputs");
  LogisticInputs in;
  in.alpha0 = i.at("alpha0").get<double>();
  in.gamma = i.at("gamma").get<double>();
  in.lambda_min = i.at("lambda_min").get<double>();
  in.lambda_max = i.at("lambda_max").get<double>();
  in.w0_norm = i.at("w0_norm").get<double>();
  in.rho0_perp_sigma = i.at("rho0_perp_sigma").get<double>();
  in.eta = i.at("eta").get<double>();
  in.eta_alpha = i.at("eta_alpha").get<double>();
  return in;
}

/// Builds the inputs from a dataset, a reference and an initial state.
inline LogisticInputs logistic_inputs(const Dataset& ds, const ReferenceDirection& ref,
                                      const ModelState& init, const GDConfig& cfg) {
  SpectrumBounds sb = spectrum_bounds(ds);
  DirectionalStats s0 = directional_stats(init, ds, ref, cfg);
  LogisticInputs in;
  in.alpha0 = init.alpha;
  in.gamma = ref.gamma;
  in.lambda_min = sb.lambda_min;
  in.lambda_max = sb.lambda_max;
  in.w0_norm = s0.w_norm;
  in.rho0_perp_sigma = s0.rho_perp_sigma;
  in.eta = cfg.eta;
  in.eta_alpha = cfg.eta_alpha;
  return in;
}

// ---------------------------------------------------------------------------
// Risk bounds

struct RiskBounds {
  std::optional<double> upper;
  std::optional<double> lower;
  std::string upper_note;
  std::string lower_note;
};

/// Upper bound from directional alignment and, when the margin offset is
/// known, the lower bound. The lower bound's argument is only valid when
/// rho gamma^2 - rho_perp b gamma is nonnegative; otherwise it is omitted.
inline RiskBounds logistic_risk_bounds(const DirectionalStats& s, const LogisticConstants& c,
                                       std::optional<double> b, Eigen::Index n) {
  RiskBounds out;
  const double g = c.in.gamma;
  if (s.rho > 0.0 && s.alpha > 0.0) {
    const double pert = c.C0 * g * s.rho_perp;
    out.upper = loss::logistic(s.alpha) +
                s.alpha * std::abs(loss::logistic_deriv((1.0 - pert) * s.alpha)) * pert;
  } else {
    out.upper_note = "needs rho > 0 and alpha > 0";
  }
  if (!b) {
    out.lower_note = "margin offset unavailable";
  } else if (!(s.alpha > 0.0)) {
    out.lower_note = "needs alpha > 0";
  } else {
    const double inner = s.rho * g * g - s.rho_perp * *b * g;
    if (inner < 0.0) {
      out.lower_note = "negative worst-case margin; bound argument invalid";
    } else {
      out.lower = loss::logistic(s.alpha / std::sqrt(c.in.lambda_min) * inner) / static_cast<double>(n);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometry and gradient bound ledger

struct BoundCheck {
  std::string name;
  double lhs = 0.0;  // the side that must be smaller
  double rhs = 0.0;
  Tri status = Tri::NotApplicable;
  double slack() const { return rhs - lhs; }
};

inline constexpr double kBoundSlack = 1e-9;

struct BoundLedger {
  std::vector<BoundCheck> checks;

  void add(std::string name, double lhs, double rhs, bool applicable) {
    BoundCheck b{std::move(name), lhs, rhs, Tri::NotApplicable};
    if (applicable) {
      const double tol = kBoundSlack * std::max({1.0, std::abs(lhs), std::abs(rhs)});
      b.status = tri(lhs <= rhs + tol);
    }
    checks.push_back(std::move(b));
  }
  std::size_t violations() const {
    return static_cast<std::size_t>(std::count_if(
        checks.begin(), checks.end(), [](const BoundCheck& b) { return b.status == Tri::DoesNotHold; }));
  }
};

/// Evaluates the logit, inner-product and gradient-norm bounds at one state.
inline BoundLedger lemma6_8_bounds(const ModelState& state, const Dataset& ds,
                                   const ReferenceDirection& ref, const SpectrumBounds& sb) {
  GDConfig cfg;
  cfg.loss = LossKind::Logistic;
  const DirectionalStats s = directional_stats(state, ds, ref, cfg);
  const Gradient grad = gradient(state, ds, LossKind::Logistic);
  const double g = ref.gamma;
  const double lmin = sb.lambda_min;
  const double lmax = sb.lambda_max;
  const double wn = s.w_norm;
  const double ws = s.w_sigma_norm;
  BoundLedger L;

  const bool pos = s.rho > 0.0;
  L.add("logit.sigma_norm", std::abs(ws - g * g * wn * s.rho),
        2.0 * std::sqrt(2.0) * lmax * g * wn * wn / ws * s.rho_perp, pos);
  Vec margins = ds.Xtilde().transpose() * state.w;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < margins.size(); ++i)
    worst = std::max(worst, std::abs(margins[i] - g * g * wn * s.rho));
  L.add("logit.sample_margin", worst, std::sqrt(lmax) * g * wn * s.rho_perp, pos);
  // The Cauchy-Schwarz step behind the line above bounds each deviation by
  // ||P_perp x~_i|| gamma ||w|| rho_perp. That factor is only controlled by
  // sqrt(n lambda_max) when Sigma carries the 1/n, so it is checked per sample.
  const Vec u_hat = ref.w_hat / ref.norm();
  double worst_scaled = 0.0;
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    const Vec xi = ds.Xtilde().col(i);
    const double perp = (xi - u_hat * u_hat.dot(xi)).norm();
    const double dev = std::abs(margins[i] - g * g * wn * s.rho);
    worst_scaled = std::max(worst_scaled, perp > 0.0 ? dev / perp : (dev > 0.0 ? HUGE_VAL : 0.0));
  }
  L.add("logit.sample_margin_perp", worst_scaled, g * wn * s.rho_perp, pos);

  const double a = state.alpha;
  const double inner = -ref.w_hat.dot(grad.w);
  L.add("inner.sign", 0.0, a * inner, true);
  const double ae = a * std::exp(-a) / ws;
  L.add("inner.lower", lmin / 8.0 * ae * s.rho_perp * s.rho_perp, inner, a > 0.0);

  const double gn = grad.w.norm();
  L.add("grad.lower_euclid", lmin / 4.0 * ae * s.rho_perp, std::sqrt(lmin) / 4.0 * ae * s.rho_perp_sigma,
        a > 0.0);
  L.add("grad.lower_sigma", std::sqrt(lmin) / 4.0 * ae * s.rho_perp_sigma, gn, a > 0.0);
  L.add("grad.upper", gn, a / ws * std::max(std::sqrt(lmax), lmax * (a + 1.0) * s.rho_perp), a > 0.0);
  return L;
}

// ---------------------------------------------------------------------------
// Divergence criterion and exit thresholds

struct ExitPredicates {
  Tri diverge_criterion = Tri::NotApplicable;
  bool theta_down_reached = false;  // ratio^2 below the clause-(1) threshold
  bool theta_up_exceeded = false;   // ratio^2 at or above the clause-(3) threshold
  double eq3_lhs = 0.0;
  double eq3_rhs = 0.0;
  double ratio_sq = 0.0;
};

inline ExitPredicates eq3_and_exit_thresholds(const DirectionalStats& s, const LogisticConstants& c,
                                              const GDConfig& cfg) {
  ExitPredicates p;
  if (!s.on_branch()) return p;
  p.ratio_sq = s.ratio * s.ratio;
  p.eq3_lhs = c.in.lambda_min / 4.0 * s.alpha * std::exp(-s.alpha) * cfg.eta * s.rho /
              (s.w_sigma_norm * s.w_norm);
  p.eq3_rhs = p.ratio_sq < 1.0 ? 2.0 / (1.0 - p.ratio_sq) : std::numeric_limits<double>::infinity();
  p.diverge_criterion = tri(std::isfinite(p.eq3_rhs) && p.eq3_lhs >= p.eq3_rhs);
  p.theta_down_reached = p.ratio_sq < c.theta_down;
  p.theta_up_exceeded = p.ratio_sq >= c.theta_up;
  return p;
}

// ---------------------------------------------------------------------------
// Finite-horizon campaign

enum class CampaignStatus { Rejected, Unsatisfiable, OutsideWindow, HorizonTooLong, Ran };

inline std::string_view to_string(CampaignStatus s) {
  switch (s) {
    case CampaignStatus::Rejected: return "rejected";
    case CampaignStatus::Unsatisfiable: return "unsatisfiable";
    case CampaignStatus::OutsideWindow: return "outside-window";
    case CampaignStatus::HorizonTooLong: return "horizon-too-long";
    case CampaignStatus::Ran: return "ran";
  }
  return "rejected";
}

struct CampaignOptions {
  long horizon_cap = 2'000'000;
  double edge_tol = 0.0;
};

struct Theorem4Report {
  CampaignStatus status = CampaignStatus::Rejected;
  std::string reason;
  std::optional<LogisticConstants> consts;
  double eta_over_w2 = 0.0;
  double eta_lower = 0.0;  // C_low gamma
  double eta_upper = 0.0;  // C_high / gamma
  double eta_alpha_upper = 0.0;
  bool window_satisfiable = false;

  Verdict clause1 = Verdict::NotApplicable;
  Verdict clause2 = Verdict::NotApplicable;
  Verdict clause3 = Verdict::NotApplicable;
  Verdict alpha_corridor = Verdict::NotApplicable;
  long clause1_checked = 0;
  long clause1_violations = 0;
  std::optional<long> t0_found;
  long clause3_events = 0;
  long clause3_violations = 0;
  double alpha_min = 0.0;
  double alpha_max = 0.0;

  /// Unsatisfiable, rejected or out-of-window campaigns are not failures.
  bool failed() const {
    return clause1 == Verdict::Fail || clause2 == Verdict::Fail || clause3 == Verdict::Fail ||
           alpha_corridor == Verdict::Fail;
  }
};

inline constexpr double kActiveMarginTol = 1e-8;

inline Theorem4Report theorem4_campaign(const Dataset& ds, const ReferenceDirection& ref,
                                        const ModelState& init, GDConfig cfg,
                                        const CampaignOptions& opt = {}) {
  Theorem4Report r;
  cfg.loss = LossKind::Logistic;
  cfg.mode = StepMode::Vector;
  SpectrumBounds sb = spectrum_bounds(ds);
  const auto rank = static_cast<Eigen::Index>(sb.eigenvalues.size());
  if (!(ds.n() < ds.d()) || rank != ds.n()) {
    r.reason = "requires n < d and rank(X) = n";
    return r;
  }
  Vec margins = ds.Xtilde().transpose() * ref.w_hat;
  if ((margins.array() - 1.0).abs().maxCoeff() > kActiveMarginTol) {
    r.reason = "data is not active-margin (some y_i <x_i, w_hat> != 1)";
    return r;
  }
  if (!(sb.lambda_max > 1.0)) {
    r.reason = "requires lambda_max > 1, got " + std::to_string(sb.lambda_max);
    return r;
  }
  if (!(init.alpha > 0.0 && init.alpha <= std::log(sb.lambda_max) / 3.0)) {
    r.reason = "requires 0 < alpha0 <= log(lambda_max)/3";
    return r;
  }
  LogisticConstants c = logistic_constants(logistic_inputs(ds, ref, init, cfg));
  r.consts = c;
  const double g = ref.gamma;
  const double w0 = c.in.w0_norm;
  r.eta_over_w2 = cfg.eta / (w0 * w0);
  r.eta_lower = c.C_low * g;
  r.eta_upper = c.C_high / g;
  r.eta_alpha_upper = c.C_alpha * w0 * w0 / (cfg.eta * g);
  r.window_satisfiable = r.eta_lower <= r.eta_upper;
  if (!r.window_satisfiable) {
    r.status = CampaignStatus::Unsatisfiable;
    r.reason = "C_low*gamma = " + std::to_string(r.eta_lower) + " exceeds C_high/gamma = " +
               std::to_string(r.eta_upper) + " (binding: " +
               (16.0 * c.kappa * c.kappa * c.C1 >= c.C4 ? "C1 term" : "C4") + " vs C5)";
    return r;
  }
  if (r.eta_over_w2 < r.eta_lower || r.eta_over_w2 > r.eta_upper || cfg.eta_alpha > r.eta_alpha_upper) {
    r.status = CampaignStatus::OutsideWindow;
    r.reason = "window is satisfiable but (eta, eta_alpha) lies outside it";
    return r;
  }
  if (c.T0 > opt.horizon_cap) {
    r.status = CampaignStatus::HorizonTooLong;
    r.reason = "T0 = " + std::to_string(c.T0_real) + " exceeds the horizon cap";
    return r;
  }

  r.status = CampaignStatus::Ran;
  cfg.max_iters = std::max<long>(c.T0 + 1, 2);
  cfg.edge_tol = opt.edge_tol;
  Trajectory traj = run_trajectory(init, ds, ref, cfg);
  const auto& recs = traj.records;
  const auto& labels = traj.edges.labels;

  r.alpha_min = r.alpha_max = init.alpha;
  for (long t = 0; t < c.T0; ++t) {
    const auto& s = recs[static_cast<std::size_t>(t)].stats;
    r.alpha_min = std::min(r.alpha_min, s.alpha);
    r.alpha_max = std::max(r.alpha_max, s.alpha);
    if (!r.t0_found && s.on_branch() && s.ratio * s.ratio <= c.tan_min_sq) r.t0_found = t;
    if (s.on_branch() && s.ratio * s.ratio >= c.theta_down) {
      ++r.clause1_checked;
      if (recs[static_cast<std::size_t>(t + 1)].stats.rho_perp > s.rho_perp + 1e-12) ++r.clause1_violations;
    }
  }
  r.alpha_corridor = verdict(r.alpha_min >= 0.5 * init.alpha && r.alpha_max <= 1.5 * init.alpha);
  r.clause1 = r.clause1_checked == 0 ? Verdict::NotApplicable : verdict(r.clause1_violations == 0);
  r.clause2 = verdict(r.t0_found.has_value());
  if (r.t0_found) {
    for (long t = *r.t0_found + 1; t + 1 < static_cast<long>(recs.size()); ++t) {
      const auto& s = recs[static_cast<std::size_t>(t)].stats;
      if (labels[static_cast<std::size_t>(t - 1)] != Edge::Rising || !s.on_branch()) continue;
      if (s.ratio * s.ratio < c.theta_up) continue;
      ++r.clause3_events;
      if (labels[static_cast<std::size_t>(t)] == Edge::Rising) ++r.clause3_violations;
    }
    if (r.clause3_events > 0) r.clause3 = verdict(r.clause3_violations == 0);
  }
  return r;
}

}  // namespace bnspike
