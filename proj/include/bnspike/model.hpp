#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "bnspike/dataset.hpp"

namespace bnspike {

enum class LossKind { Logistic, Square };

inline std::string_view to_string(LossKind loss) {
  return loss == LossKind::Logistic ? "logistic" : "square";
}

inline LossKind parse_loss(std::string_view s) {
  if (s == "logistic") return LossKind::Logistic;
  if (s == "square") return LossKind::Square;
  raise(ErrorKind::Config, "unknown loss '" + std::string(s) + "' (expected square or logistic)");
}

/// Parameters of the normalized linear model alpha * <x, w> / ||w||_Sigma.
struct ModelState {
  Vec w;
  double alpha = 1.0;
};

namespace loss {

/// log(1 + exp(-z)) without overflow for large |z|.
inline double logistic(double z) {
  return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

/// d/dz log(1 + exp(-z)) = -1 / (1 + exp(z)); only exp of a nonpositive argument is taken.
inline double logistic_deriv(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(z));
}

inline double square(double z) { return 0.5 * (1.0 - z) * (1.0 - z); }
inline double square_deriv(double z) { return z - 1.0; }

inline double value(LossKind kind, double z) {
  return kind == LossKind::Logistic ? logistic(z) : square(z);
}

inline double deriv(LossKind kind, double z) {
  return kind == LossKind::Logistic ? logistic_deriv(z) : square_deriv(z);
}

}  // namespace loss

inline constexpr double kDegenerateSigmaNorm = 1e-14;

namespace detail {

inline double checked_sigma_norm(const ModelState& state, const Dataset& ds) {
  check_dim(state.w, ds.d(), "w");
  const double s = sigma_norm(state.w, ds);
  if (!(s > kDegenerateSigmaNorm)) {
    raise(ErrorKind::DegenerateState,
          "||w||_Sigma = " + std::to_string(s) + " is at or below 1e-14");
  }
  return s;
}

}  // namespace detail

/// Signed logits y_i * logit(x_i) = alpha * Xtilde^T w / ||w||_Sigma.
inline Vec logits(const ModelState& state, const Dataset& ds) {
  const double s = detail::checked_sigma_norm(state, ds);
  return (state.alpha / s) * (ds.Xtilde().transpose() * state.w);
}

inline double risk(const ModelState& state, const Dataset& ds, LossKind kind) {
  Vec z = logits(state, ds);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) total += loss::value(kind, z[i]);
  return total / static_cast<double>(ds.n());
}

/// (1/n) * ||z - 1||^2: the mean squared residual, twice the square-loss risk.
/// The whitened decomposition (alpha - rho)^2 + rho_perp^2 + 1 - ||w_hat||^2
/// is an identity for this quantity.
inline double mean_squared_residual(const ModelState& state, const Dataset& ds) {
  Vec z = logits(state, ds);
  return (z.array() - 1.0).square().sum() / static_cast<double>(ds.n());
}

struct Gradient {
  Vec w;
  double alpha = 0.0;
};

/// Both partial derivatives from one pass over the logits.
inline Gradient gradient(const ModelState& state, const Dataset& ds, LossKind kind) {
  const double s = detail::checked_sigma_norm(state, ds);
  const double n = static_cast<double>(ds.n());
  Vec proj = ds.Xtilde().transpose() * state.w / s;  // Xtilde^T w / ||w||_Sigma
  Vec dl(proj.size());
  for (Eigen::Index i = 0; i < proj.size(); ++i) dl[i] = loss::deriv(kind, state.alpha * proj[i]);
  Vec g = ds.Xtilde() * dl;
  // (I - Sigma w w^T / ||w||_Sigma^2) g
  Vec sigma_w = ds.Sigma() * state.w;
  Gradient out;
  out.w = (state.alpha / (n * s)) * (g - sigma_w * (state.w.dot(g) / (s * s)));
  out.alpha = proj.dot(dl) / n;
  return out;
}

inline Vec grad_w(const ModelState& state, const Dataset& ds, LossKind kind) {
  return gradient(state, ds, kind).w;
}

inline double grad_alpha(const ModelState& state, const Dataset& ds, LossKind kind) {
  return gradient(state, ds, kind).alpha;
}

}  // namespace bnspike
