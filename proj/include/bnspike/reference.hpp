#pragma once

#include <optional>
#include <string_view>

#include "bnspike/dataset.hpp"

namespace bnspike {

enum class ReferenceKind { LeastSquares, SVM };

inline std::string_view to_string(ReferenceKind kind) {
  return kind == ReferenceKind::LeastSquares ? "least_squares" : "svm";
}

/// Target direction w_hat the iterates are measured against, with margin
/// gamma = 1 / ||w_hat|| and the dual coefficients when they were computed.
struct ReferenceDirection {
  Vec w_hat;
  double gamma = 0.0;
  std::optional<Vec> dual_coeffs;
  ReferenceKind kind = ReferenceKind::LeastSquares;

  double norm() const { return w_hat.norm(); }
};

/// w_hat = Sigma^+ mu, the least-squares direction; equals mu on whitened data.
inline ReferenceDirection least_squares_reference(const Dataset& ds) {
  SpectrumBounds sb = spectrum_bounds(ds);
  const Mat& U = sb.span_basis;
  Vec coords = U.transpose() * ds.mu();
  Vec w_hat = U * coords.cwiseQuotient(sb.eigenvalues);
  const double nrm = w_hat.norm();
  if (!(nrm > 0.0)) raise(ErrorKind::DegenerateState, "least-squares direction is zero (mu = 0)");
  return ReferenceDirection{std::move(w_hat), 1.0 / nrm, std::nullopt, ReferenceKind::LeastSquares};
}

}  // namespace bnspike
