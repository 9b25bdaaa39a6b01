#pragma once

#include <cmath>
#include <random>

#include "bnspike/dataset.hpp"
#include "bnspike/model.hpp"
#include "bnspike/reference.hpp"

namespace bnspike {

/// Unit vector in span(X) orthogonal to `u`, drawn from a seeded Gaussian.
inline Vec random_span_orthogonal(const Dataset& ds, const Vec& u, std::mt19937_64& rng) {
  SpectrumBounds sb = spectrum_bounds(ds);
  const Mat& U = sb.span_basis;
  if (U.cols() < 2) {
    raise(ErrorKind::Precondition, "span(X) has dimension < 2; no direction orthogonal to w_hat");
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int attempt = 0; attempt < 16; ++attempt) {
    Vec coeffs(U.cols());
    for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs[i] = gauss(rng);
    Vec p = U * coeffs;
    p -= u * u.dot(p);
    const double nrm = p.norm();
    if (nrm > 1e-8) return p / nrm;
  }
  raise(ErrorKind::GenerationFailure, "could not draw a direction orthogonal to w_hat");
}

/// Initial state at a prescribed angle to w_hat: w = w_norm * (u + ratio p) / sqrt(1 + ratio^2)
/// with u = w_hat / ||w_hat||, so rho_perp / rho equals `ratio` and ||w|| equals `w_norm`.
/// alpha is set to k * rho.
inline ModelState aligned_mix_init(const Dataset& ds, const ReferenceDirection& ref, double ratio,
                                   double w_norm, double k, std::mt19937_64& rng) {
  if (!(ratio >= 0.0)) raise(ErrorKind::Config, "init.ratio must be nonnegative");
  if (!(w_norm > 0.0)) raise(ErrorKind::Config, "init.w_norm must be positive");
  const double hat = ref.norm();
  Vec u = ref.w_hat / hat;
  Vec p = random_span_orthogonal(ds, u, rng);
  const double scale = w_norm / std::sqrt(1.0 + ratio * ratio);
  ModelState s;
  s.w = scale * (u + ratio * p);
  const double rho = hat / std::sqrt(1.0 + ratio * ratio);
  s.alpha = k * rho;
  return s;
}

/// Gaussian draw projected onto span(X), rescaled to `w_norm`.
inline ModelState gaussian_init(const Dataset& ds, double w_norm, double alpha0, std::mt19937_64& rng) {
  if (!(w_norm > 0.0)) raise(ErrorKind::Config, "init.w_norm must be positive");
  SpectrumBounds sb = spectrum_bounds(ds);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec coeffs(sb.span_basis.cols());
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs[i] = gauss(rng);
  Vec w = sb.span_basis * coeffs;
  return ModelState{w * (w_norm / w.norm()), alpha0};
}

}  // namespace bnspike
