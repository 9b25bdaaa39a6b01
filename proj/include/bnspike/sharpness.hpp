#pragma once

#include <cmath>
#include <functional>

#include "bnspike/model.hpp"

namespace bnspike {

struct SharpnessOptions {
  double rel_tol = 1e-4;
  int max_iters = 500;
  double fd_step = 1e-5;  // relative to max(1, ||x||)
};

struct SharpnessResult {
  double value = 0.0;
  int iterations = 0;
  bool approximate = false;  // iteration cap reached before the tolerance
};

using GradientFn = std::function<Vec(const Vec&)>;

/// Hessian-vector product by central differences of the gradient.
inline Vec fd_hessian_vector(const GradientFn& grad, const Vec& x, const Vec& v, double h) {
  return (grad(x + h * v) - grad(x - h * v)) / (2.0 * h);
}

namespace detail {

struct PowerOutcome {
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Power iteration on v -> H v + shift v, returning the Rayleigh quotient of H.
inline PowerOutcome power_iteration(const std::function<Vec(const Vec&)>& hv, Eigen::Index dim,
                                    double shift, const SharpnessOptions& opt) {
  Vec v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = 1.0 + 0.1 * std::sin(1.0 + static_cast<double>(i));
  v.normalize();
  PowerOutcome out;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int k = 1; k <= opt.max_iters; ++k) {
    Vec hvk = hv(v);
    const double lambda = v.dot(hvk);
    Vec next = hvk + shift * v;
    const double nrm = next.norm();
    out.lambda = lambda;
    out.iterations = k;
    const double residual = (hvk - lambda * v).norm();
    const double scale = std::max(std::abs(lambda), 1e-300);
    if (residual <= opt.rel_tol * scale ||
        (k > 2 && std::abs(lambda - prev) <= 0.01 * opt.rel_tol * scale)) {
      out.converged = true;
      return out;
    }
    if (!(nrm > 0.0)) {  // H v = -shift v exactly: v is an eigenvector
      out.converged = true;
      return out;
    }
    v = next / nrm;
    prev = lambda;
  }
  return out;
}

}  // namespace detail

/// Largest algebraic eigenvalue of the Hessian of a function given its
/// gradient. A first power pass finds the dominant magnitude; if that
/// eigenvalue is negative, a shifted pass recovers the top of the spectrum.
inline SharpnessResult top_hessian_eigenvalue(const GradientFn& grad, const Vec& x,
                                              const SharpnessOptions& opt = {}) {
  const double h = opt.fd_step * std::max(1.0, x.norm());
  auto hv = [&](const Vec& v) { return fd_hessian_vector(grad, x, v, h); };
  detail::PowerOutcome first = detail::power_iteration(hv, x.size(), 0.0, opt);
  SharpnessResult r{first.lambda, first.iterations, !first.converged};
  if (first.lambda < 0.0) {
    const double shift = std::abs(first.lambda);
    detail::PowerOutcome second = detail::power_iteration(hv, x.size(), shift, opt);
    r.value = second.lambda;
    r.iterations += second.iterations;
    r.approximate = !second.converged;
  }
  return r;
}

/// Packs (w, alpha) into one parameter vector, alpha last.
inline Vec pack_state(const ModelState& s) {
  Vec x(s.w.size() + 1);
  x.head(s.w.size()) = s.w;
  x[s.w.size()] = s.alpha;
  return x;
}

inline ModelState unpack_state(const Vec& x) {
  return ModelState{x.head(x.size() - 1), x[x.size() - 1]};
}

/// Sharpness of the empirical risk in the joint parameter (w, alpha).
inline SharpnessResult sharpness(const ModelState& state, const Dataset& ds, LossKind loss,
                                 const SharpnessOptions& opt = {}) {
  GradientFn grad = [&](const Vec& x) {
    Gradient g = gradient(unpack_state(x), ds, loss);
    Vec out(x.size());
    out.head(x.size() - 1) = g.w;
    out[x.size() - 1] = g.alpha;
    return out;
  };
  return top_hessian_eigenvalue(grad, pack_state(state), opt);
}

}  // namespace bnspike
