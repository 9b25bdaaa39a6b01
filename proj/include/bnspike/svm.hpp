#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bnspike/dataset.hpp"
#include "bnspike/reference.hpp"

namespace bnspike {

struct SvmOptions {
  long max_iters = 100000;
  double kkt_tol = 1e-8;
  double divergence_norm = 1e12;
};

struct SvmDiagnostics {
  long iterations = 0;
  double kkt_residual = 0.0;
  bool polished = false;
  std::size_t support_size = 0;
};

namespace detail {

/// Scaled KKT residual of min 0.5 b^T G b - 1^T b over b >= 0: the
/// projected-gradient step length, plus primal infeasibility of the margins.
inline double svm_kkt_residual(const Mat& G, const Vec& beta) {
  Vec grad = G * beta - Vec::Ones(beta.size());
  double res = 0.0;
  for (Eigen::Index i = 0; i < beta.size(); ++i) {
    res = std::max(res, std::abs(beta[i] - std::max(0.0, beta[i] - grad[i])));
    res = std::max(res, std::max(0.0, -grad[i]));  // margin below 1
  }
  return res;
}

/// Solve G_SS b_S = 1 on the current support and iterate the support until
/// every constraint is satisfied, or give up after a few rounds.
inline std::optional<Vec> svm_active_set_polish(const Mat& G, const Vec& beta, double tol) {
  const Eigen::Index n = beta.size();
  const double scale = std::max(1.0, beta.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < n; ++i)
    if (beta[i] > 1e-9 * scale) support.push_back(i);
  for (int round = 0; round < 2 * static_cast<int>(n) + 4; ++round) {
    if (support.empty()) return std::nullopt;
    const auto m = static_cast<Eigen::Index>(support.size());
    Mat Gs(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b) Gs(a, b) = G(support[a], support[b]);
    Vec bs = Gs.completeOrthogonalDecomposition().solve(Vec::Ones(m));
    Vec full = Vec::Zero(n);
    for (Eigen::Index a = 0; a < m; ++a) full[support[a]] = bs[a];

    auto neg = std::min_element(bs.data(), bs.data() + m);
    if (*neg < 0.0) {
      support.erase(support.begin() + (neg - bs.data()));
      continue;
    }
    Vec margins = G * full;
    Eigen::Index worst = -1;
    double worst_margin = 1.0 - tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (margins[i] < worst_margin && full[i] == 0.0) {
        worst_margin = margins[i];
        worst = i;
      }
    }
    if (worst < 0) return full;
    support.push_back(worst);
    std::sort(support.begin(), support.end());
  }
  return std::nullopt;
}

}  // namespace detail

/// Hard-margin SVM through its dual, min 0.5 ||Xtilde b||^2 - 1^T b over b >= 0,
/// by accelerated projected gradient with adaptive restart, finished by an
/// active-set solve on the detected support.
inline ReferenceDirection solve_svm(const Dataset& ds, const SvmOptions& opt = {},
                                    SvmDiagnostics* diag = nullptr) {
  const Eigen::Index n = ds.n();
  const Mat G = ds.Xtilde().transpose() * ds.Xtilde();
  Eigen::SelfAdjointEigenSolver<Mat> es(G, Eigen::EigenvaluesOnly);
  const double L = es.eigenvalues().maxCoeff();
  if (!(L > 0.0)) raise(ErrorKind::Separability, "all samples are zero");
  const double step = 1.0 / L;

  Vec beta = Vec::Zero(n);
  Vec yk = beta;
  double tk = 1.0;
  auto objective = [&](const Vec& b) { return 0.5 * b.dot(G * b) - b.sum(); };
  double prev_obj = objective(beta);
  long it = 0;
  double res = detail::svm_kkt_residual(G, beta);
  for (; it < opt.max_iters && res >= opt.kkt_tol; ++it) {
    Vec next = (yk - step * (G * yk - Vec::Ones(n))).cwiseMax(0.0);
    const double obj = objective(next);
    if (obj > prev_obj) {  // restart momentum
      tk = 1.0;
      yk = beta;
      continue;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    yk = next + ((tk - 1.0) / tn) * (next - beta);
    beta = std::move(next);
    tk = tn;
    prev_obj = obj;
    if (beta.norm() > opt.divergence_norm) {
      raise(ErrorKind::Separability, "dual iterates diverge (||beta|| > 1e12); data not separable");
    }
    if (it % 50 == 0) res = detail::svm_kkt_residual(G, beta);
  }
  res = detail::svm_kkt_residual(G, beta);

  bool polished = false;
  if (auto p = detail::svm_active_set_polish(G, beta, opt.kkt_tol)) {
    const double pres = detail::svm_kkt_residual(G, *p);
    if (pres <= res) {
      beta = *p;
      res = pres;
      polished = true;
    }
  }
  if (res >= opt.kkt_tol) {
    // A nonnegative combination with Xtilde b ~ 0 certifies non-separability.
    const double bn = beta.norm();
    if (bn > 0.0 && (ds.Xtilde() * (beta / bn)).norm() < 1e-4 * std::sqrt(L)) {
      raise(ErrorKind::Separability, "dual is unbounded; data not linearly separable");
    }
    raise(ErrorKind::Convergence, "SVM dual KKT residual " + std::to_string(res) +
                                      " above " + std::to_string(opt.kkt_tol));
  }
  if (diag != nullptr) {
    diag->iterations = it;
    diag->kkt_residual = res;
    diag->polished = polished;
    diag->support_size = static_cast<std::size_t>((beta.array() > 0.0).count());
  }
  Vec w_hat = ds.Xtilde() * beta;
  return ReferenceDirection{w_hat, 1.0 / w_hat.norm(), beta, ReferenceKind::SVM};
}

// ---------------------------------------------------------------------------
// Margin offset

struct MarginOffsetOptions {
  int iterations = 5000;
  int restarts = 32;
  std::uint64_t seed = 0x6d617267696eULL;
  double agreement_tol = 1e-4;
};

struct MarginOffsetResult {
  double b = 0.0;
  Vec direction;  // unit maximizer in R^d
  std::vector<double> restart_values;
  std::size_t subspace_dim = 0;
};

/// Orthonormal basis of span(X) intersected with the complement of w_hat.
inline Mat margin_offset_subspace(const Dataset& ds, const ReferenceDirection& ref) {
  SpectrumBounds sb = spectrum_bounds(ds);
  Vec u = ref.w_hat / ref.norm();
  Mat M = sb.span_basis - u * (u.transpose() * sb.span_basis);
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  const double tol = 1e-10 * std::max(1.0, s.size() > 0 ? s[0] : 0.0);
  Eigen::Index r = 0;
  while (r < s.size() && s[r] > tol) ++r;
  return svd.matrixU().leftCols(r);
}

namespace detail {

/// min_i a_i^T c over the rows of A.
inline double min_margin(const Mat& A, const Vec& c, Eigen::Index* arg = nullptr) {
  Vec v = A * c;
  Eigen::Index i;
  const double m = v.minCoeff(&i);
  if (arg != nullptr) *arg = i;
  return m;
}

/// Exact value on the facet suggested by the near-active rows at c: the unit
/// c' with a_i^T c' equal for those rows. Accepted only if it improves the
/// objective, so the polish can never make the answer worse.
inline void facet_polish(const Mat& A, Vec& c, double& value) {
  Vec v = A * c;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  const Eigen::Index dim = A.cols();
  for (Eigen::Index m = 1; m <= std::min<Eigen::Index>(dim, v.size()); ++m) {
    Mat As(m, dim);
    for (Eigen::Index k = 0; k < m; ++k) As.row(k) = A.row(order[static_cast<std::size_t>(k)]);
    // Rows equal to value at a unit vector: As c = -t 1 with t > 0 minimal.
    Vec ct = As.completeOrthogonalDecomposition().solve(-Vec::Ones(m));
    const double nrm = ct.norm();
    if (!(nrm > 0.0) || (As * ct + Vec::Ones(m)).norm() > 1e-9 * std::sqrt(double(m))) continue;
    Vec cand = ct / nrm;
    const double val = min_margin(A, cand);
    if (val > value) {
      value = val;
      c = cand;
    }
  }
}

}  // namespace detail

/// b with -b = max over unit w in span(X), orthogonal to w_hat, of
/// min_i y_i <x_i, w>. Subgradient ascent on the sphere with 1/sqrt(k) steps
/// and seeded restarts, each finished by an exact facet solve.
inline MarginOffsetResult margin_offset(const Dataset& ds, const ReferenceDirection& ref,
                                        const MarginOffsetOptions& opt = {}) {
  Mat B = margin_offset_subspace(ds, ref);
  MarginOffsetResult out;
  out.subspace_dim = static_cast<std::size_t>(B.cols());
  if (B.cols() == 0) {
    raise(ErrorKind::NotApplicable, "span(X) orthogonal to w_hat is {0}; margin offset undefined");
  }
  const Mat A = ds.Xtilde().transpose() * B;  // rows a_i = B^T x~_i
  const double scale = std::max(A.rowwise().norm().maxCoeff(), 1e-300);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double best = -std::numeric_limits<double>::infinity();
  Vec best_c;
  for (int r = 0; r < opt.restarts; ++r) {
    Vec c(B.cols());
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = gauss(rng);
    c.normalize();
    Vec run_best_c = c;
    double run_best = detail::min_margin(A, c);
    for (int k = 1; k <= opt.iterations; ++k) {
      Eigen::Index i;
      detail::min_margin(A, c, &i);
      Vec g = A.row(i).transpose();
      g -= c * c.dot(g);  // Riemannian subgradient on the sphere
      c += (1.0 / std::sqrt(static_cast<double>(k))) * g / scale;
      c.normalize();
      const double val = detail::min_margin(A, c);
      if (val > run_best) {
        run_best = val;
        run_best_c = c;
      }
    }
    detail::facet_polish(A, run_best_c, run_best);
    out.restart_values.push_back(run_best);
    if (run_best > best) {
      best = run_best;
      best_c = run_best_c;
    }
  }
  std::vector<double> sorted = out.restart_values;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  if (sorted.size() >= 2 && sorted[0] - sorted[1] > opt.agreement_tol * std::max(1.0, std::abs(sorted[0]))) {
    raise(ErrorKind::Convergence, "best two margin-offset restarts disagree: " +
                                      std::to_string(sorted[0]) + " vs " + std::to_string(sorted[1]));
  }
  if (!(best < -1e-10)) {
    raise(ErrorKind::AssumptionViolation,
          "max-min margin in the complement of w_hat is " + std::to_string(best) +
              " >= 0; non-degeneracy fails");
  }
  out.b = -best;
  out.direction = B * best_c;
  return out;
}

}  // namespace bnspike
