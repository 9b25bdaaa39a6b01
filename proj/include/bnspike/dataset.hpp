#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "bnspike/error.hpp"

namespace bnspike {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Features as columns (d x n) with labels in {+1, -1}, plus the signed
/// features Xtilde = X diag(y), the second-moment matrix Sigma and the mean mu.
class Dataset {
 public:
  Dataset() = default;

  Dataset(Mat X, Vec y, std::map<std::string, std::string> metadata = {})
      : X_(std::move(X)), y_(std::move(y)), metadata_(std::move(metadata)) {
    if (X_.cols() == 0 || X_.rows() == 0) raise(ErrorKind::Precondition, "dataset must be nonempty");
    if (y_.size() != X_.cols()) {
      raise(ErrorKind::DimensionMismatch, "label count " + std::to_string(y_.size()) +
                                              " does not match sample count " +
                                              std::to_string(X_.cols()));
    }
    for (Eigen::Index i = 0; i < y_.size(); ++i) {
      if (y_[i] != 1.0 && y_[i] != -1.0) {
        raise(ErrorKind::Precondition, "label " + std::to_string(i) + " is not +1 or -1");
      }
    }
    if (!X_.allFinite()) raise(ErrorKind::Precondition, "features contain non-finite values");
    Xtilde_ = X_ * y_.asDiagonal();
    const double inv_n = 1.0 / static_cast<double>(n());
    Sigma_ = inv_n * (Xtilde_ * Xtilde_.transpose());
    Sigma_ = 0.5 * (Sigma_ + Sigma_.transpose()).eval();
    mu_ = inv_n * Xtilde_.rowwise().sum();
  }

  const Mat& X() const { return X_; }
  const Vec& y() const { return y_; }
  const Mat& Xtilde() const { return Xtilde_; }
  const Mat& Sigma() const { return Sigma_; }
  const Vec& mu() const { return mu_; }
  Eigen::Index n() const { return X_.cols(); }
  Eigen::Index d() const { return X_.rows(); }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  std::map<std::string, std::string>& metadata() { return metadata_; }

  /// FNV-1a over the raw feature and label bytes; identifies a dataset in run metadata.
  std::uint64_t content_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const double* p, Eigen::Index count) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < static_cast<std::size_t>(count) * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
      }
    };
    mix(X_.data(), X_.size());
    mix(y_.data(), y_.size());
    return h;
  }

 private:
  Mat X_;
  Vec y_;
  Mat Xtilde_;
  Mat Sigma_;
  Vec mu_;
  std::map<std::string, std::string> metadata_;
};

struct SpectrumBounds {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  Mat span_basis;  // d x r, orthonormal columns spanning span(X)
  Vec eigenvalues;  // restricted eigenvalues, descending
};

inline void check_dim(const Vec& v, Eigen::Index d, const char* what) {
  if (v.size() != d) {
    raise(ErrorKind::DimensionMismatch, std::string(what) + " has length " +
                                            std::to_string(v.size()) + ", expected " +
                                            std::to_string(d));
  }
}

inline double sigma_inner(const Vec& a, const Vec& b, const Dataset& ds) {
  check_dim(a, ds.d(), "a");
  check_dim(b, ds.d(), "b");
  return a.dot(ds.Sigma() * b);
}

/// Computed as ||Xtilde^T a|| / sqrt(n), which avoids squaring Sigma's conditioning.
inline double sigma_norm(const Vec& a, const Dataset& ds) {
  check_dim(a, ds.d(), "a");
  return (ds.Xtilde().transpose() * a).norm() / std::sqrt(static_cast<double>(ds.n()));
}

/// Extremal eigenvalues of Sigma restricted to span(X). The span is the
/// numerical column space of X; restricted eigenvalues are s_i^2 / n.
inline SpectrumBounds spectrum_bounds(const Dataset& ds) {
  Eigen::JacobiSVD<Mat> svd(ds.X(), Eigen::ComputeThinU);
  const Vec& s = svd.singularValues();
  if (!s.allFinite()) raise(ErrorKind::Singular, "singular value decomposition failed");
  const double tol = s.size() > 0 ? s[0] * static_cast<double>(std::max(ds.d(), ds.n())) *
                                        std::numeric_limits<double>::epsilon()
                                  : 0.0;
  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > tol) ++rank;
  if (rank == 0) raise(ErrorKind::Singular, "span(X) is the zero subspace");
  SpectrumBounds out;
  out.span_basis = svd.matrixU().leftCols(rank);
  out.eigenvalues = s.head(rank).array().square() / static_cast<double>(ds.n());
  out.lambda_max = out.eigenvalues[0];
  out.lambda_min = out.eigenvalues[rank - 1];
  return out;
}

inline constexpr double kWhitenEigenClamp = 1e-12;

/// Sigma^{-1/2} on span(X), identity on its orthogonal complement.
inline Dataset whiten(const Dataset& ds) {
  SpectrumBounds sb = spectrum_bounds(ds);
  if (sb.lambda_min <= kWhitenEigenClamp) {
    std::ostringstream os;
    os << "restricted eigenvalue " << sb.lambda_min << " is below the clamp "
       << kWhitenEigenClamp;
    raise(ErrorKind::Singular, os.str());
  }
  const Mat& U = sb.span_basis;
  Vec scale = sb.eigenvalues.array().rsqrt() - 1.0;
  Mat T = Mat::Identity(ds.d(), ds.d()) + U * scale.asDiagonal() * U.transpose();
  auto meta = ds.metadata();
  meta["whitened"] = "true";
  return Dataset(T * ds.X(), ds.y(), std::move(meta));
}

/// Restricted-to-span check that Sigma acts as the identity, used to gate
/// whitened-only analyses.
inline double whitening_defect(const Dataset& ds) {
  SpectrumBounds sb = spectrum_bounds(ds);
  return (sb.eigenvalues.array() - 1.0).abs().maxCoeff();
}

/// Haar-like orthogonal matrix from the QR of a seeded Gaussian matrix,
/// with R's diagonal forced positive so the result is unique.
inline Mat random_orthogonal(Eigen::Index m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat G(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i) G(i, j) = normal(rng);
  Eigen::HouseholderQR<Mat> qr(G);
  Mat Q = qr.householderQ() * Mat::Identity(m, m);
  Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < m; ++j) {
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  }
  return Q;
}

struct HilbertConfig {
  Eigen::Index n = 10;
  Eigen::Index d = 20;
  std::uint64_t seed = 7;
  double noise_std = 1e-2;
  bool rotate = true;
  Eigen::Index row_offset = 0;
  Eigen::Index col_offset = 0;
};

/// Ill-conditioned separable data: an n x d slice of the Hilbert matrix,
/// randomly rotated on both sides, with Gaussian noise. Labels are the signs
/// of <x_i, v> for a seeded random v, so the data is always separable.
inline Dataset gen_hilbert_dataset(const HilbertConfig& cfg) {
  if (cfg.n <= 0 || cfg.d <= 0) raise(ErrorKind::Precondition, "n and d must be positive");
  if (cfg.n > cfg.d) {
    raise(ErrorKind::Precondition, "n = " + std::to_string(cfg.n) +
                                       " exceeds d = " + std::to_string(cfg.d) +
                                       "; the generator targets the overparameterized regime");
  }
  if (!(cfg.noise_std >= 0.0)) raise(ErrorKind::Precondition, "noise_std must be nonnegative");
  std::mt19937_64 rng(cfg.seed);
  Mat slice(cfg.n, cfg.d);
  for (Eigen::Index i = 0; i < cfg.n; ++i)
    for (Eigen::Index j = 0; j < cfg.d; ++j)
      slice(i, j) = 1.0 / static_cast<double>(i + cfg.row_offset + j + cfg.col_offset + 1);
  if (cfg.rotate) {
    Mat left = random_orthogonal(cfg.n, rng);
    Mat right = random_orthogonal(cfg.d, rng);
    slice = (left * slice * right).eval();
  }
  Mat X = slice.transpose();
  std::normal_distribution<double> normal(0.0, 1.0);
  if (cfg.noise_std > 0.0) {
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) += cfg.noise_std * normal(rng);
  }
  Vec v(cfg.d);
  for (Eigen::Index i = 0; i < cfg.d; ++i) v[i] = normal(rng);
  Vec y(cfg.n);
  for (Eigen::Index i = 0; i < cfg.n; ++i) y[i] = X.col(i).dot(v) >= 0.0 ? 1.0 : -1.0;
  std::map<std::string, std::string> meta{
      {"generator", "hilbert"},
      {"n", std::to_string(cfg.n)},
      {"d", std::to_string(cfg.d)},
      {"seed", std::to_string(cfg.seed)},
      {"noise_std", std::to_string(cfg.noise_std)},
      {"rotate", cfg.rotate ? "true" : "false"},
      {"row_offset", std::to_string(cfg.row_offset)},
      {"col_offset", std::to_string(cfg.col_offset)},
  };
  return Dataset(std::move(X), std::move(y), std::move(meta));
}

/// Minimum-norm solution of Xtilde^T w = 1, via the Gram system on the samples.
inline Vec min_norm_margin_solution(const Dataset& ds, Vec* dual = nullptr) {
  Mat G = ds.Xtilde().transpose() * ds.Xtilde();
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(G);
  Vec beta = cod.solve(Vec::Ones(ds.n()));
  if (dual) *dual = beta;
  return ds.Xtilde() * beta;
}

struct ActiveMarginConfig {
  Eigen::Index n = 5;
  Eigen::Index d = 8;
  double gamma = 1.0;
  std::uint64_t seed = 1;
  double spread = 1.0;     // scale of the components orthogonal to w_hat
  int max_retries = 20;
};

/// Data on which every sample is a support vector: x~_i = gamma u + z_i with
/// z_i orthogonal to u and a strictly positive combination of the z_i summing
/// to zero, so w_hat = u / gamma has all margins equal to one and positive duals.
inline Dataset gen_active_margin_dataset(const ActiveMarginConfig& cfg) {
  if (cfg.n <= 0) raise(ErrorKind::Precondition, "n must be positive");
  if (cfg.n >= cfg.d) {
    raise(ErrorKind::Precondition, "active-margin data requires n < d (n = " +
                                       std::to_string(cfg.n) + ", d = " + std::to_string(cfg.d) +
                                       ")");
  }
  if (!(cfg.gamma > 0.0)) raise(ErrorKind::Precondition, "gamma_target must be positive");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    Mat Q = random_orthogonal(cfg.d, rng);
    Vec u = Q.col(0);
    Mat Z = Mat::Zero(cfg.d, cfg.n);
    Vec weights(cfg.n);
    for (Eigen::Index i = 0; i + 1 < cfg.n; ++i) {
      Vec z(cfg.d);
      for (Eigen::Index k = 0; k < cfg.d; ++k) z[k] = normal(rng);
      z -= u * u.dot(z);
      Z.col(i) = cfg.spread * z;
      weights[i] = unif(rng);
    }
    weights[cfg.n - 1] = 1.0;
    if (cfg.n > 1) Z.col(cfg.n - 1) = -(Z.leftCols(cfg.n - 1) * weights.head(cfg.n - 1));
    Mat Xt = (cfg.gamma * u).replicate(1, cfg.n) + Z;
    Vec y(cfg.n);
    for (Eigen::Index i = 0; i < cfg.n; ++i) y[i] = (rng() & 1U) ? 1.0 : -1.0;
    Mat X = Xt * y.asDiagonal();
    std::map<std::string, std::string> meta{
        {"generator", "active_margin"},
        {"n", std::to_string(cfg.n)},
        {"d", std::to_string(cfg.d)},
        {"gamma", std::to_string(cfg.gamma)},
        {"seed", std::to_string(cfg.seed)},
        {"spread", std::to_string(cfg.spread)},
        {"attempt", std::to_string(attempt)},
    };
    Dataset ds(std::move(X), std::move(y), std::move(meta));
    Vec beta;
    Vec w_hat = min_norm_margin_solution(ds, &beta);
    const double margin_err = (ds.Xtilde().transpose() * w_hat - Vec::Ones(cfg.n)).cwiseAbs().maxCoeff();
    const double norm_err = std::abs(w_hat.norm() - 1.0 / cfg.gamma);
    if (margin_err < 1e-8 && norm_err < 1e-8 && beta.minCoeff() > 0.0) return ds;
  }
  raise(ErrorKind::GenerationFailure,
        "active-margin construction failed after " + std::to_string(cfg.max_retries) + " retries");
}

}  // namespace bnspike
