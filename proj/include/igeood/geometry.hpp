#pragma once

// Closed-form statistical distances: Fisher-Rao on the probability simplex and
// on diagonal Gaussians, KL divergence, and Mahalanobis with a tied covariance.

#include <span>

#include "igeood/types.hpp"

namespace igeood {

/// A point on the probability simplex with at least two categories.
class ProbVector {
 public:
  /// Validates entries in [0,1] summing to 1 within 1e-9.
  explicit ProbVector(Vector p);

  const Vector& values() const noexcept { return p_; }
  Eigen::Index size() const noexcept { return p_.size(); }
  double operator[](Eigen::Index i) const { return p_[i]; }

 private:
  struct Unchecked {};
  ProbVector(Vector p, Unchecked) : p_(std::move(p)) {}
  friend ProbVector softmax(const VecRef& logits, double temperature);

  Vector p_;
};

struct Gauss1D {
  double mu = 0.0;
  double sigma = 1.0;
};

struct GaussianDiag {
  Vector mu;
  Vector sigma;
};

/// Symmetric PSD covariance together with its Moore-Penrose pseudo-inverse.
class TiedCovariance {
 public:
  /// Relative singular-value cutoff used for the pseudo-inverse.
  static constexpr double kPinvCutoff = 1e-10;

  explicit TiedCovariance(Eigen::MatrixXd matrix);

  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
  const Eigen::MatrixXd& pseudo_inverse() const noexcept { return pinv_; }
  Eigen::Index dim() const noexcept { return matrix_.rows(); }

 private:
  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd pinv_;
};

/// SVD pseudo-inverse; singular values below cutoff * s_max are treated as zero.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double relative_cutoff = TiedCovariance::kPinvCutoff);

/// Temperature-scaled softmax, computed with max-subtraction.
ProbVector softmax(const VecRef& logits, double temperature = 1.0);

/// Bhattacharyya coefficient sum_i sqrt(p_i q_i), not clamped.
double bhattacharyya(const ProbVector& p, const ProbVector& q);

/// Geodesic distance on the simplex: 2 arccos(BC), in [0, pi].
double fr_softmax(const ProbVector& p, const ProbVector& q);

/// Fisher-Rao distance between univariate normals given by (mean, standard deviation).
double fr_gauss_1d(Gauss1D a, Gauss1D b);

/// Fisher-Rao distance between diagonal normals: sqrt(sum_i rho(a_i, b_i)^2).
double fr_gauss_diag(const GaussianDiag& a, const GaussianDiag& b);

/// KL(p || q) with 0 log 0 = 0 and a 1e-12 probability floor inside the logarithms.
double kl_softmax(const ProbVector& p, const ProbVector& q);

/// sqrt((x - mu)^T Sigma^+ (x - mu)).
double mahalanobis(const VecRef& x, const VecRef& mu, const TiedCovariance& cov);

namespace detail {

inline constexpr double kKlFloor = 1e-12;

// Unchecked kernels on raw spans; callers validate shapes and sigma > 0.
double fr_gauss_1d_unchecked(double mu1, double sigma1, double mu2, double sigma2);
double fr_gauss_diag_sq(std::span<const double> mu_a, std::span<const double> sigma_a,
                        std::span<const double> mu_b, std::span<const double> sigma_b);
double fr_softmax_unchecked(std::span<const double> p, std::span<const double> q);
/// sum_i (sqrt(p_i) - sqrt(q_i))^2, equal to 2 - 2 BC on the simplex.
double hellinger_chord_sq(std::span<const double> p, std::span<const double> q);
double kl_unchecked(std::span<const double> p, std::span<const double> q);
/// softmax(logits / T) written into out (same length); softmax() is built on it.
void softmax_into(std::span<const double> logits, double temperature, std::span<double> out);

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace detail

}  // namespace igeood
