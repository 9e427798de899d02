#include "igeood/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "igeood/error.hpp"

namespace igeood {

namespace {

void require_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

void require_positive_sigma(double sigma, const char* what) {
  if (!(sigma > 0.0)) throw DomainError(std::string(what) + ": sigma must be > 0");
}

}  // namespace

ProbVector::ProbVector(Vector p) : p_(std::move(p)) {
  if (p_.size() < 2) throw InvalidInputError("ProbVector: need at least 2 categories");
  double sum = 0.0;
  for (double v : p_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidInputError("ProbVector: entries must lie in [0, 1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidInputError("ProbVector: entries must sum to 1");
}

TiedCovariance::TiedCovariance(Eigen::MatrixXd matrix) : matrix_(std::move(matrix)) {
  if (matrix_.rows() != matrix_.cols()) throw ShapeError("TiedCovariance: matrix must be square");
  if (!matrix_.allFinite()) throw InvalidInputError("TiedCovariance: non-finite entries");
  const double scale = std::max(1.0, matrix_.cwiseAbs().maxCoeff());
  if ((matrix_ - matrix_.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw InvalidInputError("TiedCovariance: matrix is not symmetric");
  }
  pinv_ = igeood::pseudo_inverse(matrix_);
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double relative_cutoff) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Vector s_inv = Vector::Zero(s.size());
  if (s.size() > 0 && s[0] > 0.0) {
    const double cut = relative_cutoff * s[0];
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s[i] > cut) s_inv[i] = 1.0 / s[i];
    }
  }
  return svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
}

ProbVector softmax(const VecRef& logits, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("softmax: temperature must be > 0");
  if (logits.size() < 2) throw InvalidInputError("softmax: need at least 2 logits");
  if (!logits.allFinite()) throw InvalidInputError("softmax: non-finite logits");
  Vector p(logits.size());
  detail::softmax_into({logits.data(), static_cast<std::size_t>(logits.size())}, temperature,
                       {p.data(), static_cast<std::size_t>(p.size())});
  return ProbVector(std::move(p), ProbVector::Unchecked{});
}

double bhattacharyya(const ProbVector& p, const ProbVector& q) {
  require_same_size(p.size(), q.size(), "bhattacharyya");
  return (p.values().array() * q.values().array()).sqrt().sum();
}

double fr_softmax(const ProbVector& p, const ProbVector& q) {
  require_same_size(p.size(), q.size(), "fr_softmax");
  return detail::fr_softmax_unchecked(detail::as_span(p.values()), detail::as_span(q.values()));
}

double fr_gauss_1d(Gauss1D a, Gauss1D b) {
  require_positive_sigma(a.sigma, "fr_gauss_1d");
  require_positive_sigma(b.sigma, "fr_gauss_1d");
  return detail::fr_gauss_1d_unchecked(a.mu, a.sigma, b.mu, b.sigma);
}

double fr_gauss_diag(const GaussianDiag& a, const GaussianDiag& b) {
  require_same_size(a.mu.size(), a.sigma.size(), "fr_gauss_diag");
  require_same_size(b.mu.size(), b.sigma.size(), "fr_gauss_diag");
  require_same_size(a.mu.size(), b.mu.size(), "fr_gauss_diag");
  for (Eigen::Index i = 0; i < a.sigma.size(); ++i) {
    require_positive_sigma(a.sigma[i], "fr_gauss_diag");
    require_positive_sigma(b.sigma[i], "fr_gauss_diag");
  }
  using detail::as_span;
  return std::sqrt(detail::fr_gauss_diag_sq(as_span(a.mu), as_span(a.sigma), as_span(b.mu), as_span(b.sigma)));
}

double kl_softmax(const ProbVector& p, const ProbVector& q) {
  require_same_size(p.size(), q.size(), "kl_softmax");
  return detail::kl_unchecked(detail::as_span(p.values()), detail::as_span(q.values()));
}

double mahalanobis(const VecRef& x, const VecRef& mu, const TiedCovariance& cov) {
  require_same_size(x.size(), mu.size(), "mahalanobis");
  require_same_size(x.size(), cov.dim(), "mahalanobis");
  const Vector d = x - mu;
  return std::sqrt(std::max(0.0, d.dot(cov.pseudo_inverse() * d)));
}

namespace detail {

// In the half-plane coordinates (mu / sqrt 2, sigma) the univariate normal family
// is hyperbolic space scaled by sqrt 2. The log-ratio form of the distance is
// rewritten as 2 sqrt(2) asinh(|a - b| / (2 sqrt(sigma1 sigma2))), which is the
// same quantity without the cancellation in its denominator.
double fr_gauss_1d_unchecked(double mu1, double sigma1, double mu2, double sigma2) {
  if (mu1 == mu2 && sigma1 == sigma2) return 0.0;
  const double dmu = mu1 - mu2;
  const double dsigma = sigma1 - sigma2;
  const double chord = std::sqrt(0.5 * dmu * dmu + dsigma * dsigma);
  return 2.0 * std::numbers::sqrt2 * std::asinh(chord / (2.0 * std::sqrt(sigma1 * sigma2)));
}

double fr_gauss_diag_sq(std::span<const double> mu_a, std::span<const double> sigma_a,
                        std::span<const double> mu_b, std::span<const double> sigma_b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double r = fr_gauss_1d_unchecked(mu_a[i], sigma_a[i], mu_b[i], sigma_b[i]);
    acc += r * r;
  }
  return acc;
}

double hellinger_chord_sq(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
    acc += d * d;
  }
  return acc;
}

// 2 acos(BC) written through the chord |sqrt(p) - sqrt(q)| = 2 sin(theta / 2), which
// stays accurate when p and q are close.
double fr_softmax_unchecked(std::span<const double> p, std::span<const double> q) {
  const double half_chord = std::sqrt(hellinger_chord_sq(p, q)) / 2.0;
  return 4.0 * std::asin(std::min(half_chord, 1.0));
}

double kl_unchecked(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i] * (std::log(std::max(p[i], kKlFloor)) - std::log(std::max(q[i], kKlFloor)));
  }
  return acc;
}

void softmax_into(std::span<const double> logits, double temperature, std::span<double> out) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - m) / temperature);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
}

}  // namespace detail

}  // namespace igeood
