#pragma once

// Offline fitting: logits-space class centroids under the Fisher-Rao (or KL)
// objective, per-layer diagonal Gaussian statistics, OOD reference statistics,
// spatial pooling and covariance conditioning diagnostics.

#include <cstdint>
#include <span>
#include <vector>

#include "igeood/geometry.hpp"
#include "igeood/types.hpp"

namespace igeood {

/// N x C logits with a class index per row.
struct LabeledLogits {
  Matrix logits;
  std::vector<std::uint32_t> labels;

  Eigen::Index num_classes() const noexcept { return logits.cols(); }
  /// Throws InvalidInputError when labels are out of range, counts differ or values are non-finite.
  void validate() const;
};

/// One N x k_l matrix per layer, sharing the label vector.
struct LabeledFeatures {
  std::vector<Matrix> layers;
  std::vector<std::uint32_t> labels;
  std::uint32_t num_classes = 0;

  void validate() const;
};

enum class FitDistance { fisher_rao, kl };

struct CentroidSet {
  Matrix centroids;  // C x C, row y is the logits-space centroid of class y
  FitDistance fit_distance = FitDistance::fisher_rao;
  double final_loss = 0.0;
  /// Mean over classes of the per-class objective; entry 0 is the initial value.
  std::vector<double> loss_history;

  Eigen::Index num_classes() const noexcept { return centroids.rows(); }
};

struct CentroidFitConfig {
  double learning_rate = 0.1;
  int epochs = 100;
  /// Full-batch descent unless disabled; mini-batches are drawn by seeded shuffling.
  bool full_batch = true;
  int batch_size = 128;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  FitDistance distance = FitDistance::fisher_rao;
};

struct LayerStats {
  Matrix class_means;  // C x k
  Vector tied_sigma;   // k, floored
};

struct FeatureStats {
  std::vector<LayerStats> layers;
};

struct OodLayerStats {
  Vector mu;
  Vector sigma;
};

struct OodStats {
  std::vector<OodLayerStats> layers;
};

/// Lower bound applied to every fitted standard deviation.
inline constexpr double kSigmaFloor = 1e-6;

/// Mean over samples of class `cls` of the dissimilarity to softmax(centroid / T).
double centroid_objective(const LabeledLogits& data, std::uint32_t cls, const VecRef& centroid,
                          double temperature, FitDistance distance);

/// Gradient of centroid_objective with respect to the centroid. Zero where the
/// Bhattacharyya coefficient is clamped at 1.
Vector centroid_objective_gradient(const LabeledLogits& data, std::uint32_t cls, const VecRef& centroid,
                                   double temperature, FitDistance distance);

/// Gradient descent from the identity rows. An epoch that would raise a class's
/// objective is rejected and that class's step size halved, so the recorded loss
/// never increases.
CentroidSet fit_centroids(const LabeledLogits& data, const CentroidFitConfig& cfg = {});

FeatureStats fit_gaussian_stats(const LabeledFeatures& data);

OodStats fit_ood_stats(std::span<const Matrix> ood_features);

/// Per-class means plus the pooled within-class covariance, one per layer.
struct TiedGaussianLayer {
  Matrix class_means;
  TiedCovariance covariance;
};

TiedGaussianLayer fit_tied_gaussian(const Matrix& features, std::span<const std::uint32_t> labels,
                                    std::uint32_t num_classes);

/// Mean over the spatial axes of a channel-major F x W x H tensor.
Vector avg_pool_spatial(std::span<const double> tensor, Eigen::Index channels, Eigen::Index width,
                        Eigen::Index height);

struct CovarianceDiagnostics {
  double condition_number_full = 0.0;
  double condition_number_diag = 0.0;
  double diag_dominant_row_fraction = 0.0;
};

/// Infinity-norm condition numbers of the (1/N) covariance and of its diagonal,
/// with the pseudo-inverse standing in when singular.
CovarianceDiagnostics covariance_diagnostics(const Matrix& features);

}  // namespace igeood
