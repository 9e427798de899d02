#pragma once

// Per-sample confidence scores: logits-space Fisher-Rao (and KL) scores against
// class centroids, feature-wise Gaussian scores, the MSP/ODIN/Energy/Mahalanobis
// baselines, and the logistic-regression feature ensemble.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "igeood/geometry.hpp"
#include "igeood/stats.hpp"
#include "igeood/types.hpp"

namespace igeood {

enum class ScorerKind { fr0, kl0, fr_layer, fr_layer_ood, msp, odin, energy, mahalanobis_layer };
enum class Aggregation { sum, min };

const char* to_string(ScorerKind kind);
const char* to_string(Aggregation aggregation);
ScorerKind parse_scorer_kind(const std::string& name);
Aggregation parse_aggregation(const std::string& name);

/// Sum over centroids points toward in-distribution, the minimum away from it.
Orientation orientation_of(ScorerKind kind, Aggregation aggregation = Aggregation::sum);

struct ScorerSpec {
  ScorerKind kind = ScorerKind::fr0;
  double temperature = 1.0;
  Aggregation aggregation = Aggregation::sum;
  std::optional<std::size_t> layer_index;

  bool layer_wise() const noexcept;
  /// Throws ConfigError for T <= 0 or a layer index on the wrong kind of scorer.
  void validate() const;
  Orientation orientation() const { return orientation_of(kind, aggregation); }
  /// Column name such as "fr0_sum", "odin" or "fr_layer_2".
  std::string name() const;
};

/// Named per-sample score columns of equal length, each with its orientation.
class ScoreTable {
 public:
  struct Column {
    std::string name;
    std::vector<double> values;
    Orientation orientation;
  };

  void add(std::string name, std::vector<double> values, Orientation orientation);

  std::size_t num_samples() const noexcept { return n_; }
  std::size_t num_columns() const noexcept { return columns_.size(); }
  const std::vector<Column>& columns() const noexcept { return columns_; }
  const Column& column(const std::string& name) const;
  /// N x m matrix in column order.
  Matrix values() const;

 private:
  std::vector<Column> columns_;
  std::size_t n_ = 0;
};

struct EnsembleWeights {
  Vector alpha;  // one weight per ScoreTable column, original scale
  double intercept = 0.0;
  int fitted_iterations = 0;
};

/// Row y holds softmax(mu_y / T).
Matrix centroid_probs(const CentroidSet& centroids, double temperature);

double score_fr0(const VecRef& logits, const CentroidSet& centroids, double temperature,
                 Aggregation aggregation = Aggregation::sum);

/// KL(softmax(logits / T) || softmax(mu_y / T)) aggregated over classes.
double score_kl0(const VecRef& logits, const CentroidSet& centroids, double temperature,
                 Aggregation aggregation = Aggregation::sum);

/// Class whose centroid is nearest in Fisher-Rao distance; ties go to the lowest index.
std::uint32_t classify_fr(const VecRef& logits, const CentroidSet& centroids, double temperature);

/// Minimum over classes of the diagonal-Gaussian distance, the test point sharing the tied sigma.
double score_fr_layer(const VecRef& feature, const FeatureStats& stats, std::size_t layer);

/// Distance from (feature, tied sigma) to the OOD reference Gaussian of the layer.
double score_fr_layer_ood(const VecRef& feature, const FeatureStats& stats, const OodStats& ood,
                          std::size_t layer);

/// msp = max softmax(logits), odin = max softmax(logits / T), energy = -T logsumexp(logits / T).
double score_baseline(const VecRef& logits, ScorerKind kind, double temperature = 1.0);

/// max over classes of the negative squared Mahalanobis distance.
double score_mahalanobis_layer(const VecRef& feature, const Matrix& class_means, const TiedCovariance& cov);

inline constexpr double kEnsembleL2 = 1e-4;

/// Newton logistic regression on standardized columns; labels are 1 for in-distribution, 0 for OOD.
EnsembleWeights fit_alpha(const ScoreTable& table, std::span<const std::uint8_t> labels, int max_iter = 100);

double score_ensemble(const VecRef& row, const EnsembleWeights& weights);
std::vector<double> score_ensemble(const ScoreTable& table, const EnsembleWeights& weights);

namespace detail {

double logsumexp(std::span<const double> v, double temperature);
/// Sum or minimum of the distance from p to each row of `probs`.
double fr0_from_probs(std::span<const double> p, const Matrix& probs, Aggregation aggregation);
double kl0_from_probs(std::span<const double> p, const Matrix& probs, Aggregation aggregation);
double fr_layer_unchecked(std::span<const double> feature, const LayerStats& layer);
double fr_layer_ood_unchecked(std::span<const double> feature, const LayerStats& layer, const OodLayerStats& ood);
double mahalanobis_layer_unchecked(std::span<const double> feature, const Matrix& class_means,
                                   const Eigen::MatrixXd& pinv);

}  // namespace detail

}  // namespace igeood
