#pragma once

// Batch scorers over sample-major matrices. `serial` is the reference loop; `parallel`
// splits the rows across OpenMP threads. Each row is scored by the same per-sample
// routine in both, so the outputs agree bit for bit for any thread count.

#include <vector>

#include "igeood/nnet.hpp"
#include "igeood/scoring.hpp"

namespace igeood {

namespace serial {

std::vector<double> score_fr0(const Matrix& logits, const CentroidSet& centroids, double temperature,
                              Aggregation aggregation);
std::vector<double> score_kl0(const Matrix& logits, const CentroidSet& centroids, double temperature,
                              Aggregation aggregation);
std::vector<std::uint32_t> classify_fr(const Matrix& logits, const CentroidSet& centroids, double temperature);
std::vector<double> score_fr_layer(const Matrix& features, const FeatureStats& stats, std::size_t layer);
std::vector<double> score_fr_layer_ood(const Matrix& features, const FeatureStats& stats, const OodStats& ood,
                                       std::size_t layer);
std::vector<double> score_baseline(const Matrix& logits, ScorerKind kind, double temperature);
std::vector<double> score_mahalanobis_layer(const Matrix& features, const Matrix& class_means,
                                            const TiedCovariance& cov);
/// x + eps * sign(grad_x FR0(x)) for every row of `inputs`.
Matrix preprocess_fr0(const MlpParams& params, const Matrix& inputs, const CentroidSet& centroids, double temperature,
                      double eps, Aggregation aggregation);
/// Network logits per row, rounded to float32 like the values read from a dump.
Matrix forward_logits(const MlpParams& params, const Matrix& inputs);

}  // namespace serial

namespace parallel {

/// Thread count used by the parallel kernels; 0 leaves the OpenMP default.
void set_num_threads(int n);
int num_threads();

std::vector<double> score_fr0(const Matrix& logits, const CentroidSet& centroids, double temperature,
                              Aggregation aggregation);
std::vector<double> score_kl0(const Matrix& logits, const CentroidSet& centroids, double temperature,
                              Aggregation aggregation);
std::vector<std::uint32_t> classify_fr(const Matrix& logits, const CentroidSet& centroids, double temperature);
std::vector<double> score_fr_layer(const Matrix& features, const FeatureStats& stats, std::size_t layer);
std::vector<double> score_fr_layer_ood(const Matrix& features, const FeatureStats& stats, const OodStats& ood,
                                       std::size_t layer);
std::vector<double> score_baseline(const Matrix& logits, ScorerKind kind, double temperature);
std::vector<double> score_mahalanobis_layer(const Matrix& features, const Matrix& class_means,
                                            const TiedCovariance& cov);
/// x + eps * sign(grad_x FR0(x)) for every row of `inputs`.
Matrix preprocess_fr0(const MlpParams& params, const Matrix& inputs, const CentroidSet& centroids, double temperature,
                      double eps, Aggregation aggregation);
/// Network logits per row, rounded to float32 like the values read from a dump.
Matrix forward_logits(const MlpParams& params, const Matrix& inputs);

}  // namespace parallel

}  // namespace igeood
