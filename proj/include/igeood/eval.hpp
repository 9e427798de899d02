#pragma once

// Threshold calibration at a target true positive rate, the binary detector,
// TNR/AUROC/AUPR with in-distribution as the positive class, and grid search.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "igeood/types.hpp"

namespace igeood {

struct DetectorConfig {
  double delta = 0.0;  // in the units of the raw score
  double temperature = 1.0;
  double eps = 0.0;
  Orientation orientation = Orientation::higher_is_in;
};

struct EvalReport {
  double tnr_at_tpr95 = 0.0;
  double auroc = 0.0;
  double aupr = 0.0;
  double delta = 0.0;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
};

std::vector<double> default_temperatures();
/// 21 equally spaced values in [0, 0.002].
std::vector<double> default_epsilons();

struct TuneGrid {
  std::vector<double> temperatures = default_temperatures();
  std::vector<double> epsilons = default_epsilons();

  void validate() const;
};

struct GridResult {
  double temperature = 1.0;
  double eps = 0.0;
  double objective = 0.0;
};

inline constexpr std::size_t kMinCalibrationScores = 20;

/// Largest delta (raw units) such that at least target_tpr of in_scores are on the
/// in-distribution side of it, boundary included.
double calibrate_threshold(std::span<const double> in_scores, Orientation orientation, double target_tpr = 0.95);

/// 1 when the sample is flagged out-of-distribution: normalized score <= normalized delta.
int detect(double score, const DetectorConfig& cfg);

double tnr_at_tpr(std::span<const double> in_scores, std::span<const double> out_scores, Orientation orientation,
                  double tpr = 0.95);

/// P(in > out) + P(in = out) / 2.
double auroc(std::span<const double> in_scores, std::span<const double> out_scores, Orientation orientation);

/// Step-wise sum of precision times recall increments over the unique thresholds.
double aupr(std::span<const double> in_scores, std::span<const double> out_scores, Orientation orientation);

EvalReport evaluate(std::span<const double> in_scores, std::span<const double> out_scores, Orientation orientation);

/// Exhaustive search maximizing objective(T, eps); ties go to the smaller eps, then the smaller T.
GridResult grid_search(const TuneGrid& grid, const std::function<double(double temperature, double eps)>& objective);

}  // namespace igeood
