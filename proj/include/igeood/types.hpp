#pragma once

#include <Eigen/Dense>

namespace igeood {

using Vector = Eigen::VectorXd;
/// Sample-major storage: one row per sample, matching the on-disk layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecRef = Eigen::Ref<const Vector>;

/// Which way a score points. Metrics and detectors normalize to higher_is_in.
enum class Orientation { higher_is_in, lower_is_in };

inline double normalize(double score, Orientation o) {
  return o == Orientation::higher_is_in ? score : -score;
}

inline Orientation flip(Orientation o) {
  return o == Orientation::higher_is_in ? Orientation::lower_is_in : Orientation::higher_is_in;
}

}  // namespace igeood
