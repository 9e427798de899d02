#include "igeood/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "igeood/error.hpp"

namespace igeood {

namespace {

int g_threads = 0;

std::span<const double> row_span(const Matrix& m, Eigen::Index i) {
  return {m.row(i).data(), static_cast<std::size_t>(m.cols())};
}

template <class T, class Fn>
std::vector<T> map_rows(Eigen::Index n, bool parallel, Fn fn) {
  std::vector<T> out(static_cast<std::size_t>(n));
  if (parallel) {
    const int threads = g_threads > 0 ? g_threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fn(i);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fn(i);
  }
  return out;
}

void check_logits(const Matrix& logits, Eigen::Index classes, double temperature, const char* what) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError(std::string(what) + ": temperature must be > 0");
  }
  if (logits.cols() != classes) throw ShapeError(std::string(what) + ": logits width must equal the class count");
  if (logits.cols() < 2) throw InvalidInputError(std::string(what) + ": need at least 2 logits");
  if (!logits.allFinite()) throw InvalidInputError(std::string(what) + ": non-finite logits");
}

const LayerStats& check_layer(const Matrix& features, const FeatureStats& stats, std::size_t layer, const char* what) {
  if (layer >= stats.layers.size()) throw ShapeError(std::string(what) + ": layer index out of range");
  const LayerStats& ls = stats.layers[layer];
  if (features.cols() != ls.class_means.cols() || features.cols() != ls.tied_sigma.size()) {
    throw ShapeError(std::string(what) + ": feature width does not match layer " + std::to_string(layer));
  }
  if (!features.allFinite()) throw InvalidInputError(std::string(what) + ": non-finite features");
  return ls;
}

template <class Dist>
std::vector<double> centroid_scores(const Matrix& logits, const CentroidSet& centroids, double temperature,
                                    bool parallel, const char* what, Dist dist) {
  check_logits(logits, centroids.num_classes(), temperature, what);
  const Matrix probs = centroid_probs(centroids, temperature);
  return map_rows<double>(logits.rows(), parallel, [&](Eigen::Index i) {
    Vector p(logits.cols());
    detail::softmax_into(row_span(logits, i), temperature, {p.data(), static_cast<std::size_t>(p.size())});
    return dist(detail::as_span(p), probs);
  });
}

std::vector<double> fr0_impl(const Matrix& logits, const CentroidSet& c, double t, Aggregation a, bool par) {
  return centroid_scores(logits, c, t, par, "score_fr0",
                         [a](std::span<const double> p, const Matrix& q) { return detail::fr0_from_probs(p, q, a); });
}

std::vector<double> kl0_impl(const Matrix& logits, const CentroidSet& c, double t, Aggregation a, bool par) {
  return centroid_scores(logits, c, t, par, "score_kl0",
                         [a](std::span<const double> p, const Matrix& q) { return detail::kl0_from_probs(p, q, a); });
}

std::vector<std::uint32_t> classify_impl(const Matrix& logits, const CentroidSet& centroids, double temperature,
                                         bool parallel) {
  check_logits(logits, centroids.num_classes(), temperature, "classify_fr");
  const Matrix probs = centroid_probs(centroids, temperature);
  return map_rows<std::uint32_t>(logits.rows(), parallel, [&](Eigen::Index i) {
    Vector p(logits.cols());
    detail::softmax_into(row_span(logits, i), temperature, {p.data(), static_cast<std::size_t>(p.size())});
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index y = 0; y < probs.rows(); ++y) {
      const double d = detail::fr_softmax_unchecked(detail::as_span(p), row_span(probs, y));
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::uint32_t>(y);
      }
    }
    return best;
  });
}

std::vector<double> fr_layer_impl(const Matrix& f, const FeatureStats& stats, std::size_t layer, bool par) {
  const LayerStats& ls = check_layer(f, stats, layer, "score_fr_layer");
  return map_rows<double>(f.rows(), par, [&](Eigen::Index i) { return detail::fr_layer_unchecked(row_span(f, i), ls); });
}

std::vector<double> fr_layer_ood_impl(const Matrix& f, const FeatureStats& stats, const OodStats& ood,
                                      std::size_t layer, bool par) {
  const LayerStats& ls = check_layer(f, stats, layer, "score_fr_layer_ood");
  if (layer >= ood.layers.size() || ood.layers[layer].mu.size() != f.cols() || ood.layers[layer].sigma.size() != f.cols()) {
    throw ShapeError("score_fr_layer_ood: OOD statistics do not match layer " + std::to_string(layer));
  }
  const OodLayerStats& o = ood.layers[layer];
  return map_rows<double>(f.rows(), par,
                          [&](Eigen::Index i) { return detail::fr_layer_ood_unchecked(row_span(f, i), ls, o); });
}

std::vector<double> baseline_impl(const Matrix& logits, ScorerKind kind, double temperature, bool par) {
  check_logits(logits, logits.cols(), temperature, "score_baseline");
  switch (kind) {
    case ScorerKind::msp:
    case ScorerKind::odin: {
      const double t = kind == ScorerKind::msp ? 1.0 : temperature;
      return map_rows<double>(logits.rows(), par, [&](Eigen::Index i) {
        Vector p(logits.cols());
        detail::softmax_into(row_span(logits, i), t, {p.data(), static_cast<std::size_t>(p.size())});
        return p.maxCoeff();
      });
    }
    case ScorerKind::energy:
      return map_rows<double>(logits.rows(), par, [&](Eigen::Index i) {
        return -temperature * detail::logsumexp(row_span(logits, i), temperature);
      });
    default:
      throw InvalidInputError(std::string("score_baseline: ") + to_string(kind) + " is not a baseline scorer");
  }
}

std::vector<double> mahalanobis_impl(const Matrix& f, const Matrix& means, const TiedCovariance& cov, bool par) {
  if (means.cols() != f.cols() || cov.dim() != f.cols() || means.rows() < 1) {
    throw ShapeError("score_mahalanobis_layer: feature, class means and covariance dimensions disagree");
  }
  if (!f.allFinite()) throw InvalidInputError("score_mahalanobis_layer: non-finite features");
  const Eigen::MatrixXd& pinv = cov.pseudo_inverse();
  return map_rows<double>(f.rows(), par, [&](Eigen::Index i) {
    return detail::mahalanobis_layer_unchecked(row_span(f, i), means, pinv);
  });
}

Matrix preprocess_impl(const MlpParams& params, const Matrix& inputs, const CentroidSet& centroids, double temperature,
                      double eps, Aggregation aggregation, bool par) {
  if (!(eps >= 0.0)) throw DomainError("preprocess_fr0: eps must be >= 0");
  if (!(temperature > 0.0)) throw DomainError("preprocess_fr0: temperature must be > 0");
  if (inputs.cols() != params.input_dim()) throw ShapeError("preprocess_fr0: input width does not match the network");
  if (centroids.num_classes() != params.output_dim()) {
    throw ShapeError("preprocess_fr0: centroid count does not match the network output");
  }
  const Matrix probs = centroid_probs(centroids, temperature);
  Matrix out(inputs.rows(), inputs.cols());
  auto row = [&](Eigen::Index i) {
    const Vector x = inputs.row(i).transpose();
    const Vector g = input_gradient(params, x, [&](const Vector& logits) {
      return fr0_logit_gradient(logits, probs, temperature, aggregation);
    });
    out.row(i) = preprocess_input(x, eps, g).transpose();
  };
  if (par) {
    const int threads = g_threads > 0 ? g_threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) row(i);
  } else {
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) row(i);
  }
  return out;
}

Matrix forward_logits_impl(const MlpParams& params, const Matrix& inputs, bool par) {
  if (inputs.cols() != params.input_dim()) throw ShapeError("forward_logits: input width does not match the network");
  Matrix out(inputs.rows(), params.output_dim());
  auto row = [&](Eigen::Index i) {
    const Vector f = forward(params, inputs.row(i).transpose());
    for (Eigen::Index j = 0; j < f.size(); ++j) out(i, j) = static_cast<double>(static_cast<float>(f[j]));
  };
  if (par) {
    const int threads = g_threads > 0 ? g_threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) row(i);
  } else {
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) row(i);
  }
  return out;
}

}  // namespace

namespace serial {

std::vector<double> score_fr0(const Matrix& logits, const CentroidSet& c, double t, Aggregation a) {
  return fr0_impl(logits, c, t, a, false);
}
std::vector<double> score_kl0(const Matrix& logits, const CentroidSet& c, double t, Aggregation a) {
  return kl0_impl(logits, c, t, a, false);
}
std::vector<std::uint32_t> classify_fr(const Matrix& logits, const CentroidSet& c, double t) {
  return classify_impl(logits, c, t, false);
}
std::vector<double> score_fr_layer(const Matrix& f, const FeatureStats& s, std::size_t layer) {
  return fr_layer_impl(f, s, layer, false);
}
std::vector<double> score_fr_layer_ood(const Matrix& f, const FeatureStats& s, const OodStats& o, std::size_t layer) {
  return fr_layer_ood_impl(f, s, o, layer, false);
}
std::vector<double> score_baseline(const Matrix& logits, ScorerKind kind, double t) {
  return baseline_impl(logits, kind, t, false);
}
std::vector<double> score_mahalanobis_layer(const Matrix& f, const Matrix& means, const TiedCovariance& cov) {
  return mahalanobis_impl(f, means, cov, false);
}

Matrix preprocess_fr0(const MlpParams& params, const Matrix& inputs, const CentroidSet& c, double t, double eps,
                      Aggregation a) {
  return preprocess_impl(params, inputs, c, t, eps, a, false);
}
Matrix forward_logits(const MlpParams& params, const Matrix& inputs) { return forward_logits_impl(params, inputs, false); }

}  // namespace serial

namespace parallel {

void set_num_threads(int n) { g_threads = std::max(0, n); }
int num_threads() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

std::vector<double> score_fr0(const Matrix& logits, const CentroidSet& c, double t, Aggregation a) {
  return fr0_impl(logits, c, t, a, true);
}
std::vector<double> score_kl0(const Matrix& logits, const CentroidSet& c, double t, Aggregation a) {
  return kl0_impl(logits, c, t, a, true);
}
std::vector<std::uint32_t> classify_fr(const Matrix& logits, const CentroidSet& c, double t) {
  return classify_impl(logits, c, t, true);
}
std::vector<double> score_fr_layer(const Matrix& f, const FeatureStats& s, std::size_t layer) {
  return fr_layer_impl(f, s, layer, true);
}
std::vector<double> score_fr_layer_ood(const Matrix& f, const FeatureStats& s, const OodStats& o, std::size_t layer) {
  return fr_layer_ood_impl(f, s, o, layer, true);
}
std::vector<double> score_baseline(const Matrix& logits, ScorerKind kind, double t) {
  return baseline_impl(logits, kind, t, true);
}
std::vector<double> score_mahalanobis_layer(const Matrix& f, const Matrix& means, const TiedCovariance& cov) {
  return mahalanobis_impl(f, means, cov, true);
}

Matrix preprocess_fr0(const MlpParams& params, const Matrix& inputs, const CentroidSet& c, double t, double eps,
                      Aggregation a) {
  return preprocess_impl(params, inputs, c, t, eps, a, true);
}
Matrix forward_logits(const MlpParams& params, const Matrix& inputs) { return forward_logits_impl(params, inputs, true); }

}  // namespace parallel

}  // namespace igeood
