#include "igeood/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "igeood/error.hpp"

namespace igeood {

namespace {

using detail::as_span;

std::span<const double> row_span(const Matrix& m, Eigen::Index i) {
  return {m.row(i).data(), static_cast<std::size_t>(m.cols())};
}

std::span<const double> ref_span(const VecRef& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void require_temperature(double t, const char* what) {
  if (!(t > 0.0) || !std::isfinite(t)) throw DomainError(std::string(what) + ": temperature must be > 0");
}

void require_logits(const VecRef& logits, const CentroidSet& centroids, const char* what) {
  if (logits.size() != centroids.num_classes() || centroids.centroids.cols() != centroids.num_classes()) {
    throw ShapeError(std::string(what) + ": logits length must equal the number of centroids");
  }
  if (!logits.allFinite()) throw InvalidInputError(std::string(what) + ": non-finite logits");
}

const LayerStats& layer_at(const FeatureStats& stats, std::size_t layer, Eigen::Index k, const char* what) {
  if (layer >= stats.layers.size()) throw ShapeError(std::string(what) + ": layer index out of range");
  const LayerStats& ls = stats.layers[layer];
  if (ls.class_means.cols() != k || ls.tied_sigma.size() != k) {
    throw ShapeError(std::string(what) + ": feature length does not match layer " + std::to_string(layer));
  }
  return ls;
}

template <class Dist>
double aggregate(std::span<const double> p, const Matrix& probs, Aggregation aggregation, Dist dist) {
  double acc = aggregation == Aggregation::sum ? 0.0 : std::numeric_limits<double>::infinity();
  for (Eigen::Index y = 0; y < probs.rows(); ++y) {
    const double d = dist(p, row_span(probs, y));
    acc = aggregation == Aggregation::sum ? acc + d : std::min(acc, d);
  }
  return acc;
}

}  // namespace

const char* to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::fr0: return "fr0";
    case ScorerKind::kl0: return "kl0";
    case ScorerKind::fr_layer: return "fr_layer";
    case ScorerKind::fr_layer_ood: return "fr_layer_ood";
    case ScorerKind::msp: return "msp";
    case ScorerKind::odin: return "odin";
    case ScorerKind::energy: return "energy";
    case ScorerKind::mahalanobis_layer: return "mahalanobis_layer";
  }
  return "unknown";
}

const char* to_string(Aggregation aggregation) { return aggregation == Aggregation::sum ? "sum" : "min"; }

ScorerKind parse_scorer_kind(const std::string& name) {
  for (auto k : {ScorerKind::fr0, ScorerKind::kl0, ScorerKind::fr_layer, ScorerKind::fr_layer_ood, ScorerKind::msp,
                 ScorerKind::odin, ScorerKind::energy, ScorerKind::mahalanobis_layer}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown scorer kind '" + name + "'");
}

Aggregation parse_aggregation(const std::string& name) {
  if (name == "sum") return Aggregation::sum;
  if (name == "min") return Aggregation::min;
  throw ConfigError("unknown aggregation '" + name + "'");
}

Orientation orientation_of(ScorerKind kind, Aggregation aggregation) {
  switch (kind) {
    case ScorerKind::fr0:
    case ScorerKind::kl0:
      return aggregation == Aggregation::sum ? Orientation::higher_is_in : Orientation::lower_is_in;
    case ScorerKind::fr_layer:
    case ScorerKind::energy:
      return Orientation::lower_is_in;
    case ScorerKind::fr_layer_ood:
    case ScorerKind::msp:
    case ScorerKind::odin:
    case ScorerKind::mahalanobis_layer:
      return Orientation::higher_is_in;
  }
  return Orientation::higher_is_in;
}

bool ScorerSpec::layer_wise() const noexcept {
  return kind == ScorerKind::fr_layer || kind == ScorerKind::fr_layer_ood || kind == ScorerKind::mahalanobis_layer;
}

void ScorerSpec::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("scorer temperature must be > 0");
  if (layer_wise() != layer_index.has_value()) {
    throw ConfigError(std::string("scorer ") + to_string(kind) +
                      (layer_wise() ? " needs a layer index" : " does not take a layer index"));
  }
}

std::string ScorerSpec::name() const {
  switch (kind) {
    case ScorerKind::fr0:
    case ScorerKind::kl0:
      return std::string(to_string(kind)) + "_" + to_string(aggregation);
    case ScorerKind::fr_layer:
    case ScorerKind::fr_layer_ood:
      return std::string(to_string(kind)) + "_" + std::to_string(layer_index.value_or(0));
    case ScorerKind::mahalanobis_layer:
      return "mahalanobis_" + std::to_string(layer_index.value_or(0));
    default:
      return to_string(kind);
  }
}

void ScoreTable::add(std::string name, std::vector<double> values, Orientation orientation) {
  if (!columns_.empty() && values.size() != n_) {
    throw ShapeError("ScoreTable: column '" + name + "' has " + std::to_string(values.size()) + " rows, expected " +
                     std::to_string(n_));
  }
  for (const auto& c : columns_) {
    if (c.name == name) throw InvalidInputError("ScoreTable: duplicate column '" + name + "'");
  }
  n_ = values.size();
  columns_.push_back({std::move(name), std::move(values), orientation});
}

const ScoreTable::Column& ScoreTable::column(const std::string& name) const {
  for (const auto& c : columns_) {
    if (c.name == name) return c;
  }
  throw InvalidInputError("ScoreTable: no column '" + name + "'");
}

Matrix ScoreTable::values() const {
  Matrix m(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(columns_.size()));
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    for (std::size_t i = 0; i < n_; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = columns_[j].values[i];
  }
  return m;
}

Matrix centroid_probs(const CentroidSet& centroids, double temperature) {
  require_temperature(temperature, "centroid_probs");
  const Eigen::Index c = centroids.num_classes();
  if (centroids.centroids.cols() != c) throw ShapeError("centroid_probs: centroid matrix must be C x C");
  Matrix probs(c, c);
  for (Eigen::Index y = 0; y < c; ++y) {
    probs.row(y) = softmax(centroids.centroids.row(y).transpose(), temperature).values().transpose();
  }
  return probs;
}

double score_fr0(const VecRef& logits, const CentroidSet& centroids, double temperature, Aggregation aggregation) {
  require_logits(logits, centroids, "score_fr0");
  const Matrix probs = centroid_probs(centroids, temperature);
  return detail::fr0_from_probs(as_span(softmax(logits, temperature).values()), probs, aggregation);
}

double score_kl0(const VecRef& logits, const CentroidSet& centroids, double temperature, Aggregation aggregation) {
  require_logits(logits, centroids, "score_kl0");
  const Matrix probs = centroid_probs(centroids, temperature);
  return detail::kl0_from_probs(as_span(softmax(logits, temperature).values()), probs, aggregation);
}

std::uint32_t classify_fr(const VecRef& logits, const CentroidSet& centroids, double temperature) {
  require_logits(logits, centroids, "classify_fr");
  const Matrix probs = centroid_probs(centroids, temperature);
  const Vector p = softmax(logits, temperature).values();
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index y = 0; y < probs.rows(); ++y) {
    const double d = detail::fr_softmax_unchecked(as_span(p), row_span(probs, y));
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(y);
    }
  }
  return best;
}

double score_fr_layer(const VecRef& feature, const FeatureStats& stats, std::size_t layer) {
  const LayerStats& ls = layer_at(stats, layer, feature.size(), "score_fr_layer");
  return detail::fr_layer_unchecked(ref_span(feature), ls);
}

double score_fr_layer_ood(const VecRef& feature, const FeatureStats& stats, const OodStats& ood, std::size_t layer) {
  const LayerStats& ls = layer_at(stats, layer, feature.size(), "score_fr_layer_ood");
  if (layer >= ood.layers.size() || ood.layers[layer].mu.size() != feature.size() ||
      ood.layers[layer].sigma.size() != feature.size()) {
    throw ShapeError("score_fr_layer_ood: OOD statistics do not match layer " + std::to_string(layer));
  }
  return detail::fr_layer_ood_unchecked(ref_span(feature), ls, ood.layers[layer]);
}

double score_baseline(const VecRef& logits, ScorerKind kind, double temperature) {
  require_temperature(temperature, "score_baseline");
  switch (kind) {
    case ScorerKind::msp: return softmax(logits, 1.0).values().maxCoeff();
    case ScorerKind::odin: return softmax(logits, temperature).values().maxCoeff();
    case ScorerKind::energy:
      if (logits.size() < 1 || !logits.allFinite()) throw InvalidInputError("score_baseline: non-finite logits");
      return -temperature * detail::logsumexp(ref_span(logits), temperature);
    default:
      throw InvalidInputError(std::string("score_baseline: ") + to_string(kind) + " is not a baseline scorer");
  }
}

double score_mahalanobis_layer(const VecRef& feature, const Matrix& class_means, const TiedCovariance& cov) {
  if (class_means.cols() != feature.size() || cov.dim() != feature.size() || class_means.rows() < 1) {
    throw ShapeError("score_mahalanobis_layer: feature, class means and covariance dimensions disagree");
  }
  return detail::mahalanobis_layer_unchecked(ref_span(feature), class_means, cov.pseudo_inverse());
}

EnsembleWeights fit_alpha(const ScoreTable& table, std::span<const std::uint8_t> labels, int max_iter) {
  const std::size_t n = table.num_samples();
  const std::size_t m = table.num_columns();
  if (m == 0) throw FitError("fit_alpha: no score columns");
  if (labels.size() != n) throw ShapeError("fit_alpha: label count does not match table rows");
  std::size_t positives = 0;
  for (auto l : labels) {
    if (l > 1) throw InvalidInputError("fit_alpha: labels must be 0 or 1");
    positives += l;
  }
  if (positives == 0 || positives == n) throw FitError("fit_alpha: both label values must be present");
  if (max_iter < 1) throw ConfigError("fit_alpha: max_iter must be >= 1");

  const Matrix raw = table.values();
  if (!raw.allFinite()) throw FitError("fit_alpha: non-finite scores");
  const Vector mean = raw.colwise().mean().transpose();
  Vector scale(m);
  Eigen::MatrixXd x(n, m + 1);
  x.col(m).setOnes();
  for (std::size_t j = 0; j < m; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const auto centered = (raw.col(jj).array() - mean[jj]).eval();
    const double sd = std::sqrt(centered.square().mean());
    if (sd > 1e-12 * std::max(1.0, std::abs(mean[jj]))) {
      scale[jj] = sd;
      x.col(jj) = (centered / sd).matrix();
    } else {
      scale[jj] = 0.0;
      x.col(jj).setZero();
    }
  }
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) y[static_cast<Eigen::Index>(i)] = labels[i];

  const auto dn = static_cast<double>(n);
  Vector penalty = Vector::Constant(static_cast<Eigen::Index>(m + 1), kEnsembleL2);
  penalty[static_cast<Eigen::Index>(m)] = 0.0;

  auto loss_of = [&](const Vector& w) {
    const Vector z = x * w;
    double nll = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      // log(1 + exp(z)) - y z, evaluated without overflow
      const double softplus = z[i] > 0.0 ? z[i] + std::log1p(std::exp(-z[i])) : std::log1p(std::exp(z[i]));
      nll += softplus - y[i] * z[i];
    }
    return nll / dn + 0.5 * (penalty.array() * w.array().square()).sum();
  };

  Vector w = Vector::Zero(static_cast<Eigen::Index>(m + 1));
  double loss = loss_of(w);
  int iter = 0;
  while (iter < max_iter) {
    ++iter;
    const Vector z = x * w;
    const Vector p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
    const Vector grad = x.transpose() * (p - y) / dn + penalty.cwiseProduct(w);
    const Vector curv = (p.array() * (1.0 - p.array())).matrix();
    Eigen::MatrixXd hess = x.transpose() * curv.asDiagonal() * x / dn;
    hess.diagonal() += penalty;
    hess.diagonal().array() += 1e-12;
    const Vector step = hess.ldlt().solve(grad);
    if (!step.allFinite()) throw FitError("fit_alpha: Newton step is not finite");

    double t = 1.0;
    Vector next = w - step;
    double next_loss = loss_of(next);
    while (next_loss > loss && t > 1e-8) {
      t *= 0.5;
      next = w - t * step;
      next_loss = loss_of(next);
    }
    if (next_loss > loss) break;
    const double moved = (t * step).cwiseAbs().maxCoeff();
    w = next;
    loss = next_loss;
    if (moved < 1e-10) break;
  }

  EnsembleWeights out;
  out.alpha = Vector::Zero(static_cast<Eigen::Index>(m));
  out.intercept = w[static_cast<Eigen::Index>(m)];
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(m); ++j) {
    if (scale[j] == 0.0) continue;
    out.alpha[j] = w[j] / scale[j];
    out.intercept -= out.alpha[j] * mean[j];
  }
  out.fitted_iterations = iter;
  return out;
}

double score_ensemble(const VecRef& row, const EnsembleWeights& weights) {
  if (row.size() != weights.alpha.size()) throw ShapeError("score_ensemble: row length does not match weights");
  double acc = weights.intercept;
  for (Eigen::Index j = 0; j < row.size(); ++j) acc += weights.alpha[j] * row[j];
  return acc;
}

std::vector<double> score_ensemble(const ScoreTable& table, const EnsembleWeights& weights) {
  if (table.num_columns() != static_cast<std::size_t>(weights.alpha.size())) {
    throw ShapeError("score_ensemble: column count does not match weights");
  }
  std::vector<double> out(table.num_samples());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = weights.intercept;
    for (std::size_t j = 0; j < table.num_columns(); ++j) {
      acc += weights.alpha[static_cast<Eigen::Index>(j)] * table.columns()[j].values[i];
    }
    out[i] = acc;
  }
  return out;
}

namespace detail {

double logsumexp(std::span<const double> v, double temperature) {
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp((x - m) / temperature);
  return m / temperature + std::log(sum);
}

double fr0_from_probs(std::span<const double> p, const Matrix& probs, Aggregation aggregation) {
  return aggregate(p, probs, aggregation, fr_softmax_unchecked);
}

double kl0_from_probs(std::span<const double> p, const Matrix& probs, Aggregation aggregation) {
  return aggregate(p, probs, aggregation, kl_unchecked);
}

double fr_layer_unchecked(std::span<const double> feature, const LayerStats& layer) {
  const auto sigma = as_span(layer.tied_sigma);
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index y = 0; y < layer.class_means.rows(); ++y) {
    best = std::min(best, fr_gauss_diag_sq(feature, sigma, row_span(layer.class_means, y), sigma));
  }
  return std::sqrt(best);
}

double fr_layer_ood_unchecked(std::span<const double> feature, const LayerStats& layer, const OodLayerStats& ood) {
  return std::sqrt(fr_gauss_diag_sq(feature, as_span(layer.tied_sigma), as_span(ood.mu), as_span(ood.sigma)));
}

double mahalanobis_layer_unchecked(std::span<const double> feature, const Matrix& class_means,
                                   const Eigen::MatrixXd& pinv) {
  const Eigen::Index k = class_means.cols();
  const Eigen::Map<const Vector> f(feature.data(), k);
  double best = -std::numeric_limits<double>::infinity();
  Vector d(k);
  for (Eigen::Index y = 0; y < class_means.rows(); ++y) {
    d = f - class_means.row(y).transpose();
    best = std::max(best, -d.dot(pinv * d));
  }
  return best;
}

}  // namespace detail

}  // namespace igeood
