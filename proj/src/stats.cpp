#include "igeood/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "igeood/error.hpp"

namespace igeood {

namespace {

std::vector<std::vector<Eigen::Index>> group_by_class(std::span<const std::uint32_t> labels,
                                                      std::uint32_t num_classes) {
  std::vector<std::vector<Eigen::Index>> groups(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<Eigen::Index>(i));
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    if (groups[c].empty()) throw FitError("class " + std::to_string(c) + " has no samples");
  }
  return groups;
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
  Matrix probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    probs.row(i) = softmax(logits.row(i).transpose(), temperature).values().transpose();
  }
  return probs;
}

// Per-class objective and gradient over a subset of sample rows, summed in the
// order the indices are given and divided by their count.
double objective_on(const Matrix& probs, std::span<const Eigen::Index> rows, const Vector& q,
                    FitDistance distance) {
  double acc = 0.0;
  const auto qs = detail::as_span(q);
  for (Eigen::Index i : rows) {
    std::span<const double> p(probs.row(i).data(), static_cast<std::size_t>(probs.cols()));
    acc += distance == FitDistance::fisher_rao ? detail::fr_softmax_unchecked(p, qs) : detail::kl_unchecked(p, qs);
  }
  return acc / static_cast<double>(rows.size());
}

Vector gradient_on(const Matrix& probs, std::span<const Eigen::Index> rows, const Vector& q, double temperature,
                   FitDistance distance) {
  const Eigen::Index c = q.size();
  Vector grad = Vector::Zero(c);
  Vector s(c);
  for (Eigen::Index i : rows) {
    const auto p = probs.row(i).transpose();
    if (distance == FitDistance::kl) {
      grad += q - p;
      continue;
    }
    const double gap = detail::hellinger_chord_sq({p.data(), static_cast<std::size_t>(c)}, {q.data(), static_cast<std::size_t>(c)}) / 2.0;
    if (gap <= 0.0 || gap >= 1.0) continue;
    s = (p.array() * q.array()).sqrt().matrix();
    const double bc = 1.0 - gap;
    // d/dz_k of 2 acos(B) with B = sum_j sqrt(p_j q_j), q = softmax(z):
    // -2 / sqrt(1 - B^2) * (s_k - q_k B) / 2
    const double factor = -1.0 / std::sqrt(gap * (1.0 + bc));
    grad += factor * (s - q * bc);
  }
  return grad / (temperature * static_cast<double>(rows.size()));
}

std::vector<Eigen::Index> all_rows_of(const LabeledLogits& data, std::uint32_t cls) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (data.labels[i] == cls) rows.push_back(static_cast<Eigen::Index>(i));
  }
  if (rows.empty()) throw FitError("class " + std::to_string(cls) + " has no samples");
  return rows;
}

Matrix rows_of(const Matrix& m, std::span<const Eigen::Index> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

void LabeledLogits::validate() const {
  if (logits.rows() < 1) throw InvalidInputError("LabeledLogits: need at least one sample");
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw InvalidInputError("LabeledLogits: label count does not match logits rows");
  }
  if (!logits.allFinite()) throw InvalidInputError("LabeledLogits: non-finite logits");
  for (auto y : labels) {
    if (y >= logits.cols()) throw InvalidInputError("LabeledLogits: label " + std::to_string(y) + " out of range");
  }
}

void LabeledFeatures::validate() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (static_cast<std::size_t>(layers[l].rows()) != labels.size()) {
      throw InvalidInputError("LabeledFeatures: layer " + std::to_string(l) + " row count does not match labels");
    }
    if (!layers[l].allFinite()) throw InvalidInputError("LabeledFeatures: layer " + std::to_string(l) + " has non-finite values");
  }
  for (auto y : labels) {
    if (y >= num_classes) throw InvalidInputError("LabeledFeatures: label " + std::to_string(y) + " out of range");
  }
}

double centroid_objective(const LabeledLogits& data, std::uint32_t cls, const VecRef& centroid, double temperature,
                          FitDistance distance) {
  data.validate();
  if (centroid.size() != data.num_classes()) throw ShapeError("centroid_objective: centroid length must equal C");
  const auto rows = all_rows_of(data, cls);
  const Matrix probs = softmax_rows(rows_of(data.logits, rows), temperature);
  std::vector<Eigen::Index> local(rows.size());
  std::iota(local.begin(), local.end(), Eigen::Index{0});
  return objective_on(probs, local, softmax(centroid, temperature).values(), distance);
}

Vector centroid_objective_gradient(const LabeledLogits& data, std::uint32_t cls, const VecRef& centroid,
                                   double temperature, FitDistance distance) {
  data.validate();
  if (centroid.size() != data.num_classes()) throw ShapeError("centroid_objective_gradient: centroid length must equal C");
  const auto rows = all_rows_of(data, cls);
  const Matrix probs = softmax_rows(rows_of(data.logits, rows), temperature);
  std::vector<Eigen::Index> local(rows.size());
  std::iota(local.begin(), local.end(), Eigen::Index{0});
  return gradient_on(probs, local, softmax(centroid, temperature).values(), temperature, distance);
}

CentroidSet fit_centroids(const LabeledLogits& data, const CentroidFitConfig& cfg) {
  data.validate();
  if (!(cfg.learning_rate > 0.0) || cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.temperature > 0.0)) {
    throw ConfigError("fit_centroids: learning_rate, batch_size and temperature must be positive");
  }
  const auto num_classes = static_cast<std::uint32_t>(data.num_classes());
  auto groups = group_by_class(data.labels, num_classes);
  const Matrix probs = softmax_rows(data.logits, cfg.temperature);

  CentroidSet out;
  out.fit_distance = cfg.distance;
  out.centroids = Matrix::Identity(num_classes, num_classes);

  std::vector<double> step(num_classes, cfg.learning_rate);
  std::vector<double> best(num_classes);
  auto q_of = [&](std::uint32_t c) {
    return softmax(out.centroids.row(c).transpose(), cfg.temperature).values();
  };
  auto mean_loss = [&] { return std::accumulate(best.begin(), best.end(), 0.0) / num_classes; };

  for (std::uint32_t c = 0; c < num_classes; ++c) best[c] = objective_on(probs, groups[c], q_of(c), cfg.distance);
  out.loss_history.push_back(mean_loss());

  std::mt19937_64 rng(cfg.seed);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::uint32_t c = 0; c < num_classes; ++c) {
      const Vector start = out.centroids.row(c).transpose();
      Vector mu = start;
      auto& rows = groups[c];
      if (cfg.full_batch) {
        const Vector g = gradient_on(probs, rows, softmax(mu, cfg.temperature).values(), cfg.temperature, cfg.distance);
        if (!g.allFinite()) throw FitError("fit_centroids: non-finite gradient for class " + std::to_string(c));
        mu -= step[c] * g;
      } else {
        std::shuffle(rows.begin(), rows.end(), rng);
        const auto bs = static_cast<std::size_t>(cfg.batch_size);
        for (std::size_t lo = 0; lo < rows.size(); lo += bs) {
          const std::span<const Eigen::Index> batch(rows.data() + lo, std::min(bs, rows.size() - lo));
          const Vector g = gradient_on(probs, batch, softmax(mu, cfg.temperature).values(), cfg.temperature, cfg.distance);
          if (!g.allFinite()) throw FitError("fit_centroids: non-finite gradient for class " + std::to_string(c));
          mu -= step[c] * g;
        }
      }
      if (!mu.allFinite()) throw FitError("fit_centroids: centroid diverged for class " + std::to_string(c));
      const double loss = objective_on(probs, groups[c], softmax(mu, cfg.temperature).values(), cfg.distance);
      if (loss <= best[c]) {
        best[c] = loss;
        out.centroids.row(c) = mu.transpose();
      } else {
        step[c] *= 0.5;
      }
    }
    out.loss_history.push_back(mean_loss());
  }
  out.final_loss = out.loss_history.back();
  return out;
}

FeatureStats fit_gaussian_stats(const LabeledFeatures& data) {
  data.validate();
  if (data.num_classes == 0) throw FitError("fit_gaussian_stats: no classes");
  const auto groups = group_by_class(data.labels, data.num_classes);
  const double n = static_cast<double>(data.labels.size());

  FeatureStats stats;
  stats.layers.reserve(data.layers.size());
  for (const Matrix& f : data.layers) {
    LayerStats ls;
    ls.class_means = Matrix::Zero(data.num_classes, f.cols());
    for (std::uint32_t c = 0; c < data.num_classes; ++c) {
      for (Eigen::Index i : groups[c]) ls.class_means.row(c) += f.row(i);
      ls.class_means.row(c) /= static_cast<double>(groups[c].size());
    }
    Vector ss = Vector::Zero(f.cols());
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      ss += (f.row(i) - ls.class_means.row(data.labels[i])).array().square().matrix().transpose();
    }
    ls.tied_sigma = (ss / n).cwiseSqrt().cwiseMax(kSigmaFloor);
    stats.layers.push_back(std::move(ls));
  }
  return stats;
}

OodStats fit_ood_stats(std::span<const Matrix> ood_features) {
  OodStats stats;
  for (std::size_t l = 0; l < ood_features.size(); ++l) {
    const Matrix& f = ood_features[l];
    if (f.rows() < 2) throw FitError("fit_ood_stats: layer " + std::to_string(l) + " needs at least 2 OOD samples");
    if (!f.allFinite()) throw FitError("fit_ood_stats: layer " + std::to_string(l) + " has non-finite values");
    OodLayerStats ls;
    ls.mu = f.colwise().mean().transpose();
    const Matrix centered = f.rowwise() - ls.mu.transpose();
    ls.sigma = (centered.array().square().colwise().sum() / static_cast<double>(f.rows()))
                   .sqrt()
                   .matrix()
                   .transpose()
                   .cwiseMax(kSigmaFloor);
    stats.layers.push_back(std::move(ls));
  }
  return stats;
}

TiedGaussianLayer fit_tied_gaussian(const Matrix& features, std::span<const std::uint32_t> labels,
                                    std::uint32_t num_classes) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ShapeError("fit_tied_gaussian: label count does not match feature rows");
  }
  for (auto y : labels) {
    if (y >= num_classes) throw InvalidInputError("fit_tied_gaussian: label out of range");
  }
  const auto groups = group_by_class(labels, num_classes);
  Matrix means = Matrix::Zero(num_classes, features.cols());
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    for (Eigen::Index i : groups[c]) means.row(c) += features.row(i);
    means.row(c) /= static_cast<double>(groups[c].size());
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(features.cols(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Vector d = (features.row(i) - means.row(labels[i])).transpose();
    cov.selfadjointView<Eigen::Lower>().rankUpdate(d);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(features.rows());
  return {std::move(means), TiedCovariance(std::move(cov))};
}

Vector avg_pool_spatial(std::span<const double> tensor, Eigen::Index channels, Eigen::Index width,
                        Eigen::Index height) {
  if (channels < 1 || width < 1 || height < 1) throw ShapeError("avg_pool_spatial: empty dimension");
  if (static_cast<Eigen::Index>(tensor.size()) != channels * width * height) {
    throw ShapeError("avg_pool_spatial: tensor size does not match F x W x H");
  }
  const Eigen::Index plane = width * height;
  Vector out(channels);
  for (Eigen::Index f = 0; f < channels; ++f) {
    const auto* base = tensor.data() + f * plane;
    out[f] = std::accumulate(base, base + plane, 0.0) / static_cast<double>(plane);
  }
  return out;
}

CovarianceDiagnostics covariance_diagnostics(const Matrix& features) {
  if (features.rows() < 2) throw FitError("covariance_diagnostics: need at least 2 samples");
  const Eigen::MatrixXd centered = features.rowwise() - features.colwise().mean();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(features.rows());
  cov = 0.5 * (cov + cov.transpose());

  auto inf_norm = [](const Eigen::MatrixXd& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); };

  CovarianceDiagnostics out;
  const TiedCovariance full(cov);
  out.condition_number_full = inf_norm(full.pseudo_inverse()) * inf_norm(cov);

  const Eigen::MatrixXd diag = cov.diagonal().asDiagonal();
  out.condition_number_diag = inf_norm(pseudo_inverse(diag)) * inf_norm(diag);

  Eigen::Index dominant = 0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    const double d = std::abs(cov(i, i));
    const double off = cov.row(i).cwiseAbs().sum() - d;
    if (d >= off) ++dominant;
  }
  out.diag_dominant_row_fraction = static_cast<double>(dominant) / static_cast<double>(cov.rows());
  return out;
}

}  // namespace igeood
