#include "igeood/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "igeood/error.hpp"

namespace igeood {

namespace {

double act(Activation a, double z) {
  if (a == Activation::tanh) return std::tanh(z);
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Derivative expressed through the pre-activation.
double act_prime(Activation a, double z) {
  if (a == Activation::tanh) {
    const double t = std::tanh(z);
    return 1.0 - t * t;
  }
  return 1.0 / (1.0 + std::exp(-z));
}

void require_input(const MlpParams& params, Eigen::Index n, const char* what) {
  if (params.layers.empty() || n != params.input_dim()) {
    throw ShapeError(std::string(what) + ": input length " + std::to_string(n) + " does not match the network input " +
                     std::to_string(params.layers.empty() ? 0 : params.input_dim()));
  }
}

struct Tape {
  std::vector<Vector> pre;   // pre-activation per layer
  std::vector<Vector> post;  // post[0] = x, post[l + 1] = output of layer l
};

Tape record(const MlpParams& params, const VecRef& x) {
  Tape tape;
  tape.post.push_back(x);
  const std::size_t n = params.layers.size();
  for (std::size_t l = 0; l < n; ++l) {
    const DenseLayer& layer = params.layers[l];
    Vector z = layer.weight * tape.post.back() + layer.bias;
    Vector a = z;
    if (l + 1 < n) {
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = act(params.activation, z[i]);
    }
    tape.pre.push_back(std::move(z));
    tape.post.push_back(std::move(a));
  }
  return tape;
}

Vector softmax_vec(const Vector& v) { return softmax(v, 1.0).values(); }

using ColMatrix = Eigen::MatrixXd;

}  // namespace

const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "softplus"; }

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus") return Activation::softplus;
  throw ConfigError("unknown activation '" + name + "'");
}

void MlpParams::validate() const {
  if (layer_sizes.size() < 2) throw InvalidInputError("MlpParams: need at least input and output sizes");
  if (layers.size() + 1 != layer_sizes.size()) throw InvalidInputError("MlpParams: layer count does not match sizes");
  for (int s : layer_sizes) {
    if (s < 1) throw InvalidInputError("MlpParams: layer sizes must be positive");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weight.rows() != layer_sizes[l + 1] || layer.weight.cols() != layer_sizes[l] ||
        layer.bias.size() != layer_sizes[l + 1]) {
      throw InvalidInputError("MlpParams: layer " + std::to_string(l) + " has inconsistent dimensions");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw InvalidInputError("MlpParams: layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
}

MlpParams init_mlp(std::vector<int> layer_sizes, Activation activation, std::uint64_t seed) {
  MlpParams params;
  params.layer_sizes = std::move(layer_sizes);
  params.activation = activation;
  if (params.layer_sizes.size() < 2) throw ConfigError("init_mlp: need at least input and output sizes");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < params.layer_sizes.size(); ++l) {
    const int in = params.layer_sizes[l];
    const int out = params.layer_sizes[l + 1];
    if (in < 1 || out < 1) throw ConfigError("init_mlp: layer sizes must be positive");
    DenseLayer layer;
    layer.weight.resize(out, in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weight(r, c) = scale * normal(rng);
    }
    layer.bias = Vector::Zero(out);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Vector forward(const MlpParams& params, const VecRef& x) { return forward_with_features(params, x).logits; }

ForwardResult forward_with_features(const MlpParams& params, const VecRef& x) {
  require_input(params, x.size(), "forward");
  Tape tape = record(params, x);
  ForwardResult out;
  out.logits = std::move(tape.post.back());
  for (std::size_t l = 1; l + 1 < tape.post.size(); ++l) out.hidden.push_back(std::move(tape.post[l]));
  return out;
}

BatchForward forward_batch(const MlpParams& params, const Matrix& x) {
  require_input(params, x.cols(), "forward_batch");
  BatchForward out;
  out.logits.resize(x.rows(), params.output_dim());
  for (std::size_t l = 0; l < params.num_hidden(); ++l) out.hidden.emplace_back(x.rows(), params.layer_sizes[l + 1]);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    ForwardResult r = forward_with_features(params, x.row(i).transpose());
    out.logits.row(i) = r.logits.transpose();
    for (std::size_t l = 0; l < r.hidden.size(); ++l) out.hidden[l].row(i) = r.hidden[l].transpose();
  }
  return out;
}

double loss_and_gradient(const MlpParams& params, const Matrix& x, std::span<const std::uint32_t> labels, double l2,
                         std::vector<DenseLayer>* grad) {
  require_input(params, x.cols(), "loss_and_gradient");
  if (static_cast<std::size_t>(x.rows()) != labels.size() || x.rows() == 0) {
    throw ShapeError("loss_and_gradient: label count does not match rows");
  }
  const std::size_t n_layers = params.layers.size();
  const auto n = static_cast<double>(x.rows());

  // Column-major batch: one column per sample.
  std::vector<ColMatrix> pre;
  std::vector<ColMatrix> post{x.transpose()};
  for (std::size_t l = 0; l < n_layers; ++l) {
    const DenseLayer& layer = params.layers[l];
    ColMatrix z = (layer.weight * post.back()).colwise() + layer.bias;
    ColMatrix a = z;
    if (l + 1 < n_layers) a = z.unaryExpr([&](double v) { return act(params.activation, v); });
    pre.push_back(std::move(z));
    post.push_back(std::move(a));
  }

  const ColMatrix& logits = post.back();
  ColMatrix delta(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const Vector f = logits.col(i);
    const double lse = detail::logsumexp(detail::as_span(f), 1.0);
    const std::uint32_t y = labels[static_cast<std::size_t>(i)];
    if (y >= f.size()) throw InvalidInputError("loss_and_gradient: label out of range");
    loss += lse - f[y];
    delta.col(i) = (f.array() - lse).exp().matrix();
    delta(y, i) -= 1.0;
  }
  loss /= n;
  delta /= n;

  double wsq = 0.0;
  for (const auto& layer : params.layers) wsq += layer.weight.squaredNorm();
  loss += 0.5 * l2 * wsq;

  if (grad != nullptr) {
    grad->assign(n_layers, {});
    for (std::size_t l = n_layers; l-- > 0;) {
      (*grad)[l].weight = delta * post[l].transpose() + l2 * params.layers[l].weight;
      (*grad)[l].bias = delta.rowwise().sum();
      if (l == 0) break;
      ColMatrix back = params.layers[l].weight.transpose() * delta;
      delta = back.cwiseProduct(pre[l - 1].unaryExpr([&](double v) { return act_prime(params.activation, v); }));
    }
  }
  return loss;
}

MlpParams train(const Matrix& x, std::span<const std::uint32_t> labels, const TrainConfig& cfg) {
  if (x.rows() < 1 || static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw FitError("train: need one label per sample and at least one sample");
  }
  if (!x.allFinite()) throw FitError("train: non-finite inputs");
  if (!(cfg.learning_rate > 0.0) || cfg.epochs < 0 || cfg.batch_size < 1 || cfg.l2 < 0.0) {
    throw ConfigError("train: learning_rate and batch_size must be positive, epochs and l2 non-negative");
  }
  const std::uint32_t num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto y : labels) ++counts[y];
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
    throw FitError("train: need samples from at least 2 classes");
  }

  std::vector<int> sizes{static_cast<int>(x.cols())};
  sizes.insert(sizes.end(), cfg.hidden_sizes.begin(), cfg.hidden_sizes.end());
  sizes.push_back(static_cast<int>(num_classes));
  MlpParams params = init_mlp(sizes, cfg.activation, cfg.seed);

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  double lr = cfg.learning_rate;
  double loss = loss_and_gradient(params, x, labels, cfg.l2);
  std::vector<DenseLayer> grad;
  Matrix batch_x;
  std::vector<std::uint32_t> batch_y;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    MlpParams candidate = params;
    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      batch_x.resize(static_cast<Eigen::Index>(hi - lo), x.cols());
      batch_y.resize(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) {
        batch_x.row(static_cast<Eigen::Index>(i - lo)) = x.row(order[i]);
        batch_y[i - lo] = labels[static_cast<std::size_t>(order[i])];
      }
      loss_and_gradient(candidate, batch_x, batch_y, cfg.l2, &grad);
      for (std::size_t l = 0; l < grad.size(); ++l) {
        candidate.layers[l].weight -= lr * grad[l].weight;
        candidate.layers[l].bias -= lr * grad[l].bias;
      }
    }
    const double next = loss_and_gradient(candidate, x, labels, cfg.l2);
    if (!std::isfinite(next)) throw FitError("train: loss became non-finite");
    if (next <= loss) {
      params = std::move(candidate);
      loss = next;
    } else {
      lr *= 0.5;
    }
  }
  return params;
}

Vector input_gradient(const MlpParams& params, const VecRef& x,
                      const std::function<Vector(const Vector& logits)>& dlogits) {
  require_input(params, x.size(), "input_gradient");
  const Tape tape = record(params, x);
  Vector delta = dlogits(tape.post.back());
  if (delta.size() != params.output_dim()) throw ShapeError("input_gradient: logit gradient has the wrong length");
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    Vector back = params.layers[l].weight.transpose() * delta;
    if (l == 0) return back;
    for (Eigen::Index i = 0; i < back.size(); ++i) back[i] *= act_prime(params.activation, tape.pre[l - 1][i]);
    delta = std::move(back);
  }
  return delta;
}

Vector fr0_logit_gradient(const Vector& logits, const Matrix& probs, double temperature, Aggregation aggregation) {
  const Vector p = softmax(logits, temperature).values();
  const Eigen::Index c = p.size();
  Vector grad = Vector::Zero(c);
  Eigen::Index only = -1;
  if (aggregation == Aggregation::min) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index y = 0; y < probs.rows(); ++y) {
      const double d = detail::fr_softmax_unchecked(detail::as_span(p), {probs.row(y).data(), static_cast<std::size_t>(c)});
      if (d < best) {
        best = d;
        only = y;
      }
    }
  }
  Vector s(c);
  for (Eigen::Index y = 0; y < probs.rows(); ++y) {
    if (only >= 0 && y != only) continue;
    const double gap = detail::hellinger_chord_sq(detail::as_span(p), {probs.row(y).data(), static_cast<std::size_t>(c)}) / 2.0;
    if (gap <= 0.0 || gap >= 1.0) continue;
    s = (p.array() * probs.row(y).transpose().array()).sqrt().matrix();
    const double bc = 1.0 - gap;
    grad -= (s - p * bc) / std::sqrt(gap * (1.0 + bc));
  }
  return grad / temperature;
}

Vector grad_input_fr0(const MlpParams& params, const VecRef& x, const CentroidSet& centroids, double temperature,
                      Aggregation aggregation) {
  if (centroids.num_classes() != params.output_dim()) {
    throw ShapeError("grad_input_fr0: centroid count does not match the network output");
  }
  const Matrix probs = centroid_probs(centroids, temperature);
  return input_gradient(params, x, [&](const Vector& logits) {
    return fr0_logit_gradient(logits, probs, temperature, aggregation);
  });
}

Vector grad_input_loss(const MlpParams& params, const VecRef& x, std::uint32_t y) {
  if (params.layers.empty() || y >= static_cast<std::uint32_t>(params.output_dim())) {
    throw DomainError("grad_input_loss: label " + std::to_string(y) + " out of range");
  }
  return input_gradient(params, x, [&](const Vector& logits) {
    Vector g = softmax_vec(logits);
    g[y] -= 1.0;
    return g;
  });
}

Vector preprocess_input(const VecRef& x, double eps, const VecRef& grad) {
  if (!(eps >= 0.0)) throw DomainError("preprocess_input: eps must be >= 0");
  if (x.size() != grad.size()) throw ShapeError("preprocess_input: gradient length does not match input");
  Vector out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (grad[i] > 0.0) {
      out[i] += eps;
    } else if (grad[i] < 0.0) {
      out[i] -= eps;
    }
  }
  return out;
}

Vector fgsm_generate(const MlpParams& params, const VecRef& x, std::uint32_t y, double eps_adv) {
  if (!(eps_adv >= 0.0)) throw DomainError("fgsm_generate: eps_adv must be >= 0");
  return preprocess_input(x, eps_adv, grad_input_loss(params, x, y));
}

}  // namespace igeood
