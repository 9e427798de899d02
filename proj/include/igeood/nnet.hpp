#pragma once

// Small fully-connected classifier with smooth activations. Supplies logits and
// hidden-layer features, input gradients for score pre-processing, and FGSM
// adversarial inputs.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "igeood/scoring.hpp"
#include "igeood/stats.hpp"
#include "igeood/types.hpp"

namespace igeood {

enum class Activation { tanh, softplus };

const char* to_string(Activation a);
Activation parse_activation(const std::string& name);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Vector bias;             // out
};

struct MlpParams {
  std::vector<int> layer_sizes;  // input d, hidden..., output C
  std::vector<DenseLayer> layers;
  Activation activation = Activation::tanh;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  std::size_t num_hidden() const { return layers.empty() ? 0 : layers.size() - 1; }
  /// Throws InvalidInputError when dimensions chain incorrectly or parameters are non-finite.
  void validate() const;
};

struct TrainConfig {
  std::vector<int> hidden_sizes{16, 16};
  Activation activation = Activation::tanh;
  double learning_rate = 0.1;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double l2 = 0.0;
};

struct ForwardResult {
  Vector logits;
  std::vector<Vector> hidden;  // post-activation output of each hidden layer
};

/// Weights drawn from N(0, 1/fan_in), zero biases.
MlpParams init_mlp(std::vector<int> layer_sizes, Activation activation, std::uint64_t seed);

Vector forward(const MlpParams& params, const VecRef& x);
ForwardResult forward_with_features(const MlpParams& params, const VecRef& x);

/// Row-wise forward pass over an N x d matrix; hidden features are returned one matrix per layer.
struct BatchForward {
  Matrix logits;
  std::vector<Matrix> hidden;
};
BatchForward forward_batch(const MlpParams& params, const Matrix& x);

/// Mean cross-entropy plus (l2 / 2) times the squared weight norm. When `grad` is
/// non-null it receives the gradient with the same layout as params.layers.
double loss_and_gradient(const MlpParams& params, const Matrix& x, std::span<const std::uint32_t> labels, double l2,
                         std::vector<DenseLayer>* grad = nullptr);

/// Seeded mini-batch SGD on cross-entropy. An epoch that raises the full-data loss is
/// undone and the step size halved, so the final loss never exceeds the initial one.
MlpParams train(const Matrix& x, std::span<const std::uint32_t> labels, const TrainConfig& cfg);

/// Back-propagates d(loss)/d(logits) supplied by `dlogits` to the input.
Vector input_gradient(const MlpParams& params, const VecRef& x,
                      const std::function<Vector(const Vector& logits)>& dlogits);

/// Gradient of score_fr0(forward(x)) with respect to x.
Vector grad_input_fr0(const MlpParams& params, const VecRef& x, const CentroidSet& centroids, double temperature,
                      Aggregation aggregation = Aggregation::sum);

/// Gradient of the cross-entropy loss at label y with respect to x.
Vector grad_input_loss(const MlpParams& params, const VecRef& x, std::uint32_t y);

/// d score_fr0 / d logits at the given logits.
Vector fr0_logit_gradient(const Vector& logits, const Matrix& centroid_probs, double temperature,
                          Aggregation aggregation);

/// x + eps * sign(grad), with sign(0) = 0.
Vector preprocess_input(const VecRef& x, double eps, const VecRef& grad);

/// x + eps_adv * sign(grad_x cross-entropy(x, y)).
Vector fgsm_generate(const MlpParams& params, const VecRef& x, std::uint32_t y, double eps_adv);

}  // namespace igeood
