#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sepdetect/data.hpp"
#include "sepdetect/numerics.hpp"

namespace sepdetect {

struct Layer {
  Matrix weights;  // out x in
  Vector biases;   // out

  friend bool operator==(const Layer&, const Layer&) = default;
};

// Feed-forward classifier: rectifier on every hidden layer, identity on the
// output layer. The last hidden activation is the feature space Z.
struct ModelParams {
  std::vector<Layer> layers;

  // [D, h_1, ..., h_m, K]
  std::vector<std::size_t> dims() const;
  std::size_t input_dim() const { return layers.front().weights.cols(); }
  std::size_t num_classes() const { return layers.back().weights.rows(); }
  std::size_t z_dim() const { return layers.back().weights.cols(); }

  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

void validate_dims(std::span<const std::size_t> dims);

// He-normal weights (std sqrt(2 / fan_in)), zero biases.
ModelParams init_model(std::span<const std::size_t> dims, Rng& rng);

struct ForwardTrace {
  // activations[0] is the input; activations[l] = relu(pre_activations[l-1]).
  std::vector<Vector> pre_activations;
  std::vector<Vector> activations;
  Vector z;
  Vector logits;
  Vector probs;
};

ForwardTrace forward(const ModelParams& params, std::span<const double> x);

struct LayerGradient {
  Matrix d_weights;
  Vector d_biases;
};

struct Gradients {
  std::vector<LayerGradient> layers;
  Vector dx;

  static Gradients zeros_like(const ModelParams& params);
  void accumulate(const Gradients& other);
  void scale(double factor);
  // L2 norm over all parameter gradients (dx excluded).
  double global_norm() const;
};

// Exact gradients of a scalar loss whose gradient w.r.t. the logits is
// `d_logits` and whose direct gradient w.r.t. Z is `d_z`. d_z joins the
// backpropagated signal at the last hidden layer.
Gradients backward(const ModelParams& params, const ForwardTrace& trace,
                   std::span<const double> d_logits, std::span<const double> d_z);

Label predict(const ModelParams& params, std::span<const double> x);

// Z(x) for every row of the dataset.
Matrix compute_z(const ModelParams& params, const LabeledDataset& ds);

double accuracy(const ModelParams& params, const LabeledDataset& ds);

// params -= learning_rate * grads
void apply_update(ModelParams& params, const Gradients& grads, double learning_rate);

}  // namespace sepdetect
