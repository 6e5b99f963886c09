#include "sepdetect/model.hpp"

#include <cmath>
#include <string>

#include "sepdetect/error.hpp"

namespace sepdetect {

namespace {

void check_length(std::span<const double> v, std::size_t expected, const char* what) {
  if (v.size() != expected) {
    throw ValidationError(std::string(what) + " has length " + std::to_string(v.size()) +
                          ", expected " + std::to_string(expected));
  }
}

}  // namespace

void validate_dims(std::span<const std::size_t> dims) {
  if (dims.size() < 3) {
    throw ValidationError("model needs at least one hidden layer: dims = [D, h..., K]");
  }
  for (std::size_t d : dims) {
    if (d < 1) throw ValidationError("model dims must all be >= 1");
  }
}

std::vector<std::size_t> ModelParams::dims() const {
  std::vector<std::size_t> out;
  if (layers.empty()) return out;
  out.push_back(layers.front().weights.cols());
  for (const auto& l : layers) out.push_back(l.weights.rows());
  return out;
}

void ModelParams::validate() const {
  if (layers.size() < 2) throw ValidationError("model needs at least one hidden layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weights.rows() == 0 || l.weights.cols() == 0) {
      throw ValidationError("layer " + std::to_string(i) + " has an empty weight matrix");
    }
    if (l.biases.size() != l.weights.rows()) {
      throw ValidationError("layer " + std::to_string(i) + " bias length mismatch");
    }
    if (i > 0 && l.weights.cols() != layers[i - 1].weights.rows()) {
      throw ValidationError("layer " + std::to_string(i) + " input width does not chain");
    }
    require_finite(l.weights.values(), "layer weights");
    require_finite(l.biases, "layer biases");
  }
}

ModelParams init_model(std::span<const std::size_t> dims, Rng& rng) {
  validate_dims(dims);
  ModelParams params;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t fan_in = dims[i];
    const std::size_t fan_out = dims[i + 1];
    Layer layer;
    layer.weights = Matrix(fan_out, fan_in,
                           gaussian_sample(rng, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)),
                                           fan_out * fan_in));
    layer.biases.assign(fan_out, 0.0);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ForwardTrace forward(const ModelParams& params, std::span<const double> x) {
  if (params.layers.empty()) throw ValidationError("forward through an empty model");
  check_length(x, params.input_dim(), "input");
  require_finite(x, "input");

  ForwardTrace t;
  t.activations.emplace_back(x.begin(), x.end());
  const std::size_t n_layers = params.layers.size();
  for (std::size_t li = 0; li < n_layers; ++li) {
    const auto& layer = params.layers[li];
    const Vector& in = t.activations.back();
    Vector pre(layer.weights.rows());
    for (std::size_t o = 0; o < pre.size(); ++o) {
      double s = layer.biases[o];
      const auto w = layer.weights.row(o);
      for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * in[k];
      pre[o] = s;
    }
    if (li + 1 == n_layers) {
      t.logits = pre;
      t.pre_activations.push_back(std::move(pre));
    } else {
      Vector act(pre.size());
      for (std::size_t o = 0; o < pre.size(); ++o) act[o] = pre[o] > 0.0 ? pre[o] : 0.0;
      t.pre_activations.push_back(std::move(pre));
      t.activations.push_back(std::move(act));
    }
  }
  t.z = t.activations.back();
  t.probs = stable_softmax(t.logits);
  return t;
}

Gradients Gradients::zeros_like(const ModelParams& params) {
  Gradients g;
  for (const auto& l : params.layers) {
    g.layers.push_back({Matrix(l.weights.rows(), l.weights.cols()), Vector(l.biases.size(), 0.0)});
  }
  g.dx.assign(params.input_dim(), 0.0);
  return g;
}

void Gradients::accumulate(const Gradients& other) {
  if (other.layers.size() != layers.size()) throw ValidationError("gradient shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& dst = layers[i];
    const auto& src = other.layers[i];
    if (src.d_weights.values().size() != dst.d_weights.values().size()) {
      throw ValidationError("gradient shape mismatch");
    }
    for (std::size_t k = 0; k < dst.d_weights.values().size(); ++k) {
      dst.d_weights.values()[k] += src.d_weights.values()[k];
    }
    for (std::size_t k = 0; k < dst.d_biases.size(); ++k) dst.d_biases[k] += src.d_biases[k];
  }
  for (std::size_t k = 0; k < dx.size() && k < other.dx.size(); ++k) dx[k] += other.dx[k];
}

void Gradients::scale(double factor) {
  for (auto& l : layers) {
    for (double& v : l.d_weights.values()) v *= factor;
    for (double& v : l.d_biases) v *= factor;
  }
}

double Gradients::global_norm() const {
  double s = 0.0;
  for (const auto& l : layers) {
    for (double v : l.d_weights.values()) s += v * v;
    for (double v : l.d_biases) s += v * v;
  }
  return std::sqrt(s);
}

Gradients backward(const ModelParams& params, const ForwardTrace& trace,
                   std::span<const double> d_logits, std::span<const double> d_z) {
  const std::size_t n_layers = params.layers.size();
  check_length(d_logits, params.num_classes(), "d_logits");
  check_length(d_z, params.z_dim(), "d_z");
  if (trace.activations.size() != n_layers || trace.pre_activations.size() != n_layers) {
    throw ValidationError("forward trace does not match model depth");
  }

  Gradients g;
  g.layers.resize(n_layers);
  Vector delta(d_logits.begin(), d_logits.end());
  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& layer = params.layers[li];
    const Vector& in = trace.activations[li];
    if (li + 1 < n_layers) {
      // Rectifier; subgradient 0 at 0.
      const Vector& pre = trace.pre_activations[li];
      for (std::size_t o = 0; o < delta.size(); ++o) {
        if (!(pre[o] > 0.0)) delta[o] = 0.0;
      }
    }
    auto& lg = g.layers[li];
    lg.d_weights = Matrix(layer.weights.rows(), layer.weights.cols());
    for (std::size_t o = 0; o < delta.size(); ++o) {
      auto row = lg.d_weights.row(o);
      for (std::size_t k = 0; k < in.size(); ++k) row[k] = delta[o] * in[k];
    }
    lg.d_biases = delta;

    Vector upstream(layer.weights.cols(), 0.0);
    for (std::size_t o = 0; o < delta.size(); ++o) {
      if (delta[o] == 0.0) continue;
      const auto w = layer.weights.row(o);
      for (std::size_t k = 0; k < upstream.size(); ++k) upstream[k] += w[k] * delta[o];
    }
    if (li + 1 == n_layers) {
      for (std::size_t k = 0; k < upstream.size(); ++k) upstream[k] += d_z[k];
    }
    delta = std::move(upstream);
  }
  g.dx = std::move(delta);
  return g;
}

Label predict(const ModelParams& params, std::span<const double> x) {
  return argmax(forward(params, x).logits);
}

Matrix compute_z(const ModelParams& params, const LabeledDataset& ds) {
  Matrix z(ds.size(), params.z_dim());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto t = forward(params, ds.sample(i));
    std::copy(t.z.begin(), t.z.end(), z.row(i).begin());
  }
  return z;
}

double accuracy(const ModelParams& params, const LabeledDataset& ds) {
  if (ds.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (predict(params, ds.sample(i)) == ds.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

void apply_update(ModelParams& params, const Gradients& grads, double learning_rate) {
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& w = params.layers[i].weights.values();
    const auto& dw = grads.layers.at(i).d_weights.values();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= learning_rate * dw[k];
    auto& b = params.layers[i].biases;
    const auto& db = grads.layers[i].d_biases;
    for (std::size_t k = 0; k < b.size(); ++k) b[k] -= learning_rate * db[k];
  }
}

}  // namespace sepdetect
