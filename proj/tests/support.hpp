#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sepdetect/model.hpp"
#include "sepdetect/numerics.hpp"
#include "sepdetect/objective.hpp"

namespace testing {

using namespace sepdetect;

// Scratch directory under the system temp dir, wiped on construction.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sepdetect_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline ModelParams random_model(std::span<const std::size_t> dims, Rng& rng, double bias_scale = 0.3) {
  ModelParams p = init_model(dims, rng);
  for (auto& l : p.layers) {
    for (double& b : l.biases) b = bias_scale * rng.normal();
  }
  return p;
}

struct Batch {
  Matrix x;
  std::vector<Label> labels;
  std::size_t num_classes;
};

// Scalar objective of the whole batch, recomputed from scratch (the finite-difference target).
inline double batch_objective(const ModelParams& p, const Batch& b, double lambda) {
  Matrix z(b.x.rows(), p.z_dim());
  Matrix logits(b.x.rows(), b.num_classes);
  for (std::size_t n = 0; n < b.x.rows(); ++n) {
    const auto t = forward(p, b.x.row(n));
    std::copy(t.z.begin(), t.z.end(), z.row(n).begin());
    std::copy(t.logits.begin(), t.logits.end(), logits.row(n).begin());
  }
  return combined_loss_and_grads(z, logits, b.labels, b.num_classes, lambda).loss.total;
}

// Analytic gradient: parameter gradients summed over the batch, dx per sample.
struct BatchGradient {
  Gradients params;
  Matrix dx;
};

inline BatchGradient batch_gradient(const ModelParams& p, const Batch& b, double lambda) {
  std::vector<ForwardTrace> traces;
  Matrix z(b.x.rows(), p.z_dim());
  Matrix logits(b.x.rows(), b.num_classes);
  for (std::size_t n = 0; n < b.x.rows(); ++n) {
    traces.push_back(forward(p, b.x.row(n)));
    std::copy(traces[n].z.begin(), traces[n].z.end(), z.row(n).begin());
    std::copy(traces[n].logits.begin(), traces[n].logits.end(), logits.row(n).begin());
  }
  const auto c = combined_loss_and_grads(z, logits, b.labels, b.num_classes, lambda);
  BatchGradient out{Gradients::zeros_like(p), Matrix(b.x.rows(), b.x.cols())};
  for (std::size_t n = 0; n < b.x.rows(); ++n) {
    const Gradients g = backward(p, traces[n], c.d_logits.row(n), c.d_z.row(n));
    out.params.accumulate(g);
    std::copy(g.dx.begin(), g.dx.end(), out.dx.row(n).begin());
  }
  return out;
}

// Entries below 1e-6 are compared absolutely (to 1e-12): finite differences of an
// O(1) loss cannot resolve them relatively in double precision.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

// Which side of every rectifier each sample sits on, plus the closest class pair.
// The objective is smooth wherever this signature is constant.
inline std::vector<int> smooth_region(const ModelParams& p, const Batch& b) {
  std::vector<int> sig;
  Matrix z(b.x.rows(), p.z_dim());
  for (std::size_t n = 0; n < b.x.rows(); ++n) {
    const auto t = forward(p, b.x.row(n));
    for (std::size_t l = 0; l + 1 < t.pre_activations.size(); ++l) {
      for (double v : t.pre_activations[l]) sig.push_back(v > 0.0 ? 1 : 0);
    }
    std::copy(t.z.begin(), t.z.end(), z.row(n).begin());
  }
  const auto pair = separation_loss(class_means(z, b.labels, b.num_classes)).pair;
  sig.push_back(static_cast<int>(pair.first));
  sig.push_back(static_cast<int>(pair.second));
  return sig;
}

// Worst relative error over every weight, bias and input coordinate.
// Five-point central stencil, O(step^4) truncation, so the step can stay large
// enough that cancellation does not swamp small gradient entries. The step
// shrinks only when the stencil would straddle a kink.
inline double gradient_check(ModelParams p, Batch b, double lambda) {
  const BatchGradient g = batch_gradient(p, b, lambda);
  const auto region = smooth_region(p, b);
  double worst = 0.0;
  auto probe = [&](double& slot, double analytic) {
    const double saved = slot;
    auto at = [&](double offset) {
      slot = saved + offset;
      return batch_objective(p, b, lambda);
    };
    auto stays_smooth = [&](double step) {
      bool same = true;
      for (double k : {-2.0, -1.0, 1.0, 2.0}) {
        slot = saved + k * step;
        same = same && smooth_region(p, b) == region;
      }
      slot = saved;
      return same;
    };
    double step = 1e-3;
    while (step > 1e-8 && !stays_smooth(step)) step /= 10.0;
    const double numeric = (8.0 * (at(step) - at(-step)) - (at(2 * step) - at(-2 * step))) / (12.0 * step);
    slot = saved;
    worst = std::max(worst, relative_error(analytic, numeric));
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& w = p.layers[l].weights.values();
    for (std::size_t i = 0; i < w.size(); ++i) probe(w[i], g.params.layers[l].d_weights.values()[i]);
    auto& bias = p.layers[l].biases;
    for (std::size_t i = 0; i < bias.size(); ++i) probe(bias[i], g.params.layers[l].d_biases[i]);
  }
  auto& xs = b.x.values();
  for (std::size_t i = 0; i < xs.size(); ++i) probe(xs[i], g.dx.values()[i]);
  return worst;
}

// Random batch containing every class at least once.
inline Batch random_batch(Rng& rng, std::size_t n, std::size_t d, std::size_t k) {
  Batch b{Matrix(n, d), std::vector<Label>(n), k};
  for (double& v : b.x.values()) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) b.labels[i] = i < k ? i : rng.uniform_index(k);
  rng.shuffle(b.labels);
  return b;
}

}  // namespace testing
