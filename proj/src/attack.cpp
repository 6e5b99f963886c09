#include "sepdetect/attack.hpp"

#include <algorithm>
#include <cmath>

#include "sepdetect/error.hpp"

namespace sepdetect {

void AttackConfig::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0) {
    throw ValidationError("epsilon must be finite and >= 0");
  }
  if (clamp && !(clamp->first < clamp->second)) {
    throw ValidationError("clamp requires lo < hi");
  }
}

nlohmann::json to_json(const AttackConfig& cfg) {
  nlohmann::json j{{"method", "fgsm"}, {"epsilon", cfg.epsilon}};
  j["clamp"] = cfg.clamp ? nlohmann::json::array({cfg.clamp->first, cfg.clamp->second})
                         : nlohmann::json(nullptr);
  return j;
}

Vector input_gradient(const ModelParams& params, std::span<const double> x, Label y) {
  if (y >= params.num_classes()) throw ValidationError("attack label out of range");
  const ForwardTrace t = forward(params, x);
  Vector d_logits = t.probs;
  d_logits[y] -= 1.0;
  const Vector d_z(params.z_dim(), 0.0);
  return backward(params, t, d_logits, d_z).dx;
}

Vector fgsm(const ModelParams& params, std::span<const double> x, Label y,
            const AttackConfig& cfg) {
  cfg.validate();
  const Vector grad = input_gradient(params, x, y);
  Vector out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (grad[i] > 0.0) {
      out[i] += cfg.epsilon;
    } else if (grad[i] < 0.0) {
      out[i] -= cfg.epsilon;
    }
    if (cfg.clamp) out[i] = std::clamp(out[i], cfg.clamp->first, cfg.clamp->second);
  }
  return out;
}

LabeledDataset fgsm_dataset(const ModelParams& params, const LabeledDataset& ds,
                            const AttackConfig& cfg) {
  ds.validate();
  if (ds.num_classes > params.num_classes()) {
    throw ValidationError("dataset has more classes than the model");
  }
  LabeledDataset out = ds;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Vector adv = fgsm(params, ds.sample(i), ds.labels[i], cfg);
    std::copy(adv.begin(), adv.end(), out.features.row(i).begin());
  }
  return out;
}

double flip_rate(const ModelParams& params, const LabeledDataset& clean,
                 const LabeledDataset& perturbed) {
  if (clean.size() != perturbed.size() || clean.dim() != perturbed.dim()) {
    throw ValidationError("clean and perturbed sets are not aligned");
  }
  if (clean.empty()) return 0.0;
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (predict(params, clean.sample(i)) != predict(params, perturbed.sample(i))) ++flipped;
  }
  return static_cast<double>(flipped) / static_cast<double>(clean.size());
}

}  // namespace sepdetect
