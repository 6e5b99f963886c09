#pragma once

#include <optional>
#include <span>
#include <utility>

#include <json.hpp>

#include "sepdetect/data.hpp"
#include "sepdetect/model.hpp"

namespace sepdetect {

struct AttackConfig {
  double epsilon = 0.1;
  std::optional<std::pair<double, double>> clamp;  // componentwise [lo, hi]

  void validate() const;
};

nlohmann::json to_json(const AttackConfig& cfg);

// Gradient of cross_entropy(logits(x), y) with respect to x.
Vector input_gradient(const ModelParams& params, std::span<const double> x, Label y);

// x* = x + epsilon * sign(grad_x CE), sign(0) = 0, then the optional clamp.
Vector fgsm(const ModelParams& params, std::span<const double> x, Label y,
            const AttackConfig& cfg);

// FGSM applied row by row; labels are carried over unchanged.
LabeledDataset fgsm_dataset(const ModelParams& params, const LabeledDataset& ds,
                            const AttackConfig& cfg);

// Fraction of rows whose predicted class differs between the two sets.
double flip_rate(const ModelParams& params, const LabeledDataset& clean,
                 const LabeledDataset& perturbed);

}  // namespace sepdetect
