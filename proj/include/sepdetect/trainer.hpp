#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "sepdetect/data.hpp"
#include "sepdetect/error.hpp"
#include "sepdetect/model.hpp"
#include "sepdetect/objective.hpp"

namespace sepdetect {

// Non-finite loss or parameters during training.
class DivergenceError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double lambda = 0.1;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{64, 32};  // last entry is the Z width

  void validate(std::size_t num_classes) const;
  std::vector<std::size_t> dims(std::size_t input_dim, std::size_t num_classes) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  double mean_total = 0.0;
  double mean_ce = 0.0;
  double mean_separation = 0.0;
  double min_class_mean_distance = 0.0;  // full training set, end of epoch
  double train_accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using TrainHistory = std::vector<EpochRecord>;

nlohmann::json to_json(const TrainHistory& history);

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

// Plain mini-batch SGD on CE + lambda * separation with global-norm clipping.
// Weights come from Rng(cfg.seed); batch order from an independent stream.
TrainResult train(const LabeledDataset& ds, const TrainConfig& cfg);

// Rescales grads so their global norm is at most max_norm. Returns the
// norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

struct StepResult {
  LossBreakdown loss;
  double grad_norm = 0.0;     // before clipping
  double clipped_norm = 0.0;  // after clipping
};

// One SGD update from the rows `batch` of `ds`.
StepResult sgd_step(ModelParams& params, const LabeledDataset& ds,
                   std::span<const std::size_t> batch, const TrainConfig& cfg);

struct Checkpoint {
  ModelParams params;
  TrainConfig config;
};

nlohmann::json checkpoint_to_json(const ModelParams& params, const TrainConfig& cfg);
Checkpoint checkpoint_from_json(const nlohmann::json& doc,
                                std::optional<std::span<const std::size_t>> expected_dims = {});

void save_checkpoint(const ModelParams& params, const TrainConfig& cfg,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::span<const std::size_t>> expected_dims = {});

}  // namespace sepdetect
