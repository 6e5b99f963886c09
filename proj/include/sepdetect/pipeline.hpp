#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "sepdetect/attack.hpp"
#include "sepdetect/data.hpp"
#include "sepdetect/detector.hpp"
#include "sepdetect/evaluation.hpp"
#include "sepdetect/trainer.hpp"

namespace sepdetect {

// End-to-end experiment: generate a scenario, split it 60/20/20 into
// train/validation/test, then for the baseline (lambda = 0) and the
// separation-trained model: train, fit the density detector, calibrate on
// validation, attack the test split with FGSM and report.
// Geometric grid 0.001 * 10^(k/8) up to 10.
std::vector<double> default_epsilon_grid();

struct ExperimentConfig {
  ScenarioConfig scenario;
  TrainConfig train;             // seed and lambda are overridden per run
  double separation_lambda = 0.1;
  double train_fraction = 0.6;
  double validation_fraction = 0.5;  // of the remainder
  double target_fpr = 0.05;
  ThresholdMode threshold_mode = ThresholdMode::per_class;
  std::optional<double> sigma;
  // The smallest epsilon flipping at least min_flip_rate of the test
  // predictions is used, else the largest.
  std::vector<double> epsilon_grid = default_epsilon_grid();
  double min_flip_rate = 0.3;

  void validate() const;
};

// Defaults used by `repro --scenario <kind>`.
ExperimentConfig default_experiment(ScenarioKind kind);

nlohmann::json to_json(const ExperimentConfig& cfg);

struct RunArtifacts {
  TrainConfig train_config;
  ModelParams params;
  TrainHistory history;
  DensityModel detector;
  AttackConfig attack;
  LabeledDataset adversarial;
  EvalReport report;
};

struct SeedArtifacts {
  std::uint64_t seed = 0;
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
  RunArtifacts baseline;    // lambda = 0
  RunArtifacts separation;  // lambda = separation_lambda
};

// Deterministic in (cfg, seed).
SeedArtifacts run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

// Smallest epsilon of the grid reaching min_flip_rate on `test`.
AttackConfig choose_attack(const ModelParams& params, const LabeledDataset& test,
                           std::span<const double> epsilon_grid, double min_flip_rate);

// Writes datasets, checkpoints, density models, adversarial sets and reports
// under `dir`, each with a manifest.
void write_seed_artifacts(const SeedArtifacts& art, const ExperimentConfig& cfg,
                          const std::filesystem::path& dir);

// Seed-wise lambda > 0 vs lambda = 0 comparison.
nlohmann::json summarize_seeds(std::span<const SeedArtifacts> seeds, const ExperimentConfig& cfg);

}  // namespace sepdetect
