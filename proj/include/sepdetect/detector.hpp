#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sepdetect/data.hpp"
#include "sepdetect/model.hpp"

namespace sepdetect {

enum class ThresholdMode { per_class, global };

ThresholdMode parse_threshold_mode(std::string_view name);
std::string_view to_string(ThresholdMode mode);

// Per-class Gaussian kernel density over last-hidden-layer features.
struct DensityModel {
  std::vector<Matrix> references;  // references[l]: Z vectors of training class l
  double sigma = 1.0;
  bool sigma_from_heuristic = false;
  ThresholdMode mode = ThresholdMode::per_class;
  std::vector<double> thresholds;  // one per class; empty until calibrated
  std::optional<double> target_fpr;
  std::string checkpoint_hash;
  std::string train_data_hash;

  std::size_t num_classes() const { return references.size(); }
  std::size_t z_dim() const { return references.empty() ? 0 : references.front().cols(); }
  bool calibrated() const { return !thresholds.empty(); }
  void validate() const;
};

struct DetectionResult {
  Label predicted_class = 0;
  double density = 0.0;
  double threshold_used = 0.0;
  bool is_adversarial = false;
};

// Median of within-class pairwise Euclidean distances over an evenly strided
// subsample of at most `max_points` references. Falls back to 1 when there
// are no pairs or the median is 0.
double median_heuristic_sigma(std::span<const Matrix> references, std::size_t max_points = 1000);

// Stores Z(x_i) of every training point under its true label.
DensityModel fit_density(const ModelParams& params, const LabeledDataset& train,
                         std::optional<double> sigma = std::nullopt);

// (1/|X_l|) sum_i exp(-|z - z_i|^2 / sigma^2)
double density(const DensityModel& dm, std::span<const double> z, Label l);

// Nearest-rank thresholds from the densities of correctly classified clean
// samples, grouped by predicted class (or pooled in global mode):
// tau = k-th smallest with k = ceil(target_fpr * n). Flagging is strict
// (density < tau), so at most k - 1 of those samples are flagged.
DensityModel calibrate_threshold(DensityModel dm, const ModelParams& params,
                                 const LabeledDataset& clean_validation, double target_fpr,
                                 ThresholdMode mode = ThresholdMode::per_class);

// Density against the predicted class, flagged iff below that class's tau.
DetectionResult detect(const DensityModel& dm, const ModelParams& params,
                       std::span<const double> x);

// Fraction of correctly classified rows that detect() flags.
double realized_clean_fpr(const DensityModel& dm, const ModelParams& params,
                          const LabeledDataset& clean);

nlohmann::json to_json(const DensityModel& dm);
DensityModel density_model_from_json(const nlohmann::json& doc);
void save_density_model(const DensityModel& dm, const std::filesystem::path& path);
DensityModel load_density_model(const std::filesystem::path& path);

// Summary without the reference vectors, for reports and manifests.
nlohmann::json detector_config_json(const DensityModel& dm);

}  // namespace sepdetect
