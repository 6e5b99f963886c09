#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sepdetect/attack.hpp"
#include "sepdetect/data.hpp"
#include "sepdetect/detector.hpp"
#include "sepdetect/model.hpp"
#include "sepdetect/trainer.hpp"

namespace sepdetect {

using RocPoint = std::pair<double, double>;  // (fpr, tpr)

struct RocCurve {
  double auc = 0.0;
  std::vector<RocPoint> points;
};

// Adversarial is the positive class and lower density scores as more
// adversarial. AUC is the Mann-Whitney statistic: the fraction of
// (adversarial, clean) pairs with adversarial density below clean density,
// ties counted 1/2. ROC points run from (0,0) to (1,1), one per distinct
// density value.
RocCurve roc_auc(std::span<const double> clean_densities, std::span<const double> adv_densities);

double trapezoid_area(std::span<const RocPoint> points);

struct DensitySummary {
  std::size_t count = 0;
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

DensitySummary summarize(std::span<const double> values);

struct EvalReport {
  std::string scenario;
  std::vector<std::uint64_t> seeds;
  nlohmann::json train_config;
  nlohmann::json attack_config;  // null when no attack was supplied
  nlohmann::json detector_config;
  nlohmann::json provenance;

  DensitySummary clean;
  std::optional<DensitySummary> adversarial;
  std::optional<double> auc;
  std::vector<RocPoint> roc;
  std::optional<double> detection_rate_at_fpr;
  double clean_fpr_realized = 0.0;
  double min_class_mean_distance = 0.0;
  std::optional<double> attack_flip_rate;
  std::size_t adversarial_candidates = 0;  // perturbed rows before filtering
};

struct ReportInputs {
  std::string scenario;
  std::vector<std::uint64_t> seeds;
  const ModelParams* params = nullptr;
  TrainConfig train_config;
  const DensityModel* detector = nullptr;  // calibrated
  const LabeledDataset* clean_test = nullptr;
  // Row-aligned with clean_test. Only rows whose prediction differs from the
  // clean prediction count as adversarial examples.
  const LabeledDataset* adversarial = nullptr;
  std::optional<AttackConfig> attack;
  // When set, must match the detector's recorded checkpoint hash.
  std::optional<std::string> checkpoint_hash;
};

EvalReport build_report(const ReportInputs& in);

nlohmann::json to_json(const EvalReport& report);

}  // namespace sepdetect
