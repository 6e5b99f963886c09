#include "sepdetect/evaluation.hpp"

#include <algorithm>
#include <string>

#include "sepdetect/error.hpp"
#include "sepdetect/objective.hpp"

namespace sepdetect {

namespace {

constexpr int kReportSchema = 1;

nlohmann::json to_json(const DensitySummary& s) {
  return {{"count", s.count}, {"min", s.min}, {"median", s.median}, {"max", s.max}};
}

}  // namespace

RocCurve roc_auc(std::span<const double> clean_densities, std::span<const double> adv_densities) {
  if (clean_densities.empty() || adv_densities.empty()) {
    throw ValidationError("roc_auc needs non-empty clean and adversarial densities");
  }
  require_finite(clean_densities, "clean densities");
  require_finite(adv_densities, "adversarial densities");

  std::vector<double> clean(clean_densities.begin(), clean_densities.end());
  std::vector<double> adv(adv_densities.begin(), adv_densities.end());
  std::sort(clean.begin(), clean.end());
  std::sort(adv.begin(), adv.end());

  // Doubled pair count keeps the tie halves exact in integers.
  std::uint64_t twice_wins = 0;
  for (double a : adv) {
    const auto lo = std::lower_bound(clean.begin(), clean.end(), a);
    const auto hi = std::upper_bound(lo, clean.end(), a);
    const auto greater = static_cast<std::uint64_t>(clean.end() - hi);
    const auto ties = static_cast<std::uint64_t>(hi - lo);
    twice_wins += 2 * greater + ties;
  }
  RocCurve curve;
  curve.auc = static_cast<double>(twice_wins) /
              (2.0 * static_cast<double>(clean.size()) * static_cast<double>(adv.size()));

  // Sweep the flag-if-density<=t threshold upward through every distinct value.
  const double n_clean = static_cast<double>(clean.size());
  const double n_adv = static_cast<double>(adv.size());
  curve.points.emplace_back(0.0, 0.0);
  std::size_t ic = 0, ia = 0;
  while (ic < clean.size() || ia < adv.size()) {
    double t;
    if (ic == clean.size()) {
      t = adv[ia];
    } else if (ia == adv.size()) {
      t = clean[ic];
    } else {
      t = std::min(clean[ic], adv[ia]);
    }
    while (ic < clean.size() && clean[ic] <= t) ++ic;
    while (ia < adv.size() && adv[ia] <= t) ++ia;
    curve.points.emplace_back(static_cast<double>(ic) / n_clean, static_cast<double>(ia) / n_adv);
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].first - points[i - 1].first) * (points[i].second + points[i - 1].second) * 0.5;
  }
  return area;
}

DensitySummary summarize(std::span<const double> values) {
  DensitySummary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  const std::size_t mid = v.size() / 2;
  s.median = v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  return s;
}

EvalReport build_report(const ReportInputs& in) {
  if (in.params == nullptr || in.detector == nullptr || in.clean_test == nullptr) {
    throw ValidationError("build_report needs a model, a detector and a clean test set");
  }
  const ModelParams& params = *in.params;
  const DensityModel& dm = *in.detector;
  const LabeledDataset& clean = *in.clean_test;
  dm.validate();
  clean.validate();
  if (!dm.calibrated()) throw ValidationError("detector is not calibrated");
  if (clean.empty()) throw ValidationError("clean test set is empty");
  if (clean.dim() != params.input_dim()) {
    throw ValidationError("clean test dimension does not match the model input");
  }
  if (dm.num_classes() != params.num_classes() || dm.z_dim() != params.z_dim()) {
    throw ValidationError("detector does not match the model's classes or Z width");
  }
  if (in.checkpoint_hash && !dm.checkpoint_hash.empty() && *in.checkpoint_hash != dm.checkpoint_hash) {
    throw ValidationError("detector was fitted on a different checkpoint (provenance hash mismatch)");
  }

  EvalReport rep;
  rep.scenario = in.scenario;
  rep.seeds = in.seeds;
  rep.train_config = to_json(in.train_config);
  rep.attack_config = in.attack ? to_json(*in.attack) : nlohmann::json(nullptr);
  rep.detector_config = detector_config_json(dm);
  rep.provenance = {{"checkpoint_hash", dm.checkpoint_hash},
                    {"train_data_hash", dm.train_data_hash}};

  std::vector<double> clean_densities;
  std::vector<Label> clean_pred;
  std::size_t clean_flagged = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto r = detect(dm, params, clean.sample(i));
    clean_densities.push_back(r.density);
    clean_pred.push_back(r.predicted_class);
    if (r.is_adversarial) ++clean_flagged;
  }
  rep.clean = summarize(clean_densities);
  rep.clean_fpr_realized = static_cast<double>(clean_flagged) / static_cast<double>(clean.size());

  Matrix all_refs(0, dm.z_dim());
  std::vector<Label> ref_labels;
  for (std::size_t l = 0; l < dm.num_classes(); ++l) {
    for (std::size_t r = 0; r < dm.references[l].rows(); ++r) {
      all_refs.append_row(dm.references[l].row(r));
      ref_labels.push_back(l);
    }
  }
  rep.min_class_mean_distance = min_class_mean_distance(all_refs, ref_labels, dm.num_classes());

  if (in.adversarial != nullptr && !in.adversarial->empty()) {
    const LabeledDataset& adv = *in.adversarial;
    adv.validate();
    if (adv.size() != clean.size() || adv.dim() != clean.dim()) {
      throw ValidationError("adversarial set is not row-aligned with the clean test set");
    }
    rep.adversarial_candidates = adv.size();
    std::vector<double> adv_densities;
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const auto r = detect(dm, params, adv.sample(i));
      if (r.predicted_class == clean_pred[i]) continue;
      adv_densities.push_back(r.density);
      if (r.is_adversarial) ++flagged;
    }
    rep.attack_flip_rate =
        static_cast<double>(adv_densities.size()) / static_cast<double>(adv.size());
    if (!adv_densities.empty()) {
      rep.adversarial = summarize(adv_densities);
      const RocCurve curve = roc_auc(clean_densities, adv_densities);
      rep.auc = curve.auc;
      rep.roc = curve.points;
      rep.detection_rate_at_fpr =
          static_cast<double>(flagged) / static_cast<double>(adv_densities.size());
    }
  }
  return rep;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json metrics{{"clean_fpr_realized", r.clean_fpr_realized},
                         {"min_class_mean_distance", r.min_class_mean_distance}};
  if (r.auc) metrics["auc"] = *r.auc;
  if (r.detection_rate_at_fpr) metrics["detection_rate_at_fpr"] = *r.detection_rate_at_fpr;
  if (r.attack_flip_rate) metrics["attack_flip_rate"] = *r.attack_flip_rate;

  nlohmann::json roc = nlohmann::json::array();
  for (const auto& [fpr, tpr] : r.roc) roc.push_back({fpr, tpr});

  nlohmann::json densities{{"clean", to_json(r.clean)}};
  densities["adversarial"] = r.adversarial ? to_json(*r.adversarial) : nlohmann::json(nullptr);

  return {{"schema_version", kReportSchema},
          {"scenario", r.scenario},
          {"seeds", r.seeds},
          {"train_config", r.train_config},
          {"attack_config", r.attack_config},
          {"detector_config", r.detector_config},
          {"provenance", r.provenance},
          {"metrics", std::move(metrics)},
          {"densities", std::move(densities)},
          {"adversarial_candidates", r.adversarial_candidates},
          {"adversarial_present", r.adversarial.has_value()},
          {"roc", std::move(roc)}};
}

}  // namespace sepdetect
