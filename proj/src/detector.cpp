#include "sepdetect/detector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sepdetect/error.hpp"
#include "sepdetect/io.hpp"

namespace sepdetect {

namespace {

constexpr int kDensitySchema = 1;
constexpr const char* kDensityFormat = "sepdetect-density-model";

}  // namespace

ThresholdMode parse_threshold_mode(std::string_view name) {
  if (name == "per_class" || name == "per-class") return ThresholdMode::per_class;
  if (name == "global") return ThresholdMode::global;
  throw ValidationError("unknown threshold mode '" + std::string(name) + "'");
}

std::string_view to_string(ThresholdMode mode) {
  return mode == ThresholdMode::global ? "global" : "per_class";
}

void DensityModel::validate() const {
  if (references.empty()) throw ValidationError("density model has no classes");
  for (std::size_t l = 0; l < references.size(); ++l) {
    if (references[l].rows() == 0) {
      throw ValidationError("density model class " + std::to_string(l) + " has no references");
    }
    if (references[l].cols() != z_dim()) throw ValidationError("reference width mismatch");
    require_finite(references[l].values(), "density references");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be > 0");
  if (!thresholds.empty()) {
    if (thresholds.size() != references.size()) throw ValidationError("threshold count mismatch");
    require_finite(thresholds, "thresholds");
  }
}

double median_heuristic_sigma(std::span<const Matrix> references, std::size_t max_points) {
  std::size_t total = 0;
  for (const auto& r : references) total += r.rows();
  if (total == 0 || max_points == 0) return 1.0;

  // Global index g selects row g of the concatenation of all classes.
  const std::size_t take = std::min(total, max_points);
  std::vector<std::vector<std::size_t>> picked(references.size());
  for (std::size_t s = 0; s < take; ++s) {
    std::size_t g = s * total / take;
    for (std::size_t l = 0; l < references.size(); ++l) {
      if (g < references[l].rows()) {
        picked[l].push_back(g);
        break;
      }
      g -= references[l].rows();
    }
  }

  std::vector<double> dists;
  for (std::size_t l = 0; l < references.size(); ++l) {
    const auto& idx = picked[l];
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        dists.push_back(
            std::sqrt(squared_distance(references[l].row(idx[a]), references[l].row(idx[b]))));
      }
    }
  }
  if (dists.empty()) return 1.0;
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  double median = dists[mid];
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (lower + median);
  }
  return median > 0.0 ? median : 1.0;
}

DensityModel fit_density(const ModelParams& params, const LabeledDataset& train,
                         std::optional<double> sigma) {
  train.validate();
  if (train.num_classes != params.num_classes()) {
    throw ValidationError("training set has " + std::to_string(train.num_classes) +
                          " classes, model has " + std::to_string(params.num_classes()));
  }
  if (train.dim() != params.input_dim()) {
    throw ValidationError("training set dimension does not match the model input");
  }
  DensityModel dm;
  dm.references.assign(train.num_classes, Matrix(0, params.z_dim()));
  for (std::size_t i = 0; i < train.size(); ++i) {
    dm.references[train.labels[i]].append_row(forward(params, train.sample(i)).z);
  }
  for (std::size_t l = 0; l < dm.references.size(); ++l) {
    if (dm.references[l].rows() == 0) {
      throw ValidationError("class " + std::to_string(l) + " has no training samples");
    }
  }
  if (sigma) {
    if (!(*sigma > 0.0) || !std::isfinite(*sigma)) throw ValidationError("sigma must be > 0");
    dm.sigma = *sigma;
  } else {
    dm.sigma = median_heuristic_sigma(dm.references);
    dm.sigma_from_heuristic = true;
  }
  return dm;
}

double density(const DensityModel& dm, std::span<const double> z, Label l) {
  if (l >= dm.references.size() || dm.references[l].rows() == 0) {
    throw ValidationError("density: class " + std::to_string(l) + " has no references");
  }
  const Matrix& refs = dm.references[l];
  if (z.size() != refs.cols()) throw ValidationError("density: Z dimension mismatch");
  const double inv_s2 = 1.0 / (dm.sigma * dm.sigma);
  double sum = 0.0;
  for (std::size_t i = 0; i < refs.rows(); ++i) {
    sum += std::exp(-squared_distance(z, refs.row(i)) * inv_s2);
  }
  return sum / static_cast<double>(refs.rows());
}

DensityModel calibrate_threshold(DensityModel dm, const ModelParams& params,
                                 const LabeledDataset& clean_validation, double target_fpr,
                                 ThresholdMode mode) {
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) {
    throw ValidationError("target_fpr must lie in (0, 1)");
  }
  dm.validate();
  clean_validation.validate();
  if (dm.num_classes() != params.num_classes()) {
    throw ValidationError("density model and checkpoint disagree on class count");
  }

  std::vector<std::vector<double>> per_class(dm.num_classes());
  for (std::size_t i = 0; i < clean_validation.size(); ++i) {
    const ForwardTrace t = forward(params, clean_validation.sample(i));
    const Label pred = argmax(t.logits);
    if (pred != clean_validation.labels[i]) continue;
    per_class[pred].push_back(density(dm, t.z, pred));
  }

  auto nearest_rank = [target_fpr](std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    auto k = static_cast<std::size_t>(std::ceil(target_fpr * n));
    k = std::clamp<std::size_t>(k, 1, values.size());
    return values[k - 1];
  };

  dm.thresholds.assign(dm.num_classes(), 0.0);
  if (mode == ThresholdMode::global) {
    std::vector<double> pooled;
    for (const auto& v : per_class) pooled.insert(pooled.end(), v.begin(), v.end());
    if (pooled.empty()) throw ValidationError("no correctly classified validation samples");
    std::fill(dm.thresholds.begin(), dm.thresholds.end(), nearest_rank(std::move(pooled)));
  } else {
    for (std::size_t l = 0; l < per_class.size(); ++l) {
      if (per_class[l].empty()) {
        throw ValidationError("class " + std::to_string(l) +
                              " has no correctly classified validation samples");
      }
      dm.thresholds[l] = nearest_rank(per_class[l]);
    }
  }
  dm.mode = mode;
  dm.target_fpr = target_fpr;
  return dm;
}

DetectionResult detect(const DensityModel& dm, const ModelParams& params,
                       std::span<const double> x) {
  if (!dm.calibrated()) throw ValidationError("density model is not calibrated");
  const ForwardTrace t = forward(params, x);
  DetectionResult r;
  r.predicted_class = argmax(t.logits);
  r.density = density(dm, t.z, r.predicted_class);
  r.threshold_used = dm.thresholds.at(r.predicted_class);
  r.is_adversarial = r.density < r.threshold_used;
  return r;
}

double realized_clean_fpr(const DensityModel& dm, const ModelParams& params,
                          const LabeledDataset& clean) {
  std::size_t n = 0;
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto r = detect(dm, params, clean.sample(i));
    if (r.predicted_class != clean.labels[i]) continue;
    ++n;
    if (r.is_adversarial) ++flagged;
  }
  return n == 0 ? 0.0 : static_cast<double>(flagged) / static_cast<double>(n);
}

nlohmann::json detector_config_json(const DensityModel& dm) {
  nlohmann::json j{{"kernel", "gaussian"},
                   {"sigma", dm.sigma},
                   {"sigma_source", dm.sigma_from_heuristic ? "median_heuristic" : "given"},
                   {"threshold_mode", to_string(dm.mode)},
                   {"reference_counts", nlohmann::json::array()}};
  for (const auto& r : dm.references) j["reference_counts"].push_back(r.rows());
  j["target_fpr"] = dm.target_fpr ? nlohmann::json(*dm.target_fpr) : nlohmann::json(nullptr);
  j["thresholds"] = dm.calibrated() ? nlohmann::json(dm.thresholds) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const DensityModel& dm) {
  nlohmann::json j{{"format", kDensityFormat}, {"schema_version", kDensitySchema}};
  j["config"] = detector_config_json(dm);
  j["provenance"] = {{"checkpoint_hash", dm.checkpoint_hash},
                     {"train_data_hash", dm.train_data_hash}};
  nlohmann::json refs = nlohmann::json::array();
  for (const auto& m : dm.references) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto row = m.row(r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    refs.push_back(std::move(rows));
  }
  j["references"] = std::move(refs);
  return j;
}

DensityModel density_model_from_json(const nlohmann::json& doc) {
  DensityModel dm;
  try {
    if (doc.at("format").get<std::string>() != kDensityFormat) {
      throw ValidationError("not a density model document");
    }
    if (doc.at("schema_version").get<int>() != kDensitySchema) {
      throw ValidationError("unsupported density model schema_version");
    }
    const auto& cfg = doc.at("config");
    dm.sigma = cfg.at("sigma").get<double>();
    dm.sigma_from_heuristic = cfg.at("sigma_source").get<std::string>() == "median_heuristic";
    dm.mode = parse_threshold_mode(cfg.at("threshold_mode").get<std::string>());
    if (!cfg.at("target_fpr").is_null()) dm.target_fpr = cfg.at("target_fpr").get<double>();
    if (!cfg.at("thresholds").is_null()) {
      dm.thresholds = cfg.at("thresholds").get<std::vector<double>>();
    }
    dm.checkpoint_hash = doc.at("provenance").at("checkpoint_hash").get<std::string>();
    dm.train_data_hash = doc.at("provenance").at("train_data_hash").get<std::string>();
    for (const auto& cls : doc.at("references")) {
      const auto rows = cls.get<std::vector<std::vector<double>>>();
      Matrix m(0, rows.empty() ? 0 : rows.front().size());
      for (const auto& r : rows) m.append_row(r);
      dm.references.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed density model: ") + e.what());
  }
  dm.validate();
  return dm;
}

void save_density_model(const DensityModel& dm, const std::filesystem::path& path) {
  dm.validate();
  write_json(to_json(dm), path);
}

DensityModel load_density_model(const std::filesystem::path& path) {
  return density_model_from_json(read_json(path));
}

}  // namespace sepdetect
