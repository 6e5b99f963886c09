#include "sepdetect/trainer.hpp"

#include <cmath>
#include <string>

#include "sepdetect/io.hpp"

namespace sepdetect {

namespace {

constexpr int kCheckpointSchema = 1;
constexpr const char* kCheckpointFormat = "sepdetect-checkpoint";

bool finite_params(const ModelParams& params) {
  for (const auto& l : params.layers) {
    for (double v : l.weights.values()) {
      if (!std::isfinite(v)) return false;
    }
    for (double v : l.biases) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace

void TrainConfig::validate(std::size_t num_classes) const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be > 0");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (!(grad_clip_norm > 0.0)) throw ValidationError("grad_clip_norm must be > 0");
  if (batch_size < num_classes) {
    throw ValidationError("batch_size " + std::to_string(batch_size) + " < num_classes " +
                          std::to_string(num_classes));
  }
  if (hidden.empty()) throw ValidationError("at least one hidden layer is required");
  for (std::size_t h : hidden) {
    if (h < 1) throw ValidationError("hidden widths must be >= 1");
  }
}

std::vector<std::size_t> TrainConfig::dims(std::size_t input_dim, std::size_t num_classes) const {
  std::vector<std::size_t> d{input_dim};
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(num_classes);
  return d;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"lambda", cfg.lambda},
          {"grad_clip_norm", cfg.grad_clip_norm},
          {"seed", cfg.seed},
          {"hidden", cfg.hidden}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.grad_clip_norm = j.at("grad_clip_norm").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed train config: ") + e.what());
  }
}

nlohmann::json to_json(const TrainHistory& history) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& r = history[e];
    arr.push_back({{"epoch", e + 1},
                   {"mean_total", r.mean_total},
                   {"mean_ce", r.mean_ce},
                   {"mean_separation", r.mean_separation},
                   {"min_class_mean_distance", r.min_class_mean_distance},
                   {"train_accuracy", r.train_accuracy}});
  }
  return arr;
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double norm = grads.global_norm();
  if (norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

StepResult sgd_step(ModelParams& params, const LabeledDataset& ds,
                    std::span<const std::size_t> batch, const TrainConfig& cfg) {
  const std::size_t k = ds.num_classes;
  Matrix z(batch.size(), params.z_dim());
  Matrix logits(batch.size(), k);
  std::vector<Label> labels(batch.size());
  std::vector<ForwardTrace> traces;
  traces.reserve(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    traces.push_back(forward(params, ds.sample(batch[n])));
    std::copy(traces[n].z.begin(), traces[n].z.end(), z.row(n).begin());
    std::copy(traces[n].logits.begin(), traces[n].logits.end(), logits.row(n).begin());
    labels[n] = ds.labels[batch[n]];
  }
  const CombinedLoss combined = combined_loss_and_grads(z, logits, labels, k, cfg.lambda);
  if (!std::isfinite(combined.loss.total)) throw DivergenceError("non-finite loss");

  Gradients grads = Gradients::zeros_like(params);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    grads.accumulate(backward(params, traces[n], combined.d_logits.row(n), combined.d_z.row(n)));
  }
  StepResult step;
  step.loss = combined.loss;
  step.grad_norm = clip_global_norm(grads, cfg.grad_clip_norm);
  step.clipped_norm = grads.global_norm();
  apply_update(params, grads, cfg.learning_rate);
  if (!finite_params(params)) throw DivergenceError("non-finite parameters after update");
  return step;
}

TrainResult train(const LabeledDataset& ds, const TrainConfig& cfg) {
  ds.validate();
  if (ds.num_classes < 2) throw ValidationError("training needs at least 2 classes");
  cfg.validate(ds.num_classes);
  for (std::size_t c : ds.class_counts()) {
    if (c == 0) throw ValidationError("every class needs at least one training sample");
  }

  TrainResult result;
  const auto dims = cfg.dims(ds.dim(), ds.num_classes);
  Rng init_rng(cfg.seed);
  result.params = init_model(dims, init_rng);
  Rng batch_rng(derive_seed(cfg.seed, 1));

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = stratified_batch_indices(ds, cfg.batch_size, batch_rng);
    EpochRecord rec;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      StepResult step;
      try {
        step = sgd_step(result.params, ds, batches[b], cfg);
      } catch (const ValidationError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) +
                              ", batch " + std::to_string(b + 1) + ": " + e.what());
      }
      rec.mean_total += step.loss.total;
      rec.mean_ce += step.loss.ce;
      rec.mean_separation += step.loss.separation;
    }
    const double inv = 1.0 / static_cast<double>(batches.size());
    rec.mean_total *= inv;
    rec.mean_ce *= inv;
    rec.mean_separation *= inv;
    rec.min_class_mean_distance =
        min_class_mean_distance(compute_z(result.params, ds), ds.labels, ds.num_classes);
    rec.train_accuracy = accuracy(result.params, ds);
    result.history.push_back(rec);
  }
  return result;
}

nlohmann::json checkpoint_to_json(const ModelParams& params, const TrainConfig& cfg) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : params.layers) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < l.weights.rows(); ++r) {
      const auto row = l.weights.row(r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    layers.push_back({{"weights", std::move(rows)}, {"biases", l.biases}});
  }
  return {{"format", kCheckpointFormat}, {"schema_version", kCheckpointSchema},
          {"dims", params.dims()},       {"seed", cfg.seed},
          {"train_config", to_json(cfg)}, {"layers", std::move(layers)}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc,
                                std::optional<std::span<const std::size_t>> expected_dims) {
  Checkpoint ck;
  try {
    if (doc.at("format").get<std::string>() != kCheckpointFormat) {
      throw ValidationError("not a checkpoint document");
    }
    if (doc.at("schema_version").get<int>() != kCheckpointSchema) {
      throw ValidationError("unsupported checkpoint schema_version");
    }
    const auto dims = doc.at("dims").get<std::vector<std::size_t>>();
    validate_dims(dims);
    if (expected_dims && !std::equal(dims.begin(), dims.end(), expected_dims->begin(),
                                     expected_dims->end())) {
      throw ValidationError("checkpoint dims do not match the expected architecture");
    }
    const auto& layers = doc.at("layers");
    if (!layers.is_array() || layers.size() + 1 != dims.size()) {
      throw ValidationError("checkpoint layer count does not match dims");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto rows = layers[i].at("weights").get<std::vector<std::vector<double>>>();
      Layer layer;
      if (rows.size() != dims[i + 1]) throw ValidationError("checkpoint weight rows mismatch");
      layer.weights = Matrix(dims[i + 1], dims[i]);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != dims[i]) throw ValidationError("checkpoint weight cols mismatch");
        std::copy(rows[r].begin(), rows[r].end(), layer.weights.row(r).begin());
      }
      layer.biases = layers[i].at("biases").get<std::vector<double>>();
      ck.params.layers.push_back(std::move(layer));
    }
    ck.config = train_config_from_json(doc.at("train_config"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
  ck.params.validate();
  return ck;
}

void save_checkpoint(const ModelParams& params, const TrainConfig& cfg,
                     const std::filesystem::path& path) {
  params.validate();
  write_json(checkpoint_to_json(params, cfg), path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::span<const std::size_t>> expected_dims) {
  return checkpoint_from_json(read_json(path), expected_dims);
}

}  // namespace sepdetect
