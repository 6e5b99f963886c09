#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sepdetect/numerics.hpp"

namespace sepdetect {

using Label = std::size_t;

struct LabeledDataset {
  Matrix features;  // N x D
  std::vector<Label> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  bool empty() const { return labels.empty(); }

  std::span<const double> sample(std::size_t i) const { return features.row(i); }

  // Checks label range, finiteness and row/label alignment.
  void validate() const;
  std::vector<std::size_t> class_counts() const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

enum class ScenarioKind { separated, near_boundary, pocket };

ScenarioKind parse_scenario_kind(std::string_view name);
std::string_view to_string(ScenarioKind kind);

// Synthetic two-manifold geometries. Class k is an isotropic Gaussian blob
// centered at k * spacing along the first axis.
//   separated     - spacing = gap
//   near_boundary - spacing = 2 * cluster_std, blobs touch
//   pocket        - spacing = gap; pocket_size points of class 1 are drawn
//                   around class 0's center shifted by pocket_offset along
//                   the first axis, with spread pocket_std (cluster_std
//                   when unset)
struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::separated;
  std::size_t samples_per_class = 100;
  std::size_t dimension = 2;
  std::size_t num_classes = 2;
  double cluster_std = 1.0;
  double gap = 10.0;
  std::size_t pocket_size = 0;
  double pocket_offset = 0.0;
  std::optional<double> pocket_std;
  std::uint64_t seed = 0;

  void validate() const;
};

LabeledDataset gen_scenario(const ScenarioConfig& cfg);

// Reads `f0,...,f{D-1},label`. K is max label + 1 unless `num_classes` is
// given, in which case every label must be below it.
LabeledDataset load_csv(const std::filesystem::path& path,
                        std::optional<std::size_t> num_classes = std::nullopt);
// Values are written with 17 significant digits, so load_csv round-trips.
std::string to_csv_string(const LabeledDataset& ds);
void save_csv(const LabeledDataset& ds, const std::filesystem::path& path);

// One `{"x": [...], "y": label}` object per line.
LabeledDataset load_jsonl(const std::filesystem::path& path,
                          std::optional<std::size_t> num_classes = std::nullopt);
void save_jsonl(const LabeledDataset& ds, const std::filesystem::path& path);

// Format chosen by extension: `.jsonl` or CSV otherwise.
LabeledDataset load_dataset(const std::filesystem::path& path,
                            std::optional<std::size_t> num_classes = std::nullopt);
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);

// Stratified split. Each class contributes round(train_fraction * n_c)
// samples (clamped to [1, n_c - 1]) to the first part. Both parts keep the
// original row order.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                        double train_fraction, Rng& rng);

// One epoch of class-complete mini-batches as row indices into `ds`.
std::vector<std::vector<std::size_t>> stratified_batch_indices(const LabeledDataset& ds,
                                                               std::size_t batch_size, Rng& rng);
std::vector<LabeledDataset> stratified_batches(const LabeledDataset& ds, std::size_t batch_size,
                                               Rng& rng);

}  // namespace sepdetect
