#include "sepdetect/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sepdetect/error.hpp"

namespace sepdetect {

namespace {

std::string line_error(const std::filesystem::path& path, std::size_t line, const std::string& msg) {
  return path.string() + ":" + std::to_string(line) + ": " + msg;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(std::string_view s, long long& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

void finish_labels(LabeledDataset& ds, std::optional<std::size_t> num_classes,
                   const std::filesystem::path& path, const std::vector<std::size_t>& lines) {
  if (num_classes) {
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
      if (ds.labels[i] >= *num_classes) {
        throw ValidationError(line_error(path, lines[i],
                                         "label " + std::to_string(ds.labels[i]) +
                                             " >= declared class count " +
                                             std::to_string(*num_classes)));
      }
    }
    ds.num_classes = *num_classes;
  } else {
    ds.num_classes =
        ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  return out;
}

}  // namespace

void LabeledDataset::validate() const {
  if (features.rows() != labels.size()) {
    throw ValidationError("dataset has " + std::to_string(features.rows()) + " rows but " +
                          std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " outside [0, " + std::to_string(num_classes) +
                            ")");
    }
  }
  require_finite(features.values(), "dataset features");
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (Label y : labels) ++counts.at(y);
  return counts;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.features = Matrix(indices.size(), dim());
  out.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = sample(indices[k]);
    std::copy(src.begin(), src.end(), out.features.row(k).begin());
    out.labels.push_back(labels[indices[k]]);
  }
  return out;
}

ScenarioKind parse_scenario_kind(std::string_view name) {
  if (name == "separated") return ScenarioKind::separated;
  if (name == "near_boundary" || name == "near-boundary") return ScenarioKind::near_boundary;
  if (name == "pocket") return ScenarioKind::pocket;
  throw ValidationError("unknown scenario kind '" + std::string(name) + "'");
}

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::separated:
      return "separated";
    case ScenarioKind::near_boundary:
      return "near_boundary";
    case ScenarioKind::pocket:
      return "pocket";
  }
  return "unknown";
}

void ScenarioConfig::validate() const {
  if (samples_per_class < 1) throw ValidationError("samples_per_class must be >= 1");
  if (dimension < 1) throw ValidationError("dimension must be >= 1");
  if (num_classes < 2) throw ValidationError("num_classes must be >= 2");
  if (!(cluster_std >= 0.0) || !std::isfinite(cluster_std)) {
    throw ValidationError("cluster_std must be finite and >= 0");
  }
  if (!std::isfinite(gap) || gap < 0.0) throw ValidationError("gap must be finite and >= 0");
  if (!std::isfinite(pocket_offset)) throw ValidationError("pocket_offset must be finite");
  if (pocket_std && (!(*pocket_std >= 0.0) || !std::isfinite(*pocket_std))) {
    throw ValidationError("pocket_std must be finite and >= 0");
  }
  if (kind == ScenarioKind::pocket) {
    if (pocket_size < 1 || pocket_size >= samples_per_class) {
      throw ValidationError("pocket_size must be in [1, samples_per_class)");
    }
  }
}

LabeledDataset gen_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const double spacing = cfg.kind == ScenarioKind::near_boundary ? 2.0 * cfg.cluster_std : cfg.gap;

  LabeledDataset ds;
  ds.num_classes = cfg.num_classes;
  ds.features = Matrix(cfg.samples_per_class * cfg.num_classes, cfg.dimension);
  ds.labels.reserve(cfg.samples_per_class * cfg.num_classes);

  std::size_t row = 0;
  for (std::size_t k = 0; k < cfg.num_classes; ++k) {
    for (std::size_t n = 0; n < cfg.samples_per_class; ++n, ++row) {
      // The last pocket_size points of class 1 form the pocket.
      const bool in_pocket = cfg.kind == ScenarioKind::pocket && k == 1 &&
                             n >= cfg.samples_per_class - cfg.pocket_size;
      const double center0 = in_pocket ? cfg.pocket_offset : static_cast<double>(k) * spacing;
      const double spread = in_pocket ? cfg.pocket_std.value_or(cfg.cluster_std) : cfg.cluster_std;
      auto x = ds.features.row(row);
      for (std::size_t d = 0; d < cfg.dimension; ++d) {
        x[d] = (d == 0 ? center0 : 0.0) + spread * rng.normal();
      }
      ds.labels.push_back(k);
    }
  }
  return ds;
}

LabeledDataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ValidationError(line_error(path, 1, "missing header"));
  const auto header = split_commas(trim(line));
  if (header.size() < 2 || trim(header.back()) != "label") {
    throw ValidationError(line_error(path, 1, "missing header: expected f0,...,label"));
  }
  const std::size_t dim = header.size() - 1;
  for (std::size_t d = 0; d < dim; ++d) {
    if (trim(header[d]) != "f" + std::to_string(d)) {
      throw ValidationError(line_error(path, 1, "expected header column f" + std::to_string(d) +
                                                    ", got '" + std::string(header[d]) + "'"));
    }
  }

  LabeledDataset ds;
  ds.features = Matrix(0, dim);
  std::vector<std::size_t> line_numbers;
  std::vector<double> row(dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != dim + 1) {
      throw ValidationError(line_error(path, line_no,
                                       "ragged row: " + std::to_string(cells.size()) +
                                           " cells, expected " + std::to_string(dim + 1)));
    }
    for (std::size_t d = 0; d < dim; ++d) {
      if (!parse_double(cells[d], row[d])) {
        throw ValidationError(line_error(path, line_no,
                                         "non-numeric cell '" + std::string(cells[d]) + "'"));
      }
    }
    long long label = 0;
    if (!parse_int(cells[dim], label)) {
      throw ValidationError(line_error(path, line_no,
                                       "non-integer label '" + std::string(cells[dim]) + "'"));
    }
    if (label < 0) throw ValidationError(line_error(path, line_no, "negative label"));
    ds.features.append_row(row);
    ds.labels.push_back(static_cast<Label>(label));
    line_numbers.push_back(line_no);
  }
  finish_labels(ds, num_classes, path, line_numbers);
  return ds;
}

std::string to_csv_string(const LabeledDataset& ds) {
  ds.validate();
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t d = 0; d < ds.dim(); ++d) out << 'f' << d << ',';
  out << "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.sample(i)) out << v << ',';
    out << ds.labels[i] << '\n';
  }
  return out.str();
}

void save_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  const std::string text = to_csv_string(ds);
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

LabeledDataset load_jsonl(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  LabeledDataset ds;
  std::vector<std::size_t> line_numbers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(line_error(path, line_no, e.what()));
    }
    if (!obj.is_object() || !obj.contains("x") || !obj.contains("y") || !obj["x"].is_array() ||
        !obj["y"].is_number_integer()) {
      throw ValidationError(line_error(path, line_no, "expected {\"x\": [...], \"y\": int}"));
    }
    std::vector<double> row;
    for (const auto& v : obj["x"]) {
      if (!v.is_number()) throw ValidationError(line_error(path, line_no, "non-numeric feature"));
      row.push_back(v.get<double>());
    }
    require_finite(row, line_error(path, line_no, "features"));
    if (!ds.features.empty() && row.size() != ds.features.cols()) {
      throw ValidationError(line_error(path, line_no, "ragged row"));
    }
    const auto label = obj["y"].get<long long>();
    if (label < 0) throw ValidationError(line_error(path, line_no, "negative label"));
    ds.features.append_row(row);
    ds.labels.push_back(static_cast<Label>(label));
    line_numbers.push_back(line_no);
  }
  finish_labels(ds, num_classes, path, line_numbers);
  return ds;
}

void save_jsonl(const LabeledDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  auto out = open_out(path);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto x = ds.sample(i);
    nlohmann::json obj{{"x", std::vector<double>(x.begin(), x.end())}, {"y", ds.labels[i]}};
    out << obj.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

LabeledDataset load_dataset(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  return path.extension() == ".jsonl" ? load_jsonl(path, num_classes) : load_csv(path, num_classes);
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  if (path.extension() == ".jsonl") {
    save_jsonl(ds, path);
  } else {
    save_csv(ds, path);
  }
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class.at(ds.labels[i]).push_back(i);
  return by_class;
}

}  // namespace

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                        double train_fraction, Rng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie in (0, 1)");
  }
  ds.validate();
  auto by_class = indices_by_class(ds);
  std::vector<std::size_t> first, second;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < 2) {
      throw ValidationError("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                            " samples; split needs at least 2");
    }
    rng.shuffle(idx);
    auto n_first = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    n_first = std::clamp<std::size_t>(n_first, 1, idx.size() - 1);
    first.insert(first.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_first));
    second.insert(second.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_first), idx.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {ds.subset(first), ds.subset(second)};
}

std::vector<std::vector<std::size_t>> stratified_batch_indices(const LabeledDataset& ds,
                                                               std::size_t batch_size, Rng& rng) {
  if (batch_size < ds.num_classes) {
    throw ValidationError("batch_size " + std::to_string(batch_size) + " < num_classes " +
                          std::to_string(ds.num_classes));
  }
  auto by_class = indices_by_class(ds);
  std::size_t min_count = std::numeric_limits<std::size_t>::max();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) {
      throw ValidationError("class " + std::to_string(c) + " has no samples");
    }
    min_count = std::min(min_count, by_class[c].size());
  }

  // Floor division folds the remainder into the other batches; capping at the
  // smallest class keeps every batch class-complete.
  const std::size_t n_batches = std::max<std::size_t>(1, std::min(ds.size() / batch_size, min_count));
  std::vector<std::vector<std::size_t>> batches(n_batches);
  for (auto& idx : by_class) {
    rng.shuffle(idx);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      batches[r * n_batches / idx.size()].push_back(idx[r]);
    }
  }
  for (auto& b : batches) rng.shuffle(b);
  return batches;
}

std::vector<LabeledDataset> stratified_batches(const LabeledDataset& ds, std::size_t batch_size,
                                               Rng& rng) {
  std::vector<LabeledDataset> out;
  for (const auto& idx : stratified_batch_indices(ds, batch_size, rng)) out.push_back(ds.subset(idx));
  return out;
}

}  // namespace sepdetect
