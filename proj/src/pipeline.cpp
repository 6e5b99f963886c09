#include "sepdetect/pipeline.hpp"

#include <cmath>
#include <string>

#include "sepdetect/error.hpp"
#include "sepdetect/io.hpp"

namespace sepdetect {

namespace {

constexpr std::uint64_t kSplitStream = 2;

nlohmann::json scenario_json(const ScenarioConfig& s) {
  return {{"kind", to_string(s.kind)},
          {"samples_per_class", s.samples_per_class},
          {"dimension", s.dimension},
          {"num_classes", s.num_classes},
          {"cluster_std", s.cluster_std},
          {"gap", s.gap},
          {"pocket_size", s.pocket_size},
          {"pocket_offset", s.pocket_offset},
          {"pocket_std", s.pocket_std ? nlohmann::json(*s.pocket_std) : nlohmann::json(nullptr)},
          {"seed", s.seed}};
}

RunArtifacts run_one(const ExperimentConfig& cfg, const SeedArtifacts& data, double lambda,
                     std::uint64_t seed) {
  RunArtifacts run;
  run.train_config = cfg.train;
  run.train_config.seed = seed;
  run.train_config.lambda = lambda;

  TrainResult trained = train(data.train, run.train_config);
  run.params = std::move(trained.params);
  run.history = std::move(trained.history);

  run.detector = fit_density(run.params, data.train, cfg.sigma);
  run.detector.checkpoint_hash =
      hash_bytes(json_file_text(checkpoint_to_json(run.params, run.train_config)));
  run.detector.train_data_hash = hash_bytes(to_csv_string(data.train));
  run.detector =
      calibrate_threshold(std::move(run.detector), run.params, data.validation, cfg.target_fpr,
                          cfg.threshold_mode);

  run.attack = choose_attack(run.params, data.test, cfg.epsilon_grid, cfg.min_flip_rate);
  run.adversarial = fgsm_dataset(run.params, data.test, run.attack);

  ReportInputs in;
  in.scenario = std::string(to_string(cfg.scenario.kind));
  in.seeds = {seed};
  in.params = &run.params;
  in.train_config = run.train_config;
  in.detector = &run.detector;
  in.clean_test = &data.test;
  in.adversarial = &run.adversarial;
  in.attack = run.attack;
  run.report = build_report(in);
  return run;
}

}  // namespace

std::vector<double> default_epsilon_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 32; ++k) grid.push_back(0.001 * std::pow(10.0, k / 8.0));
  return grid;
}

void ExperimentConfig::validate() const {
  scenario.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0) ||
      !(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ValidationError("split fractions must lie in (0, 1)");
  }
  if (!(separation_lambda > 0.0)) throw ValidationError("separation_lambda must be > 0");
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) throw ValidationError("target_fpr must lie in (0, 1)");
  if (epsilon_grid.empty()) throw ValidationError("epsilon grid is empty");
  for (double e : epsilon_grid) {
    if (!std::isfinite(e) || e < 0.0) throw ValidationError("epsilon grid values must be >= 0");
  }
  train.validate(scenario.num_classes);
}

ExperimentConfig default_experiment(ScenarioKind kind) {
  ExperimentConfig cfg;
  cfg.scenario.kind = kind;
  cfg.scenario.samples_per_class = 100;
  cfg.scenario.dimension = 2;
  // Small feature scale keeps lambda * separation below the cross-entropy at
  // initialization; at unit scale the separation term starts ~100x larger.
  cfg.scenario.cluster_std = 0.03;
  cfg.scenario.gap = 0.3;
  if (kind == ScenarioKind::pocket) {
    cfg.scenario.pocket_size = 20;
    cfg.scenario.pocket_offset = 0.03;
    cfg.scenario.pocket_std = 0.009;
  }
  return cfg;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json scenario = scenario_json(cfg.scenario);
  scenario.erase("seed");
  nlohmann::json train = to_json(cfg.train);
  train.erase("seed");
  train.erase("lambda");
  return {{"scenario", std::move(scenario)},
          {"train", std::move(train)},
          {"separation_lambda", cfg.separation_lambda},
          {"train_fraction", cfg.train_fraction},
          {"validation_fraction", cfg.validation_fraction},
          {"target_fpr", cfg.target_fpr},
          {"threshold_mode", to_string(cfg.threshold_mode)},
          {"sigma", cfg.sigma ? nlohmann::json(*cfg.sigma) : nlohmann::json(nullptr)},
          {"epsilon_grid", cfg.epsilon_grid},
          {"min_flip_rate", cfg.min_flip_rate}};
}

AttackConfig choose_attack(const ModelParams& params, const LabeledDataset& test,
                           std::span<const double> epsilon_grid, double min_flip_rate) {
  if (epsilon_grid.empty()) throw ValidationError("epsilon grid is empty");
  AttackConfig cfg;
  for (double eps : epsilon_grid) {
    cfg.epsilon = eps;
    if (flip_rate(params, test, fgsm_dataset(params, test, cfg)) >= min_flip_rate) return cfg;
  }
  return cfg;
}

SeedArtifacts run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SeedArtifacts art;
  art.seed = seed;

  ScenarioConfig scenario = cfg.scenario;
  scenario.seed = seed;
  const LabeledDataset all = gen_scenario(scenario);
  Rng split_rng(derive_seed(seed, kSplitStream));
  auto [train_set, rest] = split_dataset(all, cfg.train_fraction, split_rng);
  auto [validation, test] = split_dataset(rest, cfg.validation_fraction, split_rng);
  art.train = std::move(train_set);
  art.validation = std::move(validation);
  art.test = std::move(test);

  art.baseline = run_one(cfg, art, 0.0, seed);
  art.separation = run_one(cfg, art, cfg.separation_lambda, seed);
  return art;
}

void write_seed_artifacts(const SeedArtifacts& art, const ExperimentConfig& cfg,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json base{{"subcommand", "repro"}, {"seed", art.seed}, {"config", to_json(cfg)}};

  const std::pair<const char*, const LabeledDataset*> splits[] = {
      {"train.csv", &art.train}, {"validation.csv", &art.validation}, {"test.csv", &art.test}};
  for (const auto& [name, ds] : splits) {
    save_csv(*ds, dir / name);
    write_manifest(dir / name, base);
  }
  const std::string train_hash = hash_file(dir / "train.csv");
  const std::string test_hash = hash_file(dir / "test.csv");

  const std::pair<const char*, const RunArtifacts*> runs[] = {
      {"baseline", &art.baseline}, {"separation", &art.separation}};
  for (const auto& [name, run] : runs) {
    const auto run_dir = dir / name;
    std::filesystem::create_directories(run_dir);
    nlohmann::json m = base;
    m["run"] = name;
    m["lambda"] = run->train_config.lambda;

    save_checkpoint(run->params, run->train_config, run_dir / "checkpoint.json");
    m["inputs"] = {{"train.csv", train_hash}};
    write_manifest(run_dir / "checkpoint.json", m);
    write_json(to_json(run->history), run_dir / "history.json");
    write_manifest(run_dir / "history.json", m);

    const std::string ckpt_hash = hash_file(run_dir / "checkpoint.json");
    if (ckpt_hash != run->detector.checkpoint_hash) {
      throw IoError("checkpoint hash changed between training and writing");
    }
    save_density_model(run->detector, run_dir / "density_model.json");
    m["inputs"] = {{"checkpoint.json", ckpt_hash}, {"train.csv", train_hash}};
    write_manifest(run_dir / "density_model.json", m);

    save_csv(run->adversarial, run_dir / "adversarial.csv");
    m["inputs"] = {{"checkpoint.json", ckpt_hash}, {"test.csv", test_hash}};
    m["attack"] = to_json(run->attack);
    m["source_checkpoint"] = "checkpoint.json";
    m["source_dataset"] = "../test.csv";
    write_manifest(run_dir / "adversarial.csv", m);

    write_json(to_json(run->report), run_dir / "report.json");
    m["inputs"] = {{"checkpoint.json", ckpt_hash},
                   {"density_model.json", hash_file(run_dir / "density_model.json")},
                   {"test.csv", test_hash},
                   {"adversarial.csv", hash_file(run_dir / "adversarial.csv")}};
    write_manifest(run_dir / "report.json", m);
  }
}

nlohmann::json summarize_seeds(std::span<const SeedArtifacts> seeds, const ExperimentConfig& cfg) {
  nlohmann::json rows = nlohmann::json::array();
  std::size_t auc_wins = 0, distance_wins = 0, both_auc_above_half = 0;
  for (const auto& s : seeds) {
    const auto& b = s.baseline.report;
    const auto& p = s.separation.report;
    const double auc_b = b.auc.value_or(NAN);
    const double auc_p = p.auc.value_or(NAN);
    const bool auc_win = b.auc && p.auc && auc_p >= auc_b;
    const bool dist_win = p.min_class_mean_distance > b.min_class_mean_distance;
    auc_wins += auc_win ? 1 : 0;
    distance_wins += dist_win ? 1 : 0;
    both_auc_above_half += (b.auc && p.auc && auc_b > 0.5 && auc_p > 0.5) ? 1 : 0;
    auto opt = [](const std::optional<double>& v) {
      return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    rows.push_back({{"seed", s.seed},
                    {"baseline", {{"auc", opt(b.auc)},
                                  {"epsilon", s.baseline.attack.epsilon},
                                  {"attack_flip_rate", opt(b.attack_flip_rate)},
                                  {"detection_rate_at_fpr", opt(b.detection_rate_at_fpr)},
                                  {"min_class_mean_distance", b.min_class_mean_distance}}},
                    {"separation", {{"auc", opt(p.auc)},
                                    {"epsilon", s.separation.attack.epsilon},
                                    {"attack_flip_rate", opt(p.attack_flip_rate)},
                                    {"detection_rate_at_fpr", opt(p.detection_rate_at_fpr)},
                                    {"min_class_mean_distance", p.min_class_mean_distance}}},
                    {"separation_auc_wins", auc_win},
                    {"separation_distance_wins", dist_win}});
  }
  return {{"schema_version", 1},
          {"scenario", to_string(cfg.scenario.kind)},
          {"config", to_json(cfg)},
          {"seeds", std::move(rows)},
          {"separation_auc_wins", auc_wins},
          {"separation_distance_wins", distance_wins},
          {"both_auc_above_half", both_auc_above_half},
          {"num_seeds", seeds.size()}};
}

}  // namespace sepdetect
