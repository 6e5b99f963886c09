#include <doctest.h>

#include "sepdetect/error.hpp"
#include "sepdetect/io.hpp"
#include "sepdetect/pipeline.hpp"
#include "support.hpp"

using namespace sepdetect;

namespace {

ExperimentConfig fast(ScenarioKind kind) {
  auto cfg = default_experiment(kind);
  cfg.scenario.samples_per_class = 60;
  cfg.train.epochs = 15;
  cfg.train.hidden = {16, 8};
  return cfg;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("epsilon grid is increasing and positive") {
  const auto grid = default_epsilon_grid();
  REQUIRE(!grid.empty());
  CHECK(grid.front() > 0.0);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
}

TEST_CASE("experiment validation") {
  auto cfg = default_experiment(ScenarioKind::pocket);
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.scenario.pocket_size > 0);
  cfg.target_fpr = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = default_experiment(ScenarioKind::separated);
  cfg.epsilon_grid.clear();
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("choose_attack takes the smallest epsilon reaching the flip target") {
  const auto cfg = fast(ScenarioKind::near_boundary);
  const auto art = run_seed(cfg, 3);
  const auto& run = art.separation;
  const std::vector<double> grid = cfg.epsilon_grid;
  const auto chosen = choose_attack(run.params, art.test, grid, cfg.min_flip_rate);
  AttackConfig probe;
  for (double eps : grid) {
    probe.epsilon = eps;
    const double rate = flip_rate(run.params, art.test, fgsm_dataset(run.params, art.test, probe));
    if (eps < chosen.epsilon) CHECK(rate < cfg.min_flip_rate);
    if (eps == chosen.epsilon && eps != grid.back()) CHECK(rate >= cfg.min_flip_rate);
  }
  CHECK(choose_attack(run.params, art.test, std::vector<double>{0.0}, 0.99).epsilon == 0.0);
}

TEST_CASE("seed run shares data and differs only in lambda") {
  const auto cfg = fast(ScenarioKind::pocket);
  const auto art = run_seed(cfg, 5);
  CHECK(art.baseline.train_config.lambda == 0.0);
  CHECK(art.separation.train_config.lambda == cfg.separation_lambda);
  auto a = art.baseline.train_config;
  auto b = art.separation.train_config;
  a.lambda = b.lambda = 0;
  CHECK(a == b);
  CHECK(art.train.size() + art.validation.size() + art.test.size() ==
        cfg.scenario.samples_per_class * cfg.scenario.num_classes);
  CHECK(art.baseline.adversarial.size() == art.test.size());
  CHECK(art.baseline.report.scenario == "pocket");
  const auto summary = summarize_seeds(std::vector<SeedArtifacts>{art}, cfg);
  CHECK(summary["num_seeds"] == 1);
  CHECK(summary["seeds"].size() == 1);
}

TEST_CASE("artifacts on disk regenerate the same report") {
  const auto dir = testing::scratch_dir("pipeline_artifacts");
  const auto cfg = fast(ScenarioKind::near_boundary);
  const auto art = run_seed(cfg, 2);
  write_seed_artifacts(art, cfg, dir);
  for (const char* run : {"baseline", "separation"}) {
    for (const char* f : {"checkpoint.json", "history.json", "density_model.json", "adversarial.csv", "report.json"}) {
      const auto path = dir / run / f;
      CHECK(std::filesystem::exists(path));
      const auto m = read_json(manifest_path(path));
      CHECK(m["output"]["hash"] == hash_file(path));
    }
  }
  for (const char* f : {"train.csv", "validation.csv", "test.csv"}) CHECK(std::filesystem::exists(manifest_path(dir / f)));

  const auto ck = load_checkpoint(dir / "separation" / "checkpoint.json");
  const auto dm = load_density_model(dir / "separation" / "density_model.json");
  const auto test = load_csv(dir / "test.csv", 2);
  const auto adv = load_csv(dir / "separation" / "adversarial.csv", 2);
  ReportInputs in;
  in.scenario = "near_boundary";
  in.seeds = {2};
  in.params = &ck.params;
  in.train_config = ck.config;
  in.detector = &dm;
  in.clean_test = &test;
  in.adversarial = &adv;
  in.attack = art.separation.attack;
  in.checkpoint_hash = hash_file(dir / "separation" / "checkpoint.json");
  CHECK(json_file_text(to_json(build_report(in))) == testing::slurp(dir / "separation" / "report.json"));
}

}
