#include <doctest.h>

#include "sepdetect/attack.hpp"
#include "sepdetect/error.hpp"
#include "sepdetect/evaluation.hpp"
#include "sepdetect/io.hpp"
#include "sepdetect/trainer.hpp"
#include "support.hpp"

using namespace sepdetect;

namespace {

double brute_auc(const std::vector<double>& clean, const std::vector<double>& adv) {
  double wins = 0;
  for (double a : adv) {
    for (double c : clean) wins += a < c ? 1.0 : (a == c ? 0.5 : 0.0);
  }
  return wins / (clean.size() * adv.size());
}

struct Fixture {
  ModelParams params;
  DensityModel detector;
  LabeledDataset test;
  TrainConfig cfg;
};

Fixture make_fixture() {
  ScenarioConfig sc;
  sc.kind = ScenarioKind::near_boundary;
  sc.samples_per_class = 90;
  sc.seed = 8;
  Rng rng(3);
  auto [tr, rest] = split_dataset(gen_scenario(sc), 0.6, rng);
  auto [val, test] = split_dataset(rest, 0.5, rng);
  Fixture f;
  f.cfg.epochs = 15;
  f.cfg.hidden = {16, 8};
  f.cfg.seed = 2;
  f.params = train(tr, f.cfg).params;
  f.detector = calibrate_threshold(fit_density(f.params, tr), f.params, val, 0.1);
  f.detector.checkpoint_hash = hash_bytes(json_file_text(checkpoint_to_json(f.params, f.cfg)));
  f.test = test;
  return f;
}

ReportInputs inputs_for(const Fixture& f, const LabeledDataset* adv, std::optional<AttackConfig> attack) {
  ReportInputs in;
  in.scenario = "near_boundary";
  in.seeds = {8};
  in.params = &f.params;
  in.train_config = f.cfg;
  in.detector = &f.detector;
  in.clean_test = &f.test;
  in.adversarial = adv;
  in.attack = attack;
  in.checkpoint_hash = f.detector.checkpoint_hash;
  return in;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("auc hand values") {
  CHECK(roc_auc(Vector{0.9, 0.8}, Vector{0.85, 0.1}).auc == 0.75);
  CHECK(roc_auc(Vector{0.9, 0.8}, Vector{0.1, 0.2}).auc == 1.0);
  CHECK(roc_auc(Vector{0.1, 0.5, 0.5}, Vector{0.5, 0.1, 0.5}).auc == 0.5);
  CHECK(roc_auc(Vector{0.1}, Vector{0.9}).auc == 0.0);
  CHECK_THROWS_AS(roc_auc(Vector{}, Vector{0.1}), ValidationError);
  CHECK_THROWS_AS(roc_auc(Vector{0.1}, Vector{}), ValidationError);
}

TEST_CASE("auc agrees with pair counting and the ROC area") {
  Rng rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> clean(1 + rng.uniform_index(40)), adv(1 + rng.uniform_index(40));
    // coarse values force ties
    for (double& v : clean) v = static_cast<double>(rng.uniform_index(10)) / 10.0;
    for (double& v : adv) v = static_cast<double>(rng.uniform_index(8)) / 10.0;
    const auto curve = roc_auc(clean, adv);
    CHECK(curve.auc == doctest::Approx(brute_auc(clean, adv)).epsilon(1e-12));
    CHECK(std::abs(trapezoid_area(curve.points) - curve.auc) <= 1e-9);
    CHECK(curve.auc >= 0.0);
    CHECK(curve.auc <= 1.0);
    CHECK(curve.points.front() == RocPoint{0.0, 0.0});
    CHECK(curve.points.back() == RocPoint{1.0, 1.0});
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      CHECK(curve.points[i].first >= curve.points[i - 1].first);
      CHECK(curve.points[i].second >= curve.points[i - 1].second);
    }
  }
}

TEST_CASE("summaries") {
  const auto s = summarize(Vector{3, 1, 2, 10});
  CHECK(s.count == 4);
  CHECK(s.min == 1);
  CHECK(s.median == 2.5);
  CHECK(s.max == 10);
  CHECK(summarize(Vector{7}).median == 7);
}

TEST_CASE("report metrics match an independent recount") {
  const auto f = make_fixture();
  AttackConfig attack;
  attack.epsilon = 0.5;
  const auto adv = fgsm_dataset(f.params, f.test, attack);
  const auto rep = build_report(inputs_for(f, &adv, attack));

  std::vector<double> clean_d, adv_d;
  std::size_t clean_flags = 0, adv_flags = 0;
  for (std::size_t i = 0; i < f.test.size(); ++i) {
    const auto c = detect(f.detector, f.params, f.test.sample(i));
    const auto a = detect(f.detector, f.params, adv.sample(i));
    clean_d.push_back(c.density);
    clean_flags += c.density < f.detector.thresholds[c.predicted_class];
    if (a.predicted_class != c.predicted_class) {
      adv_d.push_back(a.density);
      adv_flags += a.density < f.detector.thresholds[a.predicted_class];
    }
  }
  REQUIRE(!adv_d.empty());
  REQUIRE(rep.auc.has_value());
  CHECK(*rep.auc == doctest::Approx(brute_auc(clean_d, adv_d)).epsilon(1e-12));
  CHECK(*rep.detection_rate_at_fpr == static_cast<double>(adv_flags) / adv_d.size());
  CHECK(rep.clean_fpr_realized == static_cast<double>(clean_flags) / f.test.size());
  CHECK(*rep.attack_flip_rate == static_cast<double>(adv_d.size()) / f.test.size());
  CHECK(rep.adversarial->count == adv_d.size());
  CHECK(rep.adversarial_candidates == f.test.size());
  CHECK(rep.clean.count == f.test.size());
  CHECK(rep.min_class_mean_distance > 0.0);
  const auto j = to_json(rep);
  CHECK(j["adversarial_present"] == true);
  CHECK(j["attack_config"]["epsilon"] == 0.5);
}

TEST_CASE("report without adversarial samples") {
  const auto f = make_fixture();
  AttackConfig none;
  none.epsilon = 0.0;
  const auto same = fgsm_dataset(f.params, f.test, none);
  for (const LabeledDataset* adv : {&same, static_cast<const LabeledDataset*>(nullptr)}) {
    const auto rep = build_report(inputs_for(f, adv, std::nullopt));
    CHECK(!rep.auc);
    CHECK(!rep.adversarial);
    CHECK(!rep.detection_rate_at_fpr);
    const auto j = to_json(rep);
    CHECK(!j["metrics"].contains("auc"));
    CHECK(j["densities"]["adversarial"].is_null());
    CHECK(j["adversarial_present"] == false);
    CHECK(j["roc"].empty());
  }
}

TEST_CASE("report is byte identical across runs") {
  const auto a = make_fixture();
  const auto b = make_fixture();
  AttackConfig attack;
  attack.epsilon = 0.3;
  const auto adv_a = fgsm_dataset(a.params, a.test, attack);
  const auto adv_b = fgsm_dataset(b.params, b.test, attack);
  CHECK(json_file_text(to_json(build_report(inputs_for(a, &adv_a, attack)))) ==
        json_file_text(to_json(build_report(inputs_for(b, &adv_b, attack)))));
}

TEST_CASE("report input errors") {
  const auto f = make_fixture();
  auto in = inputs_for(f, nullptr, std::nullopt);
  in.checkpoint_hash = "ffffffffffffffff";
  CHECK_THROWS_AS(build_report(in), ValidationError);
  const auto short_adv = f.test.subset(std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(build_report(inputs_for(f, &short_adv, std::nullopt)), ValidationError);
  auto uncal = f.detector;
  uncal.thresholds.clear();
  in = inputs_for(f, nullptr, std::nullopt);
  in.detector = &uncal;
  CHECK_THROWS_AS(build_report(in), ValidationError);
}

}
