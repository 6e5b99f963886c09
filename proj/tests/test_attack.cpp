#include <doctest.h>

#include "sepdetect/attack.hpp"
#include "sepdetect/error.hpp"
#include "sepdetect/trainer.hpp"
#include "support.hpp"

using namespace sepdetect;

namespace {

// Identity hidden layer, then class rows (1,0) and (-1,0).
ModelParams linear_two_class() {
  ModelParams p;
  p.layers.push_back({Matrix(2, 2, std::vector<double>{1, 0, 0, 1}), Vector{0, 0}});
  p.layers.push_back({Matrix(2, 2, std::vector<double>{1, 0, -1, 0}), Vector{0, 0}});
  return p;
}

}  // namespace

TEST_SUITE("attack") {

TEST_CASE("hand example on a linear model") {
  const auto p = linear_two_class();
  const Vector x{0.5, 0.2};
  const auto g = input_gradient(p, x, 0);
  const double p0 = forward(p, x).probs[0];
  CHECK(g[0] == doctest::Approx(2 * p0 - 2).epsilon(1e-15));
  CHECK(g[1] == 0.0);
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  const auto adv = fgsm(p, x, 0, cfg);
  CHECK(adv[0] == 0.4);
  CHECK(adv[1] == 0.2);
}

TEST_CASE("zero epsilon is the identity") {
  Rng rng(1);
  const auto p = testing::random_model(std::vector<std::size_t>{3, 5, 4, 3}, rng);
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto x = gaussian_sample(rng, 0, 1, 3);
    const auto adv = fgsm(p, x, rng.uniform_index(3), cfg);
    CHECK(adv == x);
    CHECK(predict(p, adv) == predict(p, x));
  }
}

TEST_CASE("perturbation is exactly epsilon where the gradient is nonzero") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(6);
    const auto p = testing::random_model(std::vector<std::size_t>{d, 1 + rng.uniform_index(6), 2 + rng.uniform_index(3)}, rng);
    const auto x = gaussian_sample(rng, 0, 1, d);
    const Label y = rng.uniform_index(p.num_classes());
    AttackConfig cfg;
    cfg.epsilon = rng.uniform();
    const auto g = input_gradient(p, x, y);
    const auto adv = fgsm(p, x, y, cfg);
    for (std::size_t i = 0; i < d; ++i) {
      const double delta = adv[i] - x[i];
      if (g[i] == 0.0) {
        CHECK(delta == 0.0);
      } else {
        CHECK(std::abs(delta) == doctest::Approx(cfg.epsilon).epsilon(1e-12));
        CHECK((delta > 0) == (g[i] > 0));
      }
    }
    CHECK(fgsm(p, x, y, cfg) == adv);
  }
}

TEST_CASE("clamp keeps the box") {
  const auto p = linear_two_class();
  AttackConfig cfg;
  cfg.epsilon = 1.0;
  cfg.clamp = std::make_pair(0.0, 1.0);
  const auto adv = fgsm(p, Vector{0.5, 0.2}, 0, cfg);
  CHECK(adv[0] == 0.0);
  CHECK(adv[1] == 0.2);
}

TEST_CASE("attack config validation and errors") {
  AttackConfig cfg;
  cfg.epsilon = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.epsilon = NAN;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.epsilon = 0.1;
  cfg.clamp = std::make_pair(1.0, 1.0);
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  const auto p = linear_two_class();
  CHECK_THROWS_AS(fgsm(p, Vector{1, 2, 3}, 0, AttackConfig{}), ValidationError);
  CHECK_THROWS_AS(fgsm(p, Vector{1, 2}, 5, AttackConfig{}), ValidationError);
}

TEST_CASE("dataset attack keeps labels") {
  LabeledDataset ds;
  ds.num_classes = 2;
  ds.features = Matrix(2, 2, std::vector<double>{0.5, 0.2, -0.5, 0.1});
  ds.labels = {0, 1};
  AttackConfig cfg;
  cfg.epsilon = 0.6;
  // shifted so both hidden units stay active: logits = (x0, -x0)
  auto p = linear_two_class();
  p.layers[0].biases = {1, 1};
  p.layers[1].biases = {-1, 1};
  const auto adv = fgsm_dataset(p, ds, cfg);
  CHECK(adv.labels == ds.labels);
  CHECK(adv.features(0, 0) == doctest::Approx(-0.1));
  CHECK(adv.features(1, 0) == doctest::Approx(0.1));
  CHECK(adv.features(0, 1) == 0.2);
  CHECK(flip_rate(p, ds, adv) == 1.0);
}

TEST_CASE("flip rate grows with epsilon on the near-boundary scenario") {
  ScenarioConfig sc;
  sc.kind = ScenarioKind::near_boundary;
  sc.samples_per_class = 150;
  sc.seed = 17;
  const auto all = gen_scenario(sc);
  Rng split_rng(1);
  const auto [train_set, test_set] = split_dataset(all, 0.6, split_rng);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.lambda = 0.0;
  cfg.hidden = {16, 8};
  cfg.seed = 5;
  const auto model = train(train_set, cfg).params;
  std::vector<double> rates;
  for (double eps : {0.05, 0.1, 0.2, 0.4}) {
    AttackConfig a;
    a.epsilon = eps;
    rates.push_back(flip_rate(model, test_set, fgsm_dataset(model, test_set, a)));
  }
  for (std::size_t i = 1; i < rates.size(); ++i) CHECK(rates[i] >= rates[i - 1]);
  CHECK(rates.back() > rates.front());
}

}
