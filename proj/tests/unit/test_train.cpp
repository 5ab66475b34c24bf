#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ecgcbam/error.hpp"
#include "ecgcbam/eval.hpp"
#include "ecgcbam/train.hpp"

using namespace ecgcbam;
using namespace ecgcbam::train;

namespace {

// A Gaussian bump early in the window for positives, late for negatives.
Dataset separable(std::size_t n, std::uint64_t seed, double noise = 0.05) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, noise);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double center = label ? 10.0 : 28.0;
    std::vector<double> w(40);
    for (std::size_t t = 0; t < w.size(); ++t) {
      const double z = (static_cast<double>(t) - center) / 3.0;
      w[t] = std::exp(-0.5 * z * z) + g(rng);
    }
    d.windows.push_back(std::move(w));
    d.labels.push_back(label);
    d.subjects.push_back(i);
  }
  return d;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.batch_size = 8;
  c.learning_rate = 1e-2;
  c.patience = epochs;
  return c;
}

}  // namespace

TEST_CASE("sgd step follows the definition") {
  Tensor w = Tensor::from({1}, {1.0}, true);
  w.mutable_grad()[0] = 0.5;
  const std::vector<Tensor> params{w};
  sgd_step(params, 0.1);
  CHECK(w.item() == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("first Adam step has magnitude lr whatever the gradient scale") {
  for (double g : {1e-4, 1.0, 1e4}) {
    Tensor w = Tensor::from({2}, {0.0, 0.0}, true);
    w.mutable_grad()[0] = g;
    w.mutable_grad()[1] = -g;
    const std::vector<Tensor> params{w};
    AdamState state;
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    adam_step(params, state, cfg);
    CHECK(w.data()[0] == doctest::Approx(-1e-3).epsilon(1e-3));
    CHECK(w.data()[1] == doctest::Approx(1e-3).epsilon(1e-3));
    CHECK(state.step == 1);
  }
}

TEST_CASE("zero gradients leave parameters unchanged") {
  Tensor w = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  w.mutable_grad();
  const std::vector<Tensor> params{w};
  sgd_step(params, 0.1);
  AdamState state;
  adam_step(params, state, TrainConfig{});
  CHECK(w.data()[0] == 1.0);
  CHECK(w.data()[1] == -2.0);
  CHECK(w.data()[2] == 0.5);
}

TEST_CASE("config validation and json") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), InvalidSpec);
  c = TrainConfig{};
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), InvalidSpec);
  c = TrainConfig{};
  c.optimizer = OptimizerKind::Sgd;
  c.learning_rate = 0.25;
  const nlohmann::json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(back.optimizer == OptimizerKind::Sgd);
  CHECK(back.learning_rate == 0.25);
  CHECK_THROWS_AS(optimizer_from_string("rmsprop"), InvalidSpec);
}

TEST_CASE("tiny model memorizes a separable batch of 32") {
  const Dataset d = separable(32, 1);
  TrainConfig cfg = quick(50);
  cfg.batch_size = 32;
  cfg.learning_rate = 2e-2;
  const TrainResult r = train::train(model::ModelConfig::tiny(), d, d, cfg);
  REQUIRE(r.report.epochs.size() == 50);
  CHECK(r.report.epochs.back().train_loss < 0.1 * std::log(2.0));
}

TEST_CASE("learning rate zero leaves the initialization untouched") {
  const Dataset d = separable(16, 2);
  TrainConfig cfg = quick(3);
  cfg.learning_rate = 0.0;
  cfg.seed = 5;
  for (OptimizerKind k : {OptimizerKind::Adam, OptimizerKind::Sgd}) {
    cfg.optimizer = k;
    const TrainResult r = train::train(model::ModelConfig::tiny(), d, d, cfg);
    CHECK(r.params.values_equal(model::init_params(model::ModelConfig::tiny(), 5)));
  }
}

TEST_CASE("training is deterministic") {
  const Dataset tr = separable(24, 3, 0.5);
  const Dataset va = separable(12, 4, 0.5);
  const TrainConfig cfg = quick(4);
  const TrainResult a = train::train(model::ModelConfig::tiny(), tr, va, cfg);
  const TrainResult b = train::train(model::ModelConfig::tiny(), tr, va, cfg);
  CHECK(a.params.values_equal(b.params));
  CHECK(nlohmann::json(a.report).dump() == nlohmann::json(b.report).dump());
  CHECK(a.report.epochs.size() == 4);
}

TEST_CASE("returned parameters belong to the best epoch") {
  const Dataset tr = separable(40, 5, 0.8);
  const Dataset va = separable(20, 6, 0.8);
  TrainConfig cfg = quick(12);
  cfg.patience = 2;
  const TrainResult r = train::train(model::ModelConfig::tiny(), tr, va, cfg);
  REQUIRE(r.report.best_epoch >= 1);
  CHECK(r.report.epochs.size() <= r.report.best_epoch + cfg.patience);
  if (r.report.epochs.size() < cfg.max_epochs) CHECK(r.report.early_stopped);
  const auto probs = model::predict(r.params, va.windows);
  CHECK(eval::roc_auc(probs, va.labels).auc == r.report.best_val_auc);
  CHECK(r.report.epochs[r.report.best_epoch - 1].val_auc == r.report.best_val_auc);
}

TEST_CASE("train error cases") {
  const Dataset d = separable(8, 7);
  CHECK_THROWS_AS(train::train(model::ModelConfig::tiny(), Dataset{}, d, quick(1)), EmptyDataset);
  CHECK_THROWS_AS(train::train(model::ModelConfig::tiny(), d, Dataset{}, quick(1)), EmptyDataset);
  CHECK_THROWS_AS(train::train(model::ModelConfig{}, d, d, quick(1)), ShapeMismatch);
  model::ModelParams bad = model::init_params(model::ModelConfig::tiny(), 1);
  for (auto& [name, t] : bad.named()) {
    if (name == "head.b") t.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  }
  CHECK_THROWS_AS(train_from(bad, d, d, quick(1)), DivergenceDetected);
}

TEST_CASE("single-class validation falls back to validation loss") {
  const Dataset tr = separable(16, 8);
  Dataset va = separable(8, 9);
  for (int& l : va.labels) l = 1;
  const TrainResult r = train::train(model::ModelConfig::tiny(), tr, va, quick(2));
  CHECK(std::isnan(r.report.epochs[0].val_auc));
  CHECK(r.report.best_epoch >= 1);
}

TEST_CASE("dataset helpers") {
  std::vector<signal::Segment> segs{{"A", 1, {1.0, 2.0}, 1}, {"B", 1, {3.0, 4.0}, 0}};
  const Dataset d = Dataset::from_segments(segs);
  CHECK(d.size() == 2);
  CHECK(d.width() == 2);
  CHECK(d.subjects[0] == signal::subject_hash("A"));
  const std::vector<std::size_t> idx{1};
  const Dataset s = d.subset(idx);
  CHECK(s.size() == 1);
  CHECK(s.labels[0] == 0);
  CHECK(mean_bce(std::vector<double>{0.5}, std::vector<int>{1}) == doctest::Approx(std::log(2.0)));
}
