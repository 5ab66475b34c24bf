#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "ecgcbam/error.hpp"
#include "ecgcbam/eval.hpp"
#include "ecgcbam/train.hpp"

namespace ecgcbam::train {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw InvalidSpec("unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidSpec("batch_size must be >= 1");
  if (!(learning_rate >= 0)) throw InvalidSpec("learning_rate must be non-negative");
  if (patience < 1) throw InvalidSpec("patience must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0)) throw InvalidSpec("invalid Adam constants");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
                     {"learning_rate", c.learning_rate}, {"optimizer", to_string(c.optimizer)},
                     {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon},
                     {"patience", c.patience}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
}

void to_json(nlohmann::json& j, const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  for (const EpochStats& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_accuracy", e.train_accuracy},
                      {"val_loss", e.val_loss},
                      {"val_auc", num(e.val_auc)}});
  }
  j = nlohmann::json{{"epochs", epochs},
                     {"best_epoch", r.best_epoch},
                     {"best_val_auc", num(r.best_val_auc)},
                     {"early_stopped", r.early_stopped}};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset d;
  for (const std::size_t i : indices) {
    d.windows.push_back(windows.at(i));
    d.labels.push_back(labels.at(i));
    d.subjects.push_back(subjects.at(i));
  }
  return d;
}

Dataset Dataset::from_segments(std::span<const signal::Segment> segs) {
  Dataset d;
  for (const signal::Segment& s : segs) {
    d.windows.push_back(s.values);
    d.labels.push_back(s.label);
    d.subjects.push_back(signal::subject_hash(s.subject_id));
  }
  return d;
}

Dataset Dataset::from_cache(std::vector<signal::CachedSegment> segs) {
  Dataset d;
  for (signal::CachedSegment& s : segs) {
    d.windows.push_back(std::move(s.values));
    d.labels.push_back(s.label);
    d.subjects.push_back(s.subject_hash);
  }
  return d;
}

double mean_bce(std::span<const double> probs, std::span<const int> labels) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double q = std::clamp(probs[i], ops::kBceClamp, 1.0 - ops::kBceClamp);
    acc -= labels[i] ? std::log(q) : std::log(1.0 - q);
  }
  return acc / static_cast<double>(probs.size());
}

namespace {

void check_dataset(const Dataset& d, std::size_t width, const char* name) {
  if (d.size() == 0) throw EmptyDataset(std::string(name) + " set is empty");
  for (const auto& w : d.windows) {
    if (w.size() != width) {
      throw ShapeMismatch(std::string(name) + " window width " + std::to_string(w.size()) +
                          " does not match model width " + std::to_string(width));
    }
  }
}

}  // namespace

TrainResult train(const model::ModelConfig& config, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg) {
  return train_from(model::init_params(config, cfg.seed), train_set, val_set, cfg);
}

TrainResult train_from(model::ModelParams params, const Dataset& train_set, const Dataset& val_set,
                       const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t width = params.config.width;
  check_dataset(train_set, width, "training");
  check_dataset(val_set, width, "validation");

  const auto start = std::chrono::steady_clock::now();
  const std::vector<Tensor> tensors = params.parameters();
  AdamState adam;
  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66Dull);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.params = params.clone();
  TrainReport& report = result.report;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - begin);
      std::vector<double> flat;
      flat.reserve(n * width);
      std::vector<double> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = order[begin + i];
        flat.insert(flat.end(), train_set.windows[idx].begin(), train_set.windows[idx].end());
        y[i] = static_cast<double>(train_set.labels[idx]);
      }
      for (const Tensor& t : tensors) t.zero_grad();
      Tape::current().clear();
      const Tensor p = model::model_forward(Tensor::from({n, 1, width}, std::move(flat)), params);
      const Tensor loss = ops::bce_loss(p, y);
      if (!std::isfinite(loss.item())) {
        Tape::current().clear();
        throw DivergenceDetected("non-finite loss in epoch " + std::to_string(epoch));
      }
      backward(loss);
      if (cfg.optimizer == OptimizerKind::Adam) adam_step(tensors, adam, cfg);
      else sgd_step(tensors, cfg.learning_rate);

      loss_sum += loss.item() * static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) correct += ((p.data()[i] >= 0.5) == (y[i] == 1.0)) ? 1 : 0;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    const std::vector<double> val_p = model::predict(params, val_set.windows);
    stats.val_loss = mean_bce(val_p, val_set.labels);
    try {
      stats.val_auc = eval::roc_auc(val_p, val_set.labels).auc;
    } catch (const SingleClass&) {
      stats.val_auc = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(stats.train_loss) || !std::isfinite(stats.val_loss)) {
      throw DivergenceDetected("non-finite loss after epoch " + std::to_string(epoch));
    }
    report.epochs.push_back(stats);
    if (cfg.progress) {
      std::fprintf(stderr, "epoch %3zu  train_loss %.5f  train_acc %.4f  val_loss %.5f  val_auc %.4f\n", epoch,
                   stats.train_loss, stats.train_accuracy, stats.val_loss, stats.val_auc);
    }

    // Validation AUC selects the model; single-class validation falls back to loss.
    const double metric = std::isnan(stats.val_auc) ? -stats.val_loss : stats.val_auc;
    if (metric > best_metric) {
      best_metric = metric;
      report.best_epoch = epoch;
      report.best_val_auc = stats.val_auc;
      result.params.assign_values(params);
      stale = 0;
    } else if (++stale >= cfg.patience) {
      report.early_stopped = true;
      break;
    }
  }
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace ecgcbam::train
