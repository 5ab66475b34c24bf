#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgcbam/model.hpp"
#include "ecgcbam/signal.hpp"

namespace ecgcbam::train {

enum class OptimizerKind { Adam, Sgd };
std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  bool progress = false;  // one line per epoch on stderr

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Windows with labels and subject identity, all of one width.
struct Dataset {
  std::vector<std::vector<double>> windows;
  std::vector<int> labels;
  std::vector<std::uint64_t> subjects;

  std::size_t size() const { return windows.size(); }
  std::size_t width() const { return windows.empty() ? 0 : windows.front().size(); }
  Dataset subset(std::span<const std::size_t> indices) const;

  static Dataset from_segments(std::span<const signal::Segment> segs);
  static Dataset from_cache(std::vector<signal::CachedSegment> segs);
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_auc = 0.0;  // NaN when the validation set holds one class
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
  bool early_stopped = false;
  double wall_time_s = 0.0;
};

/// Serializes everything except wall time, which varies between reruns.
void to_json(nlohmann::json& j, const TrainReport& r);

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;
};

/// w <- w - lr * g for every tensor; missing grads count as zero.
void sgd_step(std::span<const Tensor> params, double learning_rate);
/// Bias-corrected Adam.
void adam_step(std::span<const Tensor> params, AdamState& state, const TrainConfig& cfg);

struct TrainResult {
  model::ModelParams params;  // from the best validation epoch
  TrainReport report;
};

/// Mini-batch BCE minimization with early stopping on validation AUC.
/// Throws EmptyDataset, ShapeMismatch or DivergenceDetected.
TrainResult train(const model::ModelConfig& config, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg);

/// Same, continuing from given parameters.
TrainResult train_from(model::ModelParams init, const Dataset& train_set, const Dataset& val_set,
                       const TrainConfig& cfg);

/// Mean BCE of probabilities against labels (clamped like the loss op).
double mean_bce(std::span<const double> probs, std::span<const int> labels);

}  // namespace ecgcbam::train
