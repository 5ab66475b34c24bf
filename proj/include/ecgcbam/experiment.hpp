#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgcbam/cohort.hpp"
#include "ecgcbam/eval.hpp"
#include "ecgcbam/model.hpp"
#include "ecgcbam/pipeline.hpp"
#include "ecgcbam/train.hpp"

// Train-and-evaluate runs under the two split protocols.
namespace ecgcbam::experiment {

struct GapConfig {
  pipeline::PreprocessConfig preprocess;
  model::ModelConfig model;
  train::TrainConfig train;
  cohort::SplitFractions fractions;
  double mixed_train_fraction = 0.85;
  eval::ThresholdPolicy policy = eval::ThresholdPolicy::Youden;
  eval::Aggregation aggregation = eval::Aggregation::Mean;
  /// Split and training seeds are derived from this one.
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const GapConfig& c);
void from_json(const nlohmann::json& j, GapConfig& c);

enum class Protocol { SubjectDisjoint, Mixed };
std::string to_string(Protocol p);

struct ProtocolResult {
  Protocol protocol = Protocol::SubjectDisjoint;
  eval::EvalReport segment;
  eval::EvalReport subject;
  train::TrainReport train;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
};

void to_json(nlohmann::json& j, const ProtocolResult& r);

struct GapResult {
  ProtocolResult disjoint;
  ProtocolResult mixed;
  double auc_gap() const { return mixed.segment.auc - disjoint.segment.auc; }
};

void to_json(nlohmann::json& j, const GapResult& r);

/// Everything needed to score new data after training.
struct FittedModel {
  model::Checkpoint checkpoint;  // params, standardizer, threshold
  train::TrainReport report;
};

/// Fits the standardizer on train, trains with early stopping on val, and
/// freezes the operating threshold on val.
FittedModel fit(std::span<const signal::Segment> train_segs, std::span<const signal::Segment> val_segs,
                const GapConfig& cfg);

/// Segment- and subject-level reports of a fitted model on unstandardized segments.
std::pair<eval::EvalReport, eval::EvalReport> score(const model::Checkpoint& ckpt,
                                                    std::span<const signal::Segment> test_segs,
                                                    eval::Aggregation aggregation);

/// Subjects split 65/15/20 (by default); no subject appears in two roles.
ProtocolResult run_subject_disjoint(std::span<const signal::Segment> segments, const GapConfig& cfg);

/// Each subject's segments split 85/15 into train and test; validation is a
/// second 85/15 per-subject split of the train portion.
ProtocolResult run_mixed(std::span<const signal::Segment> segments, const GapConfig& cfg);

/// Preprocesses the cohort once, then runs both protocols on the same windows.
GapResult generalization_gap(const cohort::SynthCohort& cohort, const GapConfig& cfg);

std::vector<signal::Segment> preprocess_cohort(const cohort::SynthCohort& cohort,
                                               const pipeline::PreprocessConfig& cfg);

}  // namespace ecgcbam::experiment
