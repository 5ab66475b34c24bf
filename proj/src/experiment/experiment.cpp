#include "ecgcbam/experiment.hpp"

#include <algorithm>
#include <set>

#include "ecgcbam/error.hpp"
#include "ecgcbam/seed.hpp"

namespace ecgcbam::experiment {

void to_json(nlohmann::json& j, const GapConfig& c) {
  j = nlohmann::json{{"preprocess", c.preprocess},
                     {"model", c.model},
                     {"train", c.train},
                     {"fractions", {{"train", c.fractions.train}, {"val", c.fractions.val}, {"test", c.fractions.test}}},
                     {"mixed_train_fraction", c.mixed_train_fraction},
                     {"threshold_policy", eval::to_string(c.policy)},
                     {"aggregation", eval::to_string(c.aggregation)},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, GapConfig& c) {
  if (j.contains("preprocess")) j.at("preprocess").get_to(c.preprocess);
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("fractions")) {
    const auto& f = j.at("fractions");
    c.fractions.train = f.value("train", c.fractions.train);
    c.fractions.val = f.value("val", c.fractions.val);
    c.fractions.test = f.value("test", c.fractions.test);
  }
  c.mixed_train_fraction = j.value("mixed_train_fraction", c.mixed_train_fraction);
  if (j.contains("threshold_policy")) c.policy = eval::threshold_policy_from_string(j.at("threshold_policy"));
  if (j.contains("aggregation")) c.aggregation = eval::aggregation_from_string(j.at("aggregation"));
  c.seed = j.value("seed", c.seed);
}

std::string to_string(Protocol p) { return p == Protocol::SubjectDisjoint ? "subject-disjoint" : "mixed"; }

void to_json(nlohmann::json& j, const ProtocolResult& r) {
  j = nlohmann::json{{"protocol", to_string(r.protocol)},
                     {"n_train", r.n_train},
                     {"n_val", r.n_val},
                     {"n_test", r.n_test},
                     {"segment", r.segment},
                     {"subject", r.subject},
                     {"train_report", r.train}};
}

void to_json(nlohmann::json& j, const GapResult& r) {
  j = nlohmann::json{{"subject_disjoint", r.disjoint}, {"mixed", r.mixed}, {"auc_gap", r.auc_gap()}};
}

namespace {

std::vector<signal::Segment> standardized(const signal::Standardizer& st, std::span<const signal::Segment> segs) {
  std::vector<signal::Segment> out(segs.begin(), segs.end());
  signal::apply_standardizer_inplace(st, out);
  return out;
}

std::vector<signal::Segment> pick(std::span<const signal::Segment> segs, std::span<const std::size_t> idx) {
  std::vector<signal::Segment> out;
  out.reserve(idx.size());
  for (const std::size_t i : idx) out.push_back(segs[i]);
  return out;
}

ProtocolResult run(Protocol protocol, std::span<const signal::Segment> train_segs,
                   std::span<const signal::Segment> val_segs, std::span<const signal::Segment> test_segs,
                   const GapConfig& cfg) {
  ProtocolResult r;
  r.protocol = protocol;
  r.n_train = train_segs.size();
  r.n_val = val_segs.size();
  r.n_test = test_segs.size();
  FittedModel fitted = fit(train_segs, val_segs, cfg);
  r.train = std::move(fitted.report);
  std::tie(r.segment, r.subject) = score(fitted.checkpoint, test_segs, cfg.aggregation);
  return r;
}

}  // namespace

FittedModel fit(std::span<const signal::Segment> train_segs, std::span<const signal::Segment> val_segs,
                const GapConfig& cfg) {
  if (train_segs.empty() || val_segs.empty()) throw EmptyDataset("train and validation need segments");
  const signal::Standardizer st = signal::fit_standardizer(train_segs);
  const train::Dataset train_set = train::Dataset::from_segments(standardized(st, train_segs));
  const train::Dataset val_set = train::Dataset::from_segments(standardized(st, val_segs));

  train::TrainConfig tcfg = cfg.train;
  tcfg.seed = derive_seed(cfg.seed, "train");
  train::TrainResult result = train::train(cfg.model, train_set, val_set, tcfg);

  const std::vector<double> val_scores = model::predict(result.params, val_set.windows);
  const double threshold = eval::choose_threshold(val_scores, val_set.labels, cfg.policy);

  FittedModel out;
  out.checkpoint.params = std::move(result.params);
  out.checkpoint.standardizer = st;
  out.checkpoint.threshold = threshold;
  out.report = std::move(result.report);
  return out;
}

std::pair<eval::EvalReport, eval::EvalReport> score(const model::Checkpoint& ckpt,
                                                    std::span<const signal::Segment> test_segs,
                                                    eval::Aggregation aggregation) {
  if (test_segs.empty()) throw EmptyDataset("no test segments");
  std::vector<signal::Segment> segs(test_segs.begin(), test_segs.end());
  if (ckpt.standardizer) signal::apply_standardizer_inplace(*ckpt.standardizer, segs);
  const train::Dataset test_set = train::Dataset::from_segments(segs);
  const double threshold = ckpt.threshold.value_or(0.5);

  const std::vector<double> scores = model::predict(ckpt.params, test_set.windows);
  eval::EvalReport seg = eval::evaluate(scores, test_set.labels, threshold, eval::Level::Segment);

  // A vote counts segments at the operating threshold; the subject is positive
  // when at least half of its segments are.
  const eval::SubjectScores subj =
      eval::subject_aggregate(scores, test_set.labels, test_set.subjects, aggregation, threshold);
  const double subject_threshold = aggregation == eval::Aggregation::Mean ? threshold : 0.5;
  eval::EvalReport sub = eval::evaluate(subj.scores, subj.labels, subject_threshold, eval::Level::Subject);
  return {std::move(seg), std::move(sub)};
}

ProtocolResult run_subject_disjoint(std::span<const signal::Segment> segments, const GapConfig& cfg) {
  std::vector<std::string> subjects;
  std::set<std::string> seen;
  for (const auto& s : segments) {
    if (seen.insert(s.subject_id).second) subjects.push_back(s.subject_id);
  }
  const cohort::SplitAssignment split =
      cohort::split_subjects(subjects, cfg.fractions, derive_seed(cfg.seed, "split"));
  cohort::assert_subject_disjoint(split.subjects_in(cohort::Role::Train), split.subjects_in(cohort::Role::Val),
                                  split.subjects_in(cohort::Role::Test));
  std::vector<signal::Segment> parts[3];
  for (const auto& s : segments) parts[static_cast<int>(split.role_of(s.subject_id))].push_back(s);
  return run(Protocol::SubjectDisjoint, parts[0], parts[1], parts[2], cfg);
}

ProtocolResult run_mixed(std::span<const signal::Segment> segments, const GapConfig& cfg) {
  const cohort::MixedSplit outer =
      cohort::split_segments_mixed(segments, cfg.mixed_train_fraction, derive_seed(cfg.seed, "mixed"));
  const std::vector<signal::Segment> pool = pick(segments, outer.train);
  const cohort::MixedSplit inner =
      cohort::split_segments_mixed(pool, cfg.mixed_train_fraction, derive_seed(cfg.seed, "mixed-val"));
  return run(Protocol::Mixed, pick(pool, inner.train), pick(pool, inner.test), pick(segments, outer.test), cfg);
}

std::vector<signal::Segment> preprocess_cohort(const cohort::SynthCohort& cohort,
                                               const pipeline::PreprocessConfig& cfg) {
  std::vector<signal::EcgRecording> recs;
  std::vector<int> labels;
  recs.reserve(cohort.recordings.size());
  for (const auto& r : cohort.recordings) {
    recs.push_back(r.recording);
    labels.push_back(cohort::label(r.recording));
  }
  return pipeline::preprocess_all(recs, labels, cfg).segments;
}

GapResult generalization_gap(const cohort::SynthCohort& cohort, const GapConfig& cfg) {
  const std::vector<signal::Segment> segments = preprocess_cohort(cohort, cfg.preprocess);
  GapResult r;
  r.disjoint = run_subject_disjoint(segments, cfg);
  r.mixed = run_mixed(segments, cfg);
  return r;
}

}  // namespace ecgcbam::experiment
