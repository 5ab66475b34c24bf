#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "ecgcbam/cohort.hpp"
#include "ecgcbam/error.hpp"
#include "ecgcbam/eval.hpp"
#include "ecgcbam/experiment.hpp"
#include "ecgcbam/model.hpp"
#include "ecgcbam/pipeline.hpp"
#include "ecgcbam/seed.hpp"
#include "ecgcbam/train.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace ecgcbam;
using cli::RunConfig;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "global seed; module seeds derive from it");
  auto* out = cmd->add_option("--out", c.out, "run directory");
  if (needs_out) out->required();
}

RunConfig base_config(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : cli::load_run_config(c.config);
  if (c.seed) rc.seed = *c.seed;
  rc.fan_out_seeds();
  return rc;
}

fs::path prepare_out(const std::string& out) {
  const fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void apply_preset(model::ModelConfig& m, const std::string& preset) {
  if (preset.empty()) return;
  if (preset == "tiny") {
    const model::ModelConfig t = model::ModelConfig::tiny();
    m.channels = t.channels;
    m.reductions = t.reductions;
  } else if (preset == "default") {
    const model::ModelConfig d;
    m.channels = d.channels;
    m.reductions = d.reductions;
  } else {
    throw InvalidSpec("unknown model preset '" + preset + "'");
  }
}

nlohmann::json standardizer_json(const signal::Standardizer& s) { return {{"mean", s.mean}, {"std", s.std}}; }

std::vector<signal::Segment> standardized(const signal::Standardizer& st, std::vector<signal::Segment> segs) {
  signal::apply_standardizer_inplace(st, segs);
  return segs;
}

// --- synth ---------------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::optional<std::size_t> subjects;
  std::optional<double> duration, hyper_fraction, delta_bpm, delta_qt, idiosyncrasy;
  bool clean = false;
};

void cmd_synth(const SynthArgs& a) {
  RunConfig rc = base_config(a.common);
  cohort::SynthSpec& s = rc.synth;
  if (a.subjects) s.n_subjects = *a.subjects;
  if (a.duration) s.duration_s = *a.duration;
  if (a.hyper_fraction) s.hyper_fraction = *a.hyper_fraction;
  if (a.delta_bpm) s.delta_bpm = *a.delta_bpm;
  if (a.delta_qt) s.delta_qt_ms = *a.delta_qt;
  if (a.idiosyncrasy) s.idiosyncrasy = *a.idiosyncrasy;
  if (a.clean) s = s.clean();
  const fs::path out = prepare_out(a.common.out);
  const cohort::SynthCohort c = cohort::synth_cohort(s);
  cohort::write_synth_cohort(c, out);
  cli::write_json(out / "config.json", rc);
  std::printf("wrote %zu recordings of %zu subjects to %s\n", c.recordings.size(), s.n_subjects,
              out.string().c_str());
}

// --- preprocess -------------------------------------------------------------------

struct PreprocessArgs {
  Common common;
  std::string manifest;
  std::optional<std::size_t> max_per_recording;
  bool zero_phase = false;
  std::string protocol = "disjoint";
};

void cmd_preprocess(const PreprocessArgs& a) {
  RunConfig rc = base_config(a.common);
  pipeline::PreprocessConfig& pc = rc.experiment.preprocess;
  if (a.max_per_recording) pc.max_segments_per_recording = *a.max_per_recording;
  if (a.zero_phase) pc.filter.zero_phase = true;
  if (a.protocol != "disjoint" && a.protocol != "mixed") throw InvalidSpec("protocol must be disjoint or mixed");

  const fs::path manifest_path(a.manifest);
  const cohort::CohortManifest m = cohort::read_manifest(manifest_path);
  std::vector<signal::EcgRecording> recs;
  std::vector<int> labels;
  for (const auto& e : m.records) {
    recs.push_back(cohort::load_recording(e, manifest_path.parent_path()));
    labels.push_back(cohort::label(recs.back()));
  }
  const pipeline::PreprocessResult res = pipeline::preprocess_all(recs, labels, pc);

  std::size_t rejected = 0;
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& o : res.outcomes) {
    if (o.accepted) {
      std::printf("%s session %d: %zu segments (%zu peaks)\n", o.subject_id.c_str(), o.session_id, o.segments,
                  o.peaks);
    } else {
      ++rejected;
      std::printf("%s session %d: rejected, %s\n", o.subject_id.c_str(), o.session_id, o.reason.c_str());
    }
    outcomes.push_back({{"subject_id", o.subject_id},
                        {"session_id", o.session_id},
                        {"accepted", o.accepted},
                        {"reason", o.reason},
                        {"peaks", o.peaks},
                        {"segments", o.segments}});
  }
  if (res.segments.empty()) throw EmptyDataset("no recording produced segments");

  std::vector<signal::Segment> parts[3];
  nlohmann::json split_info;
  const std::uint64_t split_seed = derive_seed(rc.experiment.seed, "split");
  if (a.protocol == "disjoint") {
    std::vector<std::string> subjects;
    std::set<std::string> seen;
    for (const auto& s : res.segments) {
      if (seen.insert(s.subject_id).second) subjects.push_back(s.subject_id);
    }
    const cohort::SplitAssignment split = cohort::split_subjects(subjects, rc.experiment.fractions, split_seed);
    for (const auto& s : res.segments) parts[static_cast<int>(split.role_of(s.subject_id))].push_back(s);
    for (const auto role : {cohort::Role::Train, cohort::Role::Val, cohort::Role::Test}) {
      split_info[cohort::to_string(role)] = split.subjects_in(role);
    }
  } else {
    const double f = rc.experiment.mixed_train_fraction;
    const cohort::MixedSplit outer =
        cohort::split_segments_mixed(res.segments, f, derive_seed(rc.experiment.seed, "mixed"));
    std::vector<signal::Segment> pool;
    for (std::size_t i : outer.train) pool.push_back(res.segments[i]);
    const cohort::MixedSplit inner =
        cohort::split_segments_mixed(pool, f, derive_seed(rc.experiment.seed, "mixed-val"));
    for (std::size_t i : inner.train) parts[0].push_back(pool[i]);
    for (std::size_t i : inner.test) parts[1].push_back(pool[i]);
    for (std::size_t i : outer.test) parts[2].push_back(res.segments[i]);
  }
  split_info["protocol"] = a.protocol;

  const signal::Standardizer st = signal::fit_standardizer(parts[0]);
  const fs::path out = prepare_out(a.common.out);
  const char* names[3] = {"train.seg", "val.seg", "test.seg"};
  for (int i = 0; i < 3; ++i) {
    signal::write_segment_cache(out / names[i], standardized(st, parts[i]));
    split_info["segments"][names[i]] = parts[i].size();
  }
  cli::write_json(out / "standardizer.json", standardizer_json(st));
  cli::write_json(out / "split.json", split_info);
  cli::write_json(out / "preprocess_report.json", outcomes);
  nlohmann::json echo = rc;
  echo["manifest"] = a.manifest;
  cli::write_json(out / "config.json", echo);
  std::printf("%zu segments from %zu recordings, %zu rejected; train %zu, val %zu, test %zu\n",
              res.segments.size(), res.outcomes.size(), rejected, parts[0].size(), parts[1].size(),
              parts[2].size());
}

// --- train -------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data;
  std::string preset;
  std::string cam_variant;
  std::string optimizer;
  std::optional<std::size_t> epochs, batch_size, patience;
  std::optional<double> lr;
  bool progress = false;
};

void cmd_train(const TrainArgs& a) {
  RunConfig rc = base_config(a.common);
  model::ModelConfig& mc = rc.experiment.model;
  train::TrainConfig& tc = rc.experiment.train;
  apply_preset(mc, a.preset);
  if (!a.cam_variant.empty()) mc.cam_variant = model::cam_variant_from_string(a.cam_variant);
  if (!a.optimizer.empty()) tc.optimizer = train::optimizer_from_string(a.optimizer);
  if (a.epochs) tc.max_epochs = *a.epochs;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.patience) tc.patience = *a.patience;
  if (a.lr) tc.learning_rate = *a.lr;
  tc.progress = tc.progress || a.progress;
  tc.seed = derive_seed(rc.experiment.seed, "train");

  const fs::path data(a.data);
  const train::Dataset tr = train::Dataset::from_cache(signal::read_segment_cache(data / "train.seg"));
  const train::Dataset va = train::Dataset::from_cache(signal::read_segment_cache(data / "val.seg"));
  if (tr.size() > 0) mc.width = tr.width();

  train::TrainResult result = train::train(mc, tr, va, tc);
  const std::vector<double> val_scores = model::predict(result.params, va.windows);
  const double threshold = eval::choose_threshold(val_scores, va.labels, rc.experiment.policy);

  model::Checkpoint ck;
  ck.params = std::move(result.params);
  ck.threshold = threshold;
  const nlohmann::json sj = cli::read_json(data / "standardizer.json");
  ck.standardizer = signal::Standardizer{sj.at("mean").get<std::vector<double>>(), sj.at("std").get<std::vector<double>>()};

  const fs::path out = prepare_out(a.common.out);
  model::save_checkpoint(ck, out / "model.ckpt");
  cli::write_json(out / "train_report.json", result.report);
  nlohmann::json echo = rc;
  echo["data"] = a.data;
  cli::write_json(out / "config.json", echo);
  std::printf("best epoch %zu of %zu, validation AUC %.4f, threshold %.6f\n", result.report.best_epoch,
              result.report.epochs.size(), result.report.best_val_auc, threshold);
}

// --- eval --------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string model_path;
  std::string data;
  std::string aggregation;
  std::optional<double> threshold;
};

void cmd_eval(const EvalArgs& a) {
  RunConfig rc = base_config(a.common);
  if (!a.aggregation.empty()) rc.experiment.aggregation = eval::aggregation_from_string(a.aggregation);
  const model::Checkpoint ck = model::load_checkpoint(a.model_path);
  fs::path cache(a.data);
  if (fs::is_directory(cache)) cache /= "test.seg";
  const train::Dataset test = train::Dataset::from_cache(signal::read_segment_cache(cache));
  if (test.size() == 0) throw EmptyDataset("no test segments in " + cache.string());
  const double threshold = a.threshold ? *a.threshold : ck.threshold.value_or(0.5);

  const std::vector<double> scores = model::predict(ck.params, test.windows);
  const eval::EvalReport seg = eval::evaluate(scores, test.labels, threshold, eval::Level::Segment);
  const eval::SubjectScores subj =
      eval::subject_aggregate(scores, test.labels, test.subjects, rc.experiment.aggregation, threshold);
  const double subject_threshold = rc.experiment.aggregation == eval::Aggregation::Mean ? threshold : 0.5;
  const eval::EvalReport sub = eval::evaluate(subj.scores, subj.labels, subject_threshold, eval::Level::Subject);

  const fs::path out = prepare_out(a.common.out);
  cli::write_json(out / "eval_segment.json", seg);
  cli::write_json(out / "eval_subject.json", sub);
  eval::write_roc_csv(seg, out / "roc.csv");
  eval::write_roc_csv(sub, out / "roc_subject.csv");
  nlohmann::json echo = rc;
  echo["model"] = a.model_path;
  echo["data"] = a.data;
  cli::write_json(out / "config.json", echo);
  std::printf("segment AUC %.4f sens %.4f spec %.4f | subject AUC %.4f sens %.4f spec %.4f\n", seg.auc,
              seg.sensitivity, seg.specificity, sub.auc, sub.sensitivity, sub.specificity);
}

// --- infer -------------------------------------------------------------------------

struct InferArgs {
  Common common;
  std::string model_path;
  std::string recording;
};

void cmd_infer(const InferArgs& a) {
  RunConfig rc = base_config(a.common);
  const model::Checkpoint ck = model::load_checkpoint(a.model_path);
  signal::EcgRecording rec = signal::read_recording_file(a.recording);
  rec.subject_id = fs::path(a.recording).stem().string();
  const pipeline::PreprocessResult res = pipeline::preprocess_recording(rec, 0, rc.experiment.preprocess);
  if (!res.outcomes.front().accepted) throw NoPeaksFound("recording rejected: " + res.outcomes.front().reason);
  std::vector<signal::Segment> segs = res.segments;
  if (segs.empty()) throw InsufficientData("recording yields no complete heartbeat window");
  if (ck.standardizer) signal::apply_standardizer_inplace(*ck.standardizer, segs);
  std::vector<std::vector<double>> windows;
  for (auto& s : segs) windows.push_back(std::move(s.values));
  const std::vector<double> probs = model::predict(ck.params, windows);

  const double threshold = ck.threshold.value_or(0.5);
  double mean = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    std::printf("segment %zu %.6f\n", i, probs[i]);
    mean += probs[i];
  }
  mean /= static_cast<double>(probs.size());
  std::printf("subject %s %.6f %s\n", rec.subject_id.c_str(), mean, mean >= threshold ? "hyperglycemic" : "normal");
}

// --- gap ---------------------------------------------------------------------------

struct GapArgs {
  Common common;
  std::optional<std::size_t> subjects, epochs, max_per_recording;
  std::string preset;
  bool null_effect = false;
  bool progress = false;
};

void cmd_gap(const GapArgs& a) {
  RunConfig rc = base_config(a.common);
  if (a.subjects) rc.synth.n_subjects = *a.subjects;
  if (a.epochs) rc.experiment.train.max_epochs = *a.epochs;
  if (a.max_per_recording) rc.experiment.preprocess.max_segments_per_recording = *a.max_per_recording;
  apply_preset(rc.experiment.model, a.preset);
  if (a.null_effect) {
    rc.synth.delta_bpm = 0.0;
    rc.synth.delta_qt_ms = 0.0;
  }
  rc.experiment.train.progress = rc.experiment.train.progress || a.progress;

  const cohort::SynthCohort cohort = cohort::synth_cohort(rc.synth);
  const experiment::GapResult r = experiment::generalization_gap(cohort, rc.experiment);

  const fs::path out = prepare_out(a.common.out);
  cli::write_json(out / "gap.json", r);
  for (const auto* p : {&r.disjoint, &r.mixed}) {
    const fs::path dir = prepare_out((out / experiment::to_string(p->protocol)).string());
    cli::write_json(dir / "eval_segment.json", p->segment);
    cli::write_json(dir / "eval_subject.json", p->subject);
    cli::write_json(dir / "train_report.json", p->train);
    eval::write_roc_csv(p->segment, dir / "roc.csv");
  }
  cli::write_json(out / "config.json", rc);
  std::printf("subject-disjoint AUC %.4f | mixed AUC %.4f | gap %+.4f\n", r.disjoint.segment.auc,
              r.mixed.segment.auc, r.auc_gap());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperglycemia detection from single-lead ECG with a CBAM CNN"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic cohort");
  add_common(s, synth.common);
  s->add_option("--subjects", synth.subjects);
  s->add_option("--duration", synth.duration, "seconds per recording");
  s->add_option("--hyper-fraction", synth.hyper_fraction);
  s->add_option("--delta-bpm", synth.delta_bpm);
  s->add_option("--delta-qt", synth.delta_qt, "T-wave delay in ms for hyperglycemic subjects");
  s->add_option("--idiosyncrasy", synth.idiosyncrasy);
  s->add_flag("--clean", synth.clean, "no noise");

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "filter, detect, segment, split and standardize");
  add_common(p, pre.common);
  p->add_option("--manifest", pre.manifest)->required()->check(CLI::ExistingFile);
  p->add_option("--max-per-recording", pre.max_per_recording);
  p->add_flag("--zero-phase", pre.zero_phase);
  p->add_option("--protocol", pre.protocol, "disjoint or mixed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train on a preprocessed directory");
  add_common(t, tr.common);
  t->add_option("--data", tr.data, "directory written by preprocess")->required()->check(CLI::ExistingDirectory);
  t->add_option("--preset", tr.preset, "tiny or default channel layout");
  t->add_option("--cam-variant", tr.cam_variant, "paper-eq2 or standard-cbam");
  t->add_option("--optimizer", tr.optimizer, "adam or sgd");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--batch-size", tr.batch_size);
  t->add_option("--patience", tr.patience);
  t->add_option("--lr", tr.lr);
  t->add_flag("--progress", tr.progress);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score a checkpoint on a segment cache");
  add_common(e, ev.common);
  e->add_option("--model", ev.model_path)->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "segment cache or preprocess directory")->required()->check(CLI::ExistingPath);
  e->add_option("--aggregation", ev.aggregation, "mean or majority-vote");
  e->add_option("--threshold", ev.threshold, "override the checkpoint's operating threshold");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "score one recording file");
  add_common(i, inf.common, false);
  i->add_option("--model", inf.model_path)->required()->check(CLI::ExistingFile);
  i->add_option("--recording", inf.recording)->required()->check(CLI::ExistingFile);

  GapArgs gap;
  auto* g = app.add_subcommand("gap", "subject-disjoint versus mixed split on a synthetic cohort");
  add_common(g, gap.common);
  g->add_option("--subjects", gap.subjects);
  g->add_option("--epochs", gap.epochs);
  g->add_option("--max-per-recording", gap.max_per_recording);
  g->add_option("--preset", gap.preset, "tiny or default channel layout");
  g->add_flag("--null-effect", gap.null_effect, "no label effect");
  g->add_flag("--progress", gap.progress);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s) cmd_synth(synth);
    if (*p) cmd_preprocess(pre);
    if (*t) cmd_train(tr);
    if (*e) cmd_eval(ev);
    if (*i) cmd_infer(inf);
    if (*g) cmd_gap(gap);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
