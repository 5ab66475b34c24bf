#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>

#include "ecgcbam/error.hpp"
#include "ecgcbam/eval.hpp"

namespace ecgcbam::eval {

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeMismatch("scores and labels differ in length");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw SingleClass("ROC needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult out;
  out.roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  double area2 = 0.0;  // twice the area, in units of positive*negative counts
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const std::size_t tp_prev = tp, fp_prev = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      if (labels[order[i]] == 1) ++tp;
      else ++fp;
    }
    area2 += static_cast<double>((fp - fp_prev) * (tp + tp_prev));
    out.roc.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                       static_cast<double>(tp) / static_cast<double>(positives), s});
  }
  out.auc = area2 / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  return out;
}

SensSpec sens_spec(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw ShapeMismatch("scores and labels differ in length");
  SensSpec r;
  Confusion& c = r.confusion;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) (predicted ? c.tp : c.fn)++;
    else (predicted ? c.fp : c.tn)++;
  }
  r.sensitivity = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  r.specificity = c.tn + c.fp ? static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp) : 0.0;
  return r;
}

std::string to_string(ThresholdPolicy p) { return p == ThresholdPolicy::Youden ? "youden" : "fixed"; }

ThresholdPolicy threshold_policy_from_string(const std::string& s) {
  if (s == "youden") return ThresholdPolicy::Youden;
  if (s == "fixed") return ThresholdPolicy::Fixed;
  throw InvalidSpec("unknown threshold policy '" + s + "'");
}

double choose_threshold(std::span<const double> scores, std::span<const int> labels, ThresholdPolicy policy) {
  if (policy == ThresholdPolicy::Fixed) return 0.5;
  const RocResult r = roc_auc(scores, labels);
  double best_j = -std::numeric_limits<double>::infinity();
  double best_t = 0.5;
  for (const RocPoint& p : r.roc) {
    if (std::isinf(p.threshold)) continue;
    const double j = p.tpr - p.fpr;
    if (j > best_j) {
      best_j = j;
      best_t = p.threshold;
    }
  }
  return best_t;
}

std::string to_string(Aggregation a) { return a == Aggregation::Mean ? "mean" : "majority"; }

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "majority") return Aggregation::MajorityVote;
  throw InvalidSpec("unknown aggregation '" + s + "'");
}

SubjectScores subject_aggregate(std::span<const double> scores, std::span<const int> labels,
                                std::span<const std::uint64_t> subjects, Aggregation how, double vote_threshold) {
  if (scores.size() != labels.size() || scores.size() != subjects.size()) {
    throw ShapeMismatch("scores, labels and subjects differ in length");
  }
  struct Acc {
    std::size_t slot;
    double sum = 0.0;
    std::size_t n = 0, positives = 0;
  };
  std::map<std::uint64_t, Acc> acc;
  SubjectScores out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto [it, inserted] = acc.try_emplace(subjects[i], Acc{out.subjects.size()});
    if (inserted) out.subjects.push_back(subjects[i]);
    Acc& a = it->second;
    a.sum += how == Aggregation::Mean ? scores[i] : (scores[i] >= vote_threshold ? 1.0 : 0.0);
    a.n += 1;
    a.positives += labels[i] == 1 ? 1 : 0;
  }
  out.scores.resize(out.subjects.size());
  out.labels.resize(out.subjects.size());
  for (const auto& [id, a] : acc) {
    out.scores[a.slot] = a.sum / static_cast<double>(a.n);
    out.labels[a.slot] = 2 * a.positives > a.n ? 1 : 0;
  }
  return out;
}

std::string to_string(Level l) { return l == Level::Segment ? "segment" : "subject"; }

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold, Level level) {
  EvalReport r;
  r.level = level;
  const RocResult roc = roc_auc(scores, labels);
  r.roc = roc.roc;
  r.auc = roc.auc;
  const SensSpec ss = sens_spec(scores, labels, threshold);
  r.sensitivity = ss.sensitivity;
  r.specificity = ss.specificity;
  r.confusion = ss.confusion;
  r.operating_threshold = threshold;
  return r;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json roc = nlohmann::json::array();
  for (const RocPoint& p : r.roc) {
    roc.push_back({{"fpr", p.fpr}, {"tpr", p.tpr},
                   {"threshold", std::isinf(p.threshold) ? nlohmann::json("inf") : nlohmann::json(p.threshold)}});
  }
  j = nlohmann::json{{"level", to_string(r.level)},
                     {"auc", r.auc},
                     {"sensitivity", r.sensitivity},
                     {"specificity", r.specificity},
                     {"operating_threshold", r.operating_threshold},
                     {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}},
                     {"n", r.confusion.total()},
                     {"roc", roc}};
}

void write_roc_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "fpr,tpr,threshold\n" << std::setprecision(17);
  for (const RocPoint& p : r.roc) {
    out << p.fpr << ',' << p.tpr << ',';
    if (std::isinf(p.threshold)) out << "inf";
    else out << p.threshold;
    out << '\n';
  }
}

}  // namespace ecgcbam::eval
