#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace ecgcbam::eval {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0,0) origin
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

struct RocResult {
  std::vector<RocPoint> roc;  // threshold descending, from (0,0) to (1,1)
  double auc = 0.0;
};

/// One ROC point per distinct score (equal scores form a single step) and
/// trapezoidal AUC. Throws SingleClass unless both labels are present.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

struct SensSpec {
  double sensitivity = 0.0;
  double specificity = 0.0;
  Confusion confusion;
};

/// Predicts positive iff score >= threshold. A rate whose denominator is
/// empty is reported as 0.
SensSpec sens_spec(std::span<const double> scores, std::span<const int> labels, double threshold);

enum class ThresholdPolicy { Youden, Fixed };
std::string to_string(ThresholdPolicy p);
ThresholdPolicy threshold_policy_from_string(const std::string& s);

/// Youden: ROC threshold maximizing TPR - FPR (highest threshold on ties).
/// Fixed: 0.5.
double choose_threshold(std::span<const double> scores, std::span<const int> labels, ThresholdPolicy policy);

enum class Aggregation { Mean, MajorityVote };
std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

struct SubjectScores {
  std::vector<std::uint64_t> subjects;  // first-appearance order
  std::vector<double> scores;
  std::vector<int> labels;              // majority label of the subject's segments
};

/// Mean segment probability per subject, or the fraction of segments at or
/// above `vote_threshold` under majority voting.
SubjectScores subject_aggregate(std::span<const double> scores, std::span<const int> labels,
                                std::span<const std::uint64_t> subjects, Aggregation how = Aggregation::Mean,
                                double vote_threshold = 0.5);

enum class Level { Segment, Subject };
std::string to_string(Level l);

struct EvalReport {
  Level level = Level::Segment;
  std::vector<RocPoint> roc;
  double auc = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double operating_threshold = 0.5;
  Confusion confusion;
};

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold, Level level);

void to_json(nlohmann::json& j, const EvalReport& r);
/// `fpr,tpr,threshold` header, one line per ROC point.
void write_roc_csv(const EvalReport& r, const std::filesystem::path& path);

}  // namespace ecgcbam::eval
