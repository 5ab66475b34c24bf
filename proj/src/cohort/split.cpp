#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "ecgcbam/cohort.hpp"
#include "ecgcbam/error.hpp"

namespace ecgcbam::cohort {

std::string to_string(Role r) {
  switch (r) {
    case Role::Train: return "train";
    case Role::Val: return "val";
    case Role::Test: return "test";
  }
  return "?";
}

Role SplitAssignment::role_of(const std::string& subject_id) const {
  const auto it = roles.find(subject_id);
  if (it == roles.end()) throw InvalidSpec("subject " + subject_id + " has no split role");
  return it->second;
}

std::size_t SplitAssignment::count(Role r) const {
  return static_cast<std::size_t>(
      std::count_if(roles.begin(), roles.end(), [r](const auto& kv) { return kv.second == r; }));
}

std::vector<std::string> SplitAssignment::subjects_in(Role r) const {
  std::vector<std::string> out;
  for (const auto& [id, role] : roles) {
    if (role == r) out.push_back(id);
  }
  return out;
}

SplitAssignment split_subjects(const CohortManifest& manifest, const SplitFractions& fractions,
                               std::uint64_t seed) {
  return split_subjects(manifest.subjects(), fractions, seed);
}

SplitAssignment split_subjects(const std::vector<std::string>& subjects, const SplitFractions& fractions,
                               std::uint64_t seed) {
  if (subjects.empty()) throw EmptyManifest("no subjects to split");
  if (fractions.train < 0 || fractions.val < 0 || fractions.test < 0 ||
      std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9) {
    throw InvalidSpec("split fractions must be non-negative and sum to 1");
  }
  std::vector<std::string> order = subjects;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n = static_cast<double>(order.size());
  const auto n_train = std::min(order.size(), static_cast<std::size_t>(std::llround(n * fractions.train)));
  const auto n_val = std::min(order.size() - n_train, static_cast<std::size_t>(std::llround(n * fractions.val)));

  SplitAssignment s;
  s.seed = seed;
  s.fractions = fractions;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Role r = i < n_train ? Role::Train : i < n_train + n_val ? Role::Val : Role::Test;
    if (!s.roles.emplace(order[i], r).second) throw InvalidSpec("duplicate subject id " + order[i]);
  }
  assert_subject_disjoint(s.subjects_in(Role::Train), s.subjects_in(Role::Val), s.subjects_in(Role::Test));
  return s;
}

void assert_subject_disjoint(const std::vector<std::string>& train, const std::vector<std::string>& val,
                             const std::vector<std::string>& test) {
  std::set<std::string> seen;
  for (const auto* group : {&train, &val, &test}) {
    std::set<std::string> local(group->begin(), group->end());
    for (const auto& id : local) {
      if (!seen.insert(id).second) throw InvalidSpec("subject " + id + " appears in more than one split");
    }
  }
}

MixedSplit split_segments_mixed(std::span<const signal::Segment> segments, double train_fraction,
                                std::uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction < 1)) throw InvalidSpec("train fraction must lie in (0, 1)");
  // Group indices per subject, preserving first-appearance order of subjects.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto [it, inserted] = groups.try_emplace(segments[i].subject_id);
    if (inserted) order.push_back(segments[i].subject_id);
    it->second.push_back(i);
  }
  std::mt19937_64 rng(seed);
  MixedSplit out;
  for (const auto& id : order) {
    auto& idx = groups[id];
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

}  // namespace ecgcbam::cohort
