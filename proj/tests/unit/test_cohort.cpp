#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "ecgcbam/cohort.hpp"
#include "ecgcbam/error.hpp"
#include "support.hpp"

using namespace ecgcbam;
using namespace ecgcbam::cohort;

namespace {

std::vector<std::string> ids(std::size_t n, const std::string& prefix = "P") {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

}  // namespace

TEST_CASE("labeling rule is strictly above 100 mg/dL") {
  CHECK(label_from_glucose(100.0) == 0);
  CHECK(label_from_glucose(101.0) == 1);
  CHECK(label_from_glucose(100.0001) == 1);
  CHECK(label_from_glucose(72.0) == 0);
  signal::EcgRecording rec;
  CHECK_THROWS_AS(label(rec), InvalidSpec);
  rec.glucose_mgdl = 130.0;
  CHECK(label(rec) == 1);
}

TEST_CASE("manifest round-trip and validation") {
  const test::TempDir dir;
  CohortManifest m;
  m.records = {{"A", 1, "rec/A_s1.bin", 90.0}, {"A", 2, "rec/A_s2.bin", 95.0}, {"B", 1, "rec/B_s1.bin", 140.0}};
  write_manifest(m, dir.path() / "manifest.jsonl");
  const CohortManifest back = read_manifest(dir.path() / "manifest.jsonl");
  REQUIRE(back.records.size() == 3);
  CHECK(back.records[2].subject_id == "B");
  CHECK(back.records[2].glucose_mgdl == 140.0);
  CHECK(back.subjects() == std::vector<std::string>{"A", "B"});

  m.records.push_back({"A", 1, "dup.bin", 90.0});
  CHECK_THROWS_AS(m.validate(), InvalidSpec);
  m.records.back() = {"C", 1, "c.bin", 0.0};
  CHECK_THROWS_AS(m.validate(), InvalidSpec);

  std::ofstream(dir.path() / "bad.jsonl") << "{\"subject_id\": \"A\"\n";
  CHECK_THROWS_AS(read_manifest(dir.path() / "bad.jsonl"), FormatError);
  std::ofstream(dir.path() / "empty.jsonl") << "";
  CHECK_THROWS_AS(read_manifest(dir.path() / "empty.jsonl"), EmptyManifest);
}

TEST_CASE("1119 subjects split 727/168/224") {
  const SplitAssignment s = split_subjects(ids(1119), SplitFractions{}, 0);
  CHECK(s.count(Role::Train) == 727);
  CHECK(s.count(Role::Val) == 168);
  CHECK(s.count(Role::Test) == 224);
}

TEST_CASE("splits are seeded and cover every subject once") {
  const auto subjects = ids(50);
  const SplitAssignment a = split_subjects(subjects, SplitFractions{}, 9);
  const SplitAssignment b = split_subjects(subjects, SplitFractions{}, 9);
  const SplitAssignment c = split_subjects(subjects, SplitFractions{}, 10);
  CHECK(a.roles == b.roles);
  CHECK(a.roles != c.roles);
  CHECK(a.roles.size() == 50);
  CHECK(a.count(Role::Train) + a.count(Role::Val) + a.count(Role::Test) == 50);
  CHECK_THROWS_AS(split_subjects(std::vector<std::string>{}, SplitFractions{}, 0), EmptyManifest);
  CHECK_THROWS_AS(a.role_of("nobody"), InvalidSpec);
}

TEST_CASE("subject disjointness holds on 1000 random manifests") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 3 + rng() % 300;
    CohortManifest m;
    for (std::size_t i = 0; i < n; ++i) {
      const int sessions = 1 + static_cast<int>(rng() % 3);
      for (int s = 1; s <= sessions; ++s) m.records.push_back({"S" + std::to_string(i), s, "x.bin", 90.0});
    }
    const SplitAssignment a = split_subjects(m, SplitFractions{}, rng());
    const auto tr = a.subjects_in(Role::Train), va = a.subjects_in(Role::Val), te = a.subjects_in(Role::Test);
    CHECK_NOTHROW(assert_subject_disjoint(tr, va, te));
    CHECK(tr.size() + va.size() + te.size() == n);
  }
  CHECK_THROWS_AS(assert_subject_disjoint({"a", "b"}, {"c"}, {"b"}), InvalidSpec);
}

TEST_CASE("mixed split keeps 85% of each subject's segments in train") {
  std::vector<signal::Segment> segs;
  for (int s = 0; s < 3; ++s) {
    for (int i = 0; i < 40; ++i) segs.push_back({"S" + std::to_string(s), 1, {static_cast<double>(i)}, s % 2});
  }
  const MixedSplit m = split_segments_mixed(segs, 0.85, 4);
  CHECK(m.train.size() == 3 * 34);
  CHECK(m.test.size() == 3 * 6);
  std::map<std::string, int> per_subject;
  for (std::size_t i : m.test) per_subject[segs[i].subject_id]++;
  for (const auto& [id, n] : per_subject) CHECK(n == 6);
  std::set<std::size_t> all(m.train.begin(), m.train.end());
  all.insert(m.test.begin(), m.test.end());
  CHECK(all.size() == segs.size());
  CHECK_THROWS_AS(split_segments_mixed(segs, 1.0, 0), InvalidSpec);
}

TEST_CASE("synthetic cohort structure") {
  SynthSpec spec;
  spec.n_subjects = 10;
  spec.duration_s = 20.0;
  const SynthCohort c = synth_cohort(spec);
  REQUIRE(c.recordings.size() == 20);
  REQUIRE(c.manifest.records.size() == 20);
  CHECK_NOTHROW(c.manifest.validate());
  CHECK(c.manifest.subjects().size() == 10);
  int hyper = 0;
  for (std::size_t i = 0; i < c.recordings.size(); ++i) {
    const auto& r = c.recordings[i];
    CHECK(r.recording.samples.size() == 20000);
    CHECK(label(r.recording) == r.truth.label);
    CHECK(c.manifest.records[i].subject_id == r.recording.subject_id);
    hyper += r.truth.label;
    if (i % 2 == 1) CHECK(r.truth.label == c.recordings[i - 1].truth.label);
  }
  CHECK(hyper == 10);  // 5 subjects, 2 sessions each
}

TEST_CASE("synthetic cohorts are deterministic in the seed") {
  SynthSpec spec;
  spec.n_subjects = 6;
  spec.duration_s = 10.0;
  const SynthCohort a = synth_cohort(spec);
  const SynthCohort b = synth_cohort(spec);
  for (std::size_t i = 0; i < a.recordings.size(); ++i) {
    CHECK(a.recordings[i].recording.samples == b.recordings[i].recording.samples);
    CHECK(a.recordings[i].truth.r_peaks == b.recordings[i].truth.r_peaks);
  }
  spec.seed = 8;
  CHECK(synth_cohort(spec).recordings[0].recording.samples != a.recordings[0].recording.samples);
}

TEST_CASE("label effects reach the ground truth") {
  const SynthSpec spec;
  const SynthRecording pos = synth_recording(spec, 70.0, 3, 1);
  const SynthRecording neg = synth_recording(spec, 70.0, 3, 0);
  CHECK(pos.truth.qt_offset_ms == 25.0);
  CHECK(neg.truth.qt_offset_ms == 0.0);
  const double beats = static_cast<double>(neg.truth.r_peaks.size());
  CHECK(beats == doctest::Approx(70.0).epsilon(0.05));
}

TEST_CASE("synth spec validation and json") {
  SynthSpec bad;
  bad.n_subjects = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidSpec);
  bad = SynthSpec{};
  bad.hyper_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), InvalidSpec);
  SynthSpec s;
  s.delta_qt_ms = 12.0;
  const nlohmann::json j = s;
  CHECK(j.get<SynthSpec>().delta_qt_ms == 12.0);
  const SynthSpec clean = s.clean();
  CHECK(clean.white_noise == 0.0);
  CHECK(clean.baseline_wander == 0.0);
  CHECK(clean.em_burst_rate_hz == 0.0);
}

TEST_CASE("written cohorts load back through the manifest") {
  const test::TempDir dir;
  SynthSpec spec;
  spec.n_subjects = 2;
  spec.duration_s = 10.0;
  const SynthCohort c = synth_cohort(spec);
  write_synth_cohort(c, dir.path());
  const CohortManifest m = read_manifest(dir.path() / "manifest.jsonl");
  REQUIRE(m.records.size() == 4);
  const signal::EcgRecording r = load_recording(m.records[1], dir.path());
  CHECK(r.samples == c.recordings[1].recording.samples);
  CHECK(r.subject_id == c.recordings[1].recording.subject_id);
  CHECK(r.glucose_mgdl == c.recordings[1].recording.glucose_mgdl);
  CHECK(std::filesystem::exists(dir.path() / "truth"));
}
