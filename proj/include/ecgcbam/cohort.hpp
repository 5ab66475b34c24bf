#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgcbam/signal.hpp"

namespace ecgcbam::cohort {

inline constexpr double kHyperglycemiaMgdl = 100.0;

/// 1 iff glucose strictly exceeds 100 mg/dL.
int label_from_glucose(double glucose_mgdl);
/// Label of a recording; InvalidSpec when it carries no glucose value.
int label(const signal::EcgRecording& rec);

struct ManifestEntry {
  std::string subject_id;
  int session_id = 0;
  std::string path;  // relative to the manifest's directory
  double glucose_mgdl = 0.0;
};

struct CohortManifest {
  std::vector<ManifestEntry> records;

  /// Throws InvalidSpec on duplicate (subject, session) or non-positive glucose.
  void validate() const;
  /// Distinct subject ids in order of first appearance.
  std::vector<std::string> subjects() const;
};

/// JSON-lines, one object per recording: subject_id, session_id, path, glucose_mgdl.
CohortManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const CohortManifest& manifest, const std::filesystem::path& path);

/// Reads a recording listed in a manifest and attaches its identity fields.
signal::EcgRecording load_recording(const ManifestEntry& entry, const std::filesystem::path& manifest_dir);

// --- splitting ---------------------------------------------------------------------

enum class Role { Train, Val, Test };
std::string to_string(Role r);

struct SplitFractions {
  double train = 0.65;
  double val = 0.15;
  double test = 0.20;
};

struct SplitAssignment {
  std::map<std::string, Role> roles;
  std::uint64_t seed = 0;
  SplitFractions fractions;

  Role role_of(const std::string& subject_id) const;
  std::size_t count(Role r) const;
  std::vector<std::string> subjects_in(Role r) const;
};

/// Seeded shuffle of the manifest's subjects, then contiguous train/val/test
/// blocks of round(n*train), round(n*val) and the remainder.
SplitAssignment split_subjects(const CohortManifest& manifest, const SplitFractions& fractions,
                               std::uint64_t seed);
SplitAssignment split_subjects(const std::vector<std::string>& subjects, const SplitFractions& fractions,
                               std::uint64_t seed);

/// Throws InvalidSpec if any subject id appears in more than one role list.
void assert_subject_disjoint(const std::vector<std::string>& train, const std::vector<std::string>& val,
                             const std::vector<std::string>& test);

struct MixedSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-subject shuffle of segment indices; the first round(train_fraction*n)
/// of each subject go to train, the rest to test. Identity leaks across sides.
MixedSplit split_segments_mixed(std::span<const signal::Segment> segments, double train_fraction,
                                std::uint64_t seed);

// --- synthetic cohort ----------------------------------------------------------------

struct SynthSpec {
  std::size_t n_subjects = 200;
  double hyper_fraction = 0.5;
  int sessions = 2;
  double fs = 1000.0;
  double duration_s = 60.0;
  double hr_min_bpm = 55.0;
  double hr_max_bpm = 85.0;
  double hrv_fraction = 0.03;    // beat-to-beat RR standard deviation / mean RR
  double white_noise = 0.02;     // std, mV
  double baseline_wander = 0.15; // amplitude, mV
  double em_burst_rate_hz = 0.02;
  double em_burst_amplitude = 0.3;
  double delta_bpm = 8.0;        // heart-rate increase for hyperglycemic subjects
  double delta_qt_ms = 25.0;     // T-wave delay for hyperglycemic subjects
  double idiosyncrasy = 1.0;     // scale of per-subject morphology differences
  std::uint64_t seed = 7;

  void validate() const;
  /// No white noise, wander or bursts.
  SynthSpec clean() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct GroundTruth {
  std::vector<std::size_t> r_peaks;
  int label = 0;
  double bpm = 0.0;
  double qt_offset_ms = 0.0;
};

struct SynthRecording {
  signal::EcgRecording recording;
  GroundTruth truth;
};

struct SynthCohort {
  CohortManifest manifest;
  std::vector<SynthRecording> recordings;  // parallel to manifest.records
};

SynthCohort synth_cohort(const SynthSpec& spec);

/// A single subject at a fixed heart rate, e.g. for detector tests.
SynthRecording synth_recording(const SynthSpec& spec, double bpm, std::uint64_t seed, int label = 0);

/// Writes recordings under rec/, sidecar ground truth under truth/, and
/// manifest.jsonl at the top of dir.
void write_synth_cohort(const SynthCohort& cohort, const std::filesystem::path& dir);

}  // namespace ecgcbam::cohort
