#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgcbam/signal.hpp"

// Recording -> heartbeat windows: trim, bandpass, R-peaks, quality gate, segment.
namespace ecgcbam::pipeline {

struct PreprocessConfig {
  double trim_s = 2.0;
  signal::FilterSpec filter;
  signal::SegmentSpec segment;
  signal::PeakDetectorConfig detector;
  signal::QualityGate gate;
  /// Keep at most this many evenly spaced windows per recording (0 keeps all).
  std::size_t max_segments_per_recording = 0;
};

void to_json(nlohmann::json& j, const PreprocessConfig& c);
void from_json(const nlohmann::json& j, PreprocessConfig& c);

struct RecordingOutcome {
  std::string subject_id;
  int session_id = 0;
  bool accepted = false;
  std::string reason;
  std::size_t peaks = 0;
  std::size_t segments = 0;
};

struct PreprocessResult {
  std::vector<signal::Segment> segments;
  std::vector<RecordingOutcome> outcomes;
};

/// Unstandardized windows of one recording. Errors from trimming or peak
/// detection become a rejected outcome rather than an exception.
PreprocessResult preprocess_recording(const signal::EcgRecording& rec, int label, const PreprocessConfig& cfg);

/// Runs every recording (in parallel) and concatenates results in input order.
PreprocessResult preprocess_all(std::span<const signal::EcgRecording> recordings, std::span<const int> labels,
                                const PreprocessConfig& cfg);

}  // namespace ecgcbam::pipeline
