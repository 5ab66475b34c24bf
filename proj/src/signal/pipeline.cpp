#include "ecgcbam/pipeline.hpp"

#include <exception>

#include "ecgcbam/error.hpp"

namespace ecgcbam::pipeline {

void to_json(nlohmann::json& j, const PreprocessConfig& c) {
  j = nlohmann::json{
      {"trim_s", c.trim_s},
      {"filter",
       {{"order", c.filter.order},
        {"low_hz", c.filter.low_hz},
        {"high_hz", c.filter.high_hz},
        {"zero_phase", c.filter.zero_phase}}},
      {"segment", {{"t1_ms", c.segment.t1_ms}, {"t0_ms", c.segment.t0_ms}, {"consecutive", c.segment.consecutive}}},
      {"detector",
       {{"integration_ms", c.detector.integration_ms},
        {"refractory_ms", c.detector.refractory_ms},
        {"refine_ms", c.detector.refine_ms},
        {"searchback_factor", c.detector.searchback_factor}}},
      {"quality_gate", {{"min_peaks", c.gate.min_peaks}, {"max_amplitude_ratio", c.gate.max_amplitude_ratio}}},
      {"max_segments_per_recording", c.max_segments_per_recording}};
}

void from_json(const nlohmann::json& j, PreprocessConfig& c) {
  c.trim_s = j.value("trim_s", c.trim_s);
  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    c.filter.order = f.value("order", c.filter.order);
    c.filter.low_hz = f.value("low_hz", c.filter.low_hz);
    c.filter.high_hz = f.value("high_hz", c.filter.high_hz);
    c.filter.zero_phase = f.value("zero_phase", c.filter.zero_phase);
  }
  if (j.contains("segment")) {
    const auto& s = j.at("segment");
    c.segment.t1_ms = s.value("t1_ms", c.segment.t1_ms);
    c.segment.t0_ms = s.value("t0_ms", c.segment.t0_ms);
    c.segment.consecutive = s.value("consecutive", c.segment.consecutive);
  }
  if (j.contains("detector")) {
    const auto& d = j.at("detector");
    c.detector.integration_ms = d.value("integration_ms", c.detector.integration_ms);
    c.detector.refractory_ms = d.value("refractory_ms", c.detector.refractory_ms);
    c.detector.refine_ms = d.value("refine_ms", c.detector.refine_ms);
    c.detector.searchback_factor = d.value("searchback_factor", c.detector.searchback_factor);
  }
  if (j.contains("quality_gate")) {
    const auto& g = j.at("quality_gate");
    c.gate.min_peaks = g.value("min_peaks", c.gate.min_peaks);
    c.gate.max_amplitude_ratio = g.value("max_amplitude_ratio", c.gate.max_amplitude_ratio);
  }
  c.max_segments_per_recording = j.value("max_segments_per_recording", c.max_segments_per_recording);
}

PreprocessResult preprocess_recording(const signal::EcgRecording& rec, int label, const PreprocessConfig& cfg) {
  PreprocessResult result;
  RecordingOutcome outcome;
  outcome.subject_id = rec.subject_id;
  outcome.session_id = rec.session_id;
  try {
    const signal::EcgRecording trimmed = signal::trim_edges(rec, cfg.trim_s);
    signal::FilterSpec fspec = cfg.filter;
    fspec.fs = rec.fs;
    const signal::BiquadCascade cascade = signal::design_bandpass(fspec);
    const std::vector<double> filtered = signal::apply_filter(cascade, fspec, trimmed.samples);
    const std::vector<std::size_t> peaks = signal::detect_r_peaks(filtered, rec.fs, cfg.detector);
    outcome.peaks = peaks.size();
    const signal::QualityVerdict verdict = signal::assess_quality(filtered, peaks, cfg.gate);
    if (!verdict.accepted) {
      outcome.reason = verdict.reason;
    } else {
      signal::SegmentSpec sspec = cfg.segment;
      sspec.fs = rec.fs;
      result.segments = signal::segment(trimmed, filtered, peaks, sspec, label);
      if (cfg.max_segments_per_recording > 0 && result.segments.size() > cfg.max_segments_per_recording) {
        // Evenly spaced picks so the kept windows span the whole recording.
        const std::size_t n = result.segments.size();
        const std::size_t keep = cfg.max_segments_per_recording;
        std::vector<signal::Segment> picked;
        picked.reserve(keep);
        for (std::size_t i = 0; i < keep; ++i) picked.push_back(std::move(result.segments[i * n / keep]));
        result.segments = std::move(picked);
      }
      outcome.accepted = true;
      outcome.segments = result.segments.size();
    }
  } catch (const RecordingTooShort& e) {
    outcome.reason = e.what();
  } catch (const NoPeaksFound& e) {
    outcome.reason = e.what();
  }
  result.outcomes.push_back(std::move(outcome));
  return result;
}

PreprocessResult preprocess_all(std::span<const signal::EcgRecording> recordings, std::span<const int> labels,
                                const PreprocessConfig& cfg) {
  if (labels.size() != recordings.size()) throw ShapeMismatch("one label per recording required");
  std::vector<PreprocessResult> parts(recordings.size());
  std::vector<std::exception_ptr> errors(recordings.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(recordings.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      parts[k] = preprocess_recording(recordings[k], labels[k], cfg);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  PreprocessResult all;
  for (PreprocessResult& p : parts) {
    std::move(p.segments.begin(), p.segments.end(), std::back_inserter(all.segments));
    std::move(p.outcomes.begin(), p.outcomes.end(), std::back_inserter(all.outcomes));
  }
  return all;
}

}  // namespace ecgcbam::pipeline
