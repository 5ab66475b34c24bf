#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ecgcbam::signal {

/// One single-lead ECG recording with its identity and reference glucose.
struct EcgRecording {
  std::string subject_id;
  int session_id = 0;
  double fs = 1000.0;
  std::vector<double> samples;
  std::optional<double> glucose_mgdl;

  /// Throws InvalidSpec when fs <= 0, samples is empty or glucose <= 0.
  void validate() const;
};

struct FilterSpec {
  int order = 4;  // total bandpass order; order/2 second-order sections
  double low_hz = 1.0;
  double high_hz = 40.0;
  double fs = 1000.0;
  bool zero_phase = false;

  void validate() const;
};

/// Direct-form-II-transposed second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

struct BiquadCascade {
  std::vector<Biquad> sections;

  /// H(e^{jw}) evaluated from the section coefficients.
  std::complex<double> response(double f_hz, double fs) const;
  /// Largest pole magnitude across all sections.
  double max_pole_radius() const;
};

struct SegmentSpec {
  double t1_ms = 200.0;  // before the R-peak
  double t0_ms = 400.0;  // after the R-peak
  double fs = 1000.0;
  int consecutive = 1;   // >1 concatenates that many consecutive beats

  void validate() const;
  std::size_t before() const;
  std::size_t after() const;
  /// Samples per heartbeat window: round((t1+t0)*fs/1000).
  std::size_t beat_width() const;
  /// Emitted segment width, beat_width() * consecutive.
  std::size_t width() const { return beat_width() * static_cast<std::size_t>(consecutive); }
};

struct Segment {
  std::string subject_id;
  int session_id = 0;
  std::vector<double> values;
  int label = 0;
};

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;

  static constexpr double kEpsilon = 1e-8;

  std::size_t width() const { return mean.size(); }
};

// --- trimming and filtering -------------------------------------------------

EcgRecording trim_edges(const EcgRecording& rec, double seconds);

/// Butterworth bandpass via bilinear transform with pre-warped band edges.
BiquadCascade design_bandpass(const FilterSpec& spec);

/// Causal DF2T pass over the whole cascade.
std::vector<double> filter_forward(const BiquadCascade& cascade, std::span<const double> x);

/// Forward pass followed by a time-reversed pass (zero phase, squared magnitude).
std::vector<double> filter_zero_phase(const BiquadCascade& cascade, std::span<const double> x);

/// Dispatches on spec.zero_phase.
std::vector<double> apply_filter(const BiquadCascade& cascade, const FilterSpec& spec,
                                 std::span<const double> x);

// --- R-peak detection ---------------------------------------------------------

struct PeakDetectorConfig {
  double integration_ms = 150.0;
  double refractory_ms = 200.0;
  double refine_ms = 50.0;
  double searchback_factor = 1.66;
};

/// Pan-Tompkins style detector. Throws NoPeaksFound when fewer than two peaks
/// survive; InvalidSpec when x is shorter than two seconds.
std::vector<std::size_t> detect_r_peaks(std::span<const double> x, double fs,
                                        const PeakDetectorConfig& cfg = {});

struct QualityGate {
  std::size_t min_peaks = 20;
  double max_amplitude_ratio = 10.0;
};

struct QualityVerdict {
  bool accepted = true;
  std::string reason;
};

QualityVerdict assess_quality(std::span<const double> filtered, std::span<const std::size_t> peaks,
                              const QualityGate& gate = {});

// --- segmentation and standardization -----------------------------------------

/// One window per peak whose full extent lies inside the recording. Windows
/// that would cross either edge are dropped. In consecutive mode peaks are
/// taken in non-overlapping groups and each group's beat windows are joined.
std::vector<Segment> segment(const EcgRecording& rec, std::span<const double> filtered,
                             std::span<const std::size_t> peaks, const SegmentSpec& spec,
                             int label);

Standardizer fit_standardizer(std::span<const Segment> train);
Segment apply_standardizer(const Standardizer& s, const Segment& seg);
void apply_standardizer_inplace(const Standardizer& s, std::span<Segment> segs);

// --- file formats -----------------------------------------------------------------

/// Little-endian binary: 8-byte magic "ECGREC01", uint32 version, uint32
/// reserved, float64 fs, uint64 count, float64 samples[count].
void write_recording_file(const std::filesystem::path& path, double fs,
                          std::span<const double> samples);
/// Reads samples and fs; identity fields come from the manifest.
EcgRecording read_recording_file(const std::filesystem::path& path);

/// Segment cache: magic "ECGSEG01", uint64 W, uint64 count, then per segment
/// uint64 subject hash, uint8 label, float64 values[W].
struct CachedSegment {
  std::uint64_t subject_hash = 0;
  int label = 0;
  std::vector<double> values;
};

std::uint64_t subject_hash(std::string_view subject_id);

void write_segment_cache(const std::filesystem::path& path, std::span<const Segment> segs);
std::vector<CachedSegment> read_segment_cache(const std::filesystem::path& path);

}  // namespace ecgcbam::signal
