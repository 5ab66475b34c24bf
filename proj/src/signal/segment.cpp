#include <algorithm>
#include <cmath>

#include "ecgcbam/error.hpp"
#include "ecgcbam/signal.hpp"

namespace ecgcbam::signal {

void EcgRecording::validate() const {
  if (!(fs > 0)) throw InvalidSpec("recording sampling rate must be positive");
  if (samples.empty()) throw InvalidSpec("recording has no samples");
  if (glucose_mgdl && !(*glucose_mgdl > 0)) throw InvalidSpec("glucose must be positive");
}

EcgRecording trim_edges(const EcgRecording& rec, double seconds) {
  if (seconds < 0) throw InvalidSpec("trim duration must be non-negative");
  const auto cut = static_cast<std::size_t>(std::llround(seconds * rec.fs));
  if (rec.samples.size() <= 2 * cut) {
    throw RecordingTooShort(std::to_string(rec.samples.size()) + " samples cannot lose " +
                            std::to_string(cut) + " at each end");
  }
  EcgRecording out;
  out.subject_id = rec.subject_id;
  out.session_id = rec.session_id;
  out.fs = rec.fs;
  out.glucose_mgdl = rec.glucose_mgdl;
  out.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(cut),
                     rec.samples.end() - static_cast<std::ptrdiff_t>(cut));
  return out;
}

void SegmentSpec::validate() const {
  if (!(t1_ms > 0) || !(t0_ms > 0)) throw InvalidSpec("segment offsets must be positive");
  if (!(fs > 0)) throw InvalidSpec("sampling rate must be positive");
  if (consecutive < 1) throw InvalidSpec("consecutive beat count must be at least 1");
}

std::size_t SegmentSpec::before() const {
  return static_cast<std::size_t>(std::llround(t1_ms * fs / 1000.0));
}

std::size_t SegmentSpec::after() const { return beat_width() - before(); }

std::size_t SegmentSpec::beat_width() const {
  return static_cast<std::size_t>(std::llround((t1_ms + t0_ms) * fs / 1000.0));
}

std::vector<Segment> segment(const EcgRecording& rec, std::span<const double> filtered,
                             std::span<const std::size_t> peaks, const SegmentSpec& spec,
                             int label) {
  spec.validate();
  const std::size_t before = spec.before();
  const std::size_t after = spec.after();
  const std::size_t n = filtered.size();
  auto inside = [&](std::size_t r) { return r >= before && r + after <= n; };

  std::vector<Segment> out;
  const auto group = static_cast<std::size_t>(spec.consecutive);
  for (std::size_t i = 0; i + group <= peaks.size(); i += group) {
    bool ok = true;
    for (std::size_t j = i; j < i + group; ++j) ok = ok && inside(peaks[j]);
    if (!ok) continue;
    Segment seg;
    seg.subject_id = rec.subject_id;
    seg.session_id = rec.session_id;
    seg.label = label;
    seg.values.reserve(spec.width());
    for (std::size_t j = i; j < i + group; ++j) {
      const auto first = filtered.begin() + static_cast<std::ptrdiff_t>(peaks[j] - before);
      seg.values.insert(seg.values.end(), first,
                        first + static_cast<std::ptrdiff_t>(before + after));
    }
    out.push_back(std::move(seg));
  }
  return out;
}

Standardizer fit_standardizer(std::span<const Segment> train) {
  if (train.size() < 2) throw InsufficientData("standardizer needs at least two segments");
  const std::size_t w = train.front().values.size();
  std::vector<double> mean(w, 0.0);
  for (const Segment& s : train) {
    if (s.values.size() != w) throw ShapeMismatch("segments differ in width");
    for (std::size_t i = 0; i < w; ++i) mean[i] += s.values[i];
  }
  const auto count = static_cast<double>(train.size());
  for (double& m : mean) m /= count;

  std::vector<double> var(w, 0.0);
  for (const Segment& s : train) {
    for (std::size_t i = 0; i < w; ++i) {
      const double d = s.values[i] - mean[i];
      var[i] += d * d;
    }
  }
  Standardizer st;
  st.mean = std::move(mean);
  st.std.resize(w);
  for (std::size_t i = 0; i < w; ++i) {
    st.std[i] = std::max(std::sqrt(var[i] / count), Standardizer::kEpsilon);
  }
  return st;
}

Segment apply_standardizer(const Standardizer& s, const Segment& seg) {
  Segment out = seg;
  apply_standardizer_inplace(s, std::span<Segment>(&out, 1));
  return out;
}

void apply_standardizer_inplace(const Standardizer& s, std::span<Segment> segs) {
  const std::size_t w = s.width();
  for (const Segment& seg : segs) {
    if (seg.values.size() != w) throw ShapeMismatch("segment width does not match standardizer");
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(segs.size()); ++k) {
    auto& v = segs[static_cast<std::size_t>(k)].values;
    for (std::size_t i = 0; i < w; ++i) v[i] = (v[i] - s.mean[i]) / s.std[i];
  }
}

}  // namespace ecgcbam::signal
