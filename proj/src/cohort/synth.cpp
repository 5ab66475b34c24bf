#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "ecgcbam/cohort.hpp"
#include "ecgcbam/error.hpp"

namespace ecgcbam::cohort {

namespace {

// One Gaussian bump of the P-Q-R-S-T template: amplitude (mV), center
// relative to the R apex (s), width (s).
struct Wave {
  double amplitude;
  double center;
  double width;
};

enum WaveIndex { kP, kQ, kR, kS, kT, kWaves };

// Resting lead-II-like template.
constexpr Wave kTemplate[kWaves] = {
    {0.15, -0.200, 0.025},   // P
    {-0.12, -0.035, 0.010},  // Q
    {1.00, 0.000, 0.011},    // R
    {-0.25, 0.035, 0.010},   // S
    {0.30, 0.280, 0.045},    // T
};

// Per-subject morphology spread at idiosyncrasy 1.
constexpr double kAmplitudeLogSd = 0.20;
constexpr double kWidthLogSd = 0.12;
constexpr double kPCenterSd = 0.015;
constexpr double kTCenterSd = 0.010;
// Beat-to-beat variation inside one recording.
constexpr double kBeatAmplitudeSd = 0.03;
constexpr double kBeatTCenterSd = 0.003;

struct SubjectProfile {
  Wave waves[kWaves];
  double bpm = 70.0;
  int label = 0;
  double qt_offset_s = 0.0;
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return seed ^ (0x9E3779B97F4A7C15ull * (index + 1));
}

SubjectProfile draw_profile(const SynthSpec& spec, double bpm, int label, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double k = spec.idiosyncrasy;
  SubjectProfile p;
  p.label = label;
  p.bpm = bpm;
  p.qt_offset_s = label ? spec.delta_qt_ms / 1000.0 : 0.0;
  for (int w = 0; w < kWaves; ++w) {
    p.waves[w] = kTemplate[w];
    const double amp_sd = (w == kR ? 0.5 : 1.0) * kAmplitudeLogSd;
    p.waves[w].amplitude *= std::exp(k * amp_sd * gauss(rng));
    p.waves[w].width *= std::exp(k * kWidthLogSd * gauss(rng));
  }
  p.waves[kP].center += k * kPCenterSd * gauss(rng);
  p.waves[kT].center += k * kTCenterSd * gauss(rng) + p.qt_offset_s;
  return p;
}

SynthRecording render(const SynthSpec& spec, const SubjectProfile& profile, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.fs));
  std::vector<double> x(n, 0.0);

  // Beat train with beat-to-beat RR jitter.
  const double rr_mean = 60.0 / profile.bpm;
  std::vector<double> r_times;
  for (double t = 0.2 + 0.8 * unit(rng); t < spec.duration_s;) {
    r_times.push_back(t);
    const double rr = rr_mean * (1.0 + spec.hrv_fraction * gauss(rng));
    t += std::clamp(rr, 0.5 * rr_mean, 1.5 * rr_mean);
  }

  GroundTruth truth;
  truth.label = profile.label;
  truth.bpm = profile.bpm;
  truth.qt_offset_ms = profile.qt_offset_s * 1000.0;
  const double dt = 1.0 / spec.fs;
  for (const double tr : r_times) {
    const auto r_idx = static_cast<std::size_t>(std::llround(tr * spec.fs));
    if (r_idx < n) truth.r_peaks.push_back(r_idx);
    for (int w = 0; w < kWaves; ++w) {
      Wave wave = profile.waves[w];
      wave.amplitude *= 1.0 + kBeatAmplitudeSd * gauss(rng);
      if (w == kT) wave.center += kBeatTCenterSd * gauss(rng);
      const double center = tr + wave.center;
      const double reach = 5.0 * wave.width;
      const auto lo = static_cast<std::ptrdiff_t>(std::ceil((center - reach) * spec.fs));
      const auto hi = static_cast<std::ptrdiff_t>(std::floor((center + reach) * spec.fs));
      for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, lo); i <= hi && i < static_cast<std::ptrdiff_t>(n); ++i) {
        const double z = (static_cast<double>(i) * dt - center) / wave.width;
        x[static_cast<std::size_t>(i)] += wave.amplitude * std::exp(-0.5 * z * z);
      }
    }
  }

  // Respiratory baseline wander.
  if (spec.baseline_wander > 0) {
    const double f = 0.15 + 0.2 * unit(rng);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += spec.baseline_wander * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) * dt + phase);
    }
  }
  // Electrode-motion bursts: Hann-windowed, lightly smoothed noise.
  if (spec.em_burst_rate_hz > 0 && spec.em_burst_amplitude > 0) {
    std::poisson_distribution<int> bursts(spec.em_burst_rate_hz * spec.duration_s);
    const int count = bursts(rng);
    for (int b = 0; b < count; ++b) {
      const auto start = static_cast<std::size_t>(unit(rng) * static_cast<double>(n));
      const auto len = static_cast<std::size_t>((0.1 + 0.3 * unit(rng)) * spec.fs);
      double smooth = 0.0;
      for (std::size_t i = 0; i < len && start + i < n; ++i) {
        smooth = 0.8 * smooth + 0.2 * gauss(rng);
        const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len));
        x[start + i] += spec.em_burst_amplitude * 2.0 * smooth * hann;
      }
    }
  }
  if (spec.white_noise > 0) {
    for (double& v : x) v += spec.white_noise * gauss(rng);
  }

  SynthRecording out;
  out.recording.fs = spec.fs;
  out.recording.samples = std::move(x);
  out.truth = std::move(truth);
  return out;
}

double draw_glucose(int label, std::mt19937_64& rng) {
  if (label) {
    std::normal_distribution<double> hyper(150.0, 25.0);
    return std::round(std::max(101.0, hyper(rng)));
  }
  std::normal_distribution<double> normal(88.0, 7.0);
  return std::round(std::clamp(normal(rng), 60.0, 99.0));
}

std::string subject_name(std::size_t i) {
  std::ostringstream os;
  os << "S" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

void SynthSpec::validate() const {
  if (n_subjects == 0) throw InvalidSpec("synthetic cohort needs at least one subject");
  if (!(hyper_fraction >= 0 && hyper_fraction <= 1)) throw InvalidSpec("hyper_fraction must lie in [0, 1]");
  if (sessions < 1) throw InvalidSpec("at least one session per subject");
  if (!(fs > 0) || !(duration_s > 0)) throw InvalidSpec("fs and duration must be positive");
  if (!(hr_min_bpm > 0) || hr_max_bpm < hr_min_bpm) throw InvalidSpec("invalid heart-rate range");
  if (hrv_fraction < 0 || white_noise < 0 || baseline_wander < 0 || em_burst_rate_hz < 0 ||
      em_burst_amplitude < 0 || idiosyncrasy < 0 || delta_qt_ms < 0 || delta_bpm < 0) {
    throw InvalidSpec("amplitudes, rates and effect sizes must be non-negative");
  }
}

SynthSpec SynthSpec::clean() const {
  SynthSpec s = *this;
  s.white_noise = 0.0;
  s.baseline_wander = 0.0;
  s.em_burst_rate_hz = 0.0;
  return s;
}

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = nlohmann::json{{"n_subjects", s.n_subjects},       {"hyper_fraction", s.hyper_fraction},
                     {"sessions", s.sessions},           {"fs", s.fs},
                     {"duration_s", s.duration_s},       {"hr_min_bpm", s.hr_min_bpm},
                     {"hr_max_bpm", s.hr_max_bpm},       {"hrv_fraction", s.hrv_fraction},
                     {"white_noise", s.white_noise},     {"baseline_wander", s.baseline_wander},
                     {"em_burst_rate_hz", s.em_burst_rate_hz}, {"em_burst_amplitude", s.em_burst_amplitude},
                     {"delta_bpm", s.delta_bpm},         {"delta_qt_ms", s.delta_qt_ms},
                     {"idiosyncrasy", s.idiosyncrasy},   {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  s.n_subjects = j.value("n_subjects", s.n_subjects);
  s.hyper_fraction = j.value("hyper_fraction", s.hyper_fraction);
  s.sessions = j.value("sessions", s.sessions);
  s.fs = j.value("fs", s.fs);
  s.duration_s = j.value("duration_s", s.duration_s);
  s.hr_min_bpm = j.value("hr_min_bpm", s.hr_min_bpm);
  s.hr_max_bpm = j.value("hr_max_bpm", s.hr_max_bpm);
  s.hrv_fraction = j.value("hrv_fraction", s.hrv_fraction);
  s.white_noise = j.value("white_noise", s.white_noise);
  s.baseline_wander = j.value("baseline_wander", s.baseline_wander);
  s.em_burst_rate_hz = j.value("em_burst_rate_hz", s.em_burst_rate_hz);
  s.em_burst_amplitude = j.value("em_burst_amplitude", s.em_burst_amplitude);
  s.delta_bpm = j.value("delta_bpm", s.delta_bpm);
  s.delta_qt_ms = j.value("delta_qt_ms", s.delta_qt_ms);
  s.idiosyncrasy = j.value("idiosyncrasy", s.idiosyncrasy);
  s.seed = j.value("seed", s.seed);
}

SynthRecording synth_recording(const SynthSpec& spec, double bpm, std::uint64_t seed, int label) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const SubjectProfile profile = draw_profile(spec, bpm, label, rng);
  SynthRecording r = render(spec, profile, rng);
  r.recording.subject_id = "single";
  return r;
}

SynthCohort synth_cohort(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_subjects;

  // Exact class balance at the subject level, in seeded order.
  const auto n_hyper = static_cast<std::size_t>(std::llround(spec.hyper_fraction * static_cast<double>(n)));
  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_hyper), 1);
  std::mt19937_64 master(spec.seed);
  std::shuffle(labels.begin(), labels.end(), master);

  const auto sessions = static_cast<std::size_t>(spec.sessions);
  SynthCohort cohort;
  cohort.recordings.resize(n * sessions);
  cohort.manifest.records.resize(n * sessions);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(n); ++si) {
    const auto s = static_cast<std::size_t>(si);
    std::mt19937_64 rng(derive_seed(spec.seed, s));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int lab = labels[s];
    const double base_bpm = spec.hr_min_bpm + (spec.hr_max_bpm - spec.hr_min_bpm) * unit(rng) +
                            (lab ? spec.delta_bpm : 0.0);
    const SubjectProfile profile = draw_profile(spec, base_bpm, lab, rng);
    const std::string id = subject_name(s);
    for (std::size_t sess = 0; sess < sessions; ++sess) {
      SubjectProfile session_profile = profile;
      session_profile.bpm = std::max(30.0, base_bpm + 1.5 * gauss(rng));
      SynthRecording r = render(spec, session_profile, rng);
      r.recording.subject_id = id;
      r.recording.session_id = static_cast<int>(sess + 1);
      r.recording.glucose_mgdl = draw_glucose(lab, rng);

      ManifestEntry e;
      e.subject_id = id;
      e.session_id = r.recording.session_id;
      e.path = "rec/" + id + "_s" + std::to_string(sess + 1) + ".bin";
      e.glucose_mgdl = *r.recording.glucose_mgdl;
      cohort.manifest.records[s * sessions + sess] = std::move(e);
      cohort.recordings[s * sessions + sess] = std::move(r);
    }
  }
  return cohort;
}

void write_synth_cohort(const SynthCohort& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "rec");
  std::filesystem::create_directories(dir / "truth");
  for (std::size_t i = 0; i < cohort.recordings.size(); ++i) {
    const ManifestEntry& e = cohort.manifest.records[i];
    const SynthRecording& r = cohort.recordings[i];
    signal::write_recording_file(dir / e.path, r.recording.fs, r.recording.samples);
    const nlohmann::json truth{{"subject_id", e.subject_id},
                               {"session_id", e.session_id},
                               {"r_peaks", r.truth.r_peaks},
                               {"label", r.truth.label},
                               {"bpm", r.truth.bpm},
                               {"qt_offset_ms", r.truth.qt_offset_ms}};
    std::ofstream out(dir / "truth" / (e.subject_id + "_s" + std::to_string(e.session_id) + ".json"));
    if (!out) throw FormatError("cannot write ground truth for " + e.subject_id);
    out << truth.dump() << '\n';
  }
  write_manifest(cohort.manifest, dir / "manifest.jsonl");
}

}  // namespace ecgcbam::cohort
