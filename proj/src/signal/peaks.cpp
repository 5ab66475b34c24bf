#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecgcbam/error.hpp"
#include "ecgcbam/signal.hpp"

namespace ecgcbam::signal {

namespace {

std::size_t ms_to_samples(double ms, double fs) {
  return static_cast<std::size_t>(std::lround(ms * fs / 1000.0));
}

// Five-point centered derivative, squared, then a centered moving-window
// integral. Centering keeps the integrated energy aligned with the QRS.
std::vector<double> integrated_energy(std::span<const double> x, std::size_t window) {
  const std::size_t n = x.size();
  std::vector<double> sq(n, 0.0);
  for (std::size_t i = 2; i + 2 < n; ++i) {
    const double d = (2.0 * x[i + 2] + x[i + 1] - x[i - 1] - 2.0 * x[i - 2]) / 8.0;
    sq[i] = d * d;
  }
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sq[i];
  const std::size_t half = window / 2;
  std::vector<double> mwi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    mwi[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(window);
  }
  return mwi;
}

// Climbs to the largest sample within +-radius until the index stops moving,
// so the result is a maximum of its own neighbourhood.
std::size_t refine_to_local_max(std::span<const double> x, std::size_t idx, std::size_t radius) {
  for (int iter = 0; iter < 32; ++iter) {
    const std::size_t lo = idx >= radius ? idx - radius : 0;
    const std::size_t hi = std::min(x.size() - 1, idx + radius);
    const auto best = static_cast<std::size_t>(
        std::max_element(x.begin() + static_cast<std::ptrdiff_t>(lo),
                         x.begin() + static_cast<std::ptrdiff_t>(hi) + 1) -
        x.begin());
    if (best == idx) break;
    idx = best;
  }
  return idx;
}

}  // namespace

std::vector<std::size_t> detect_r_peaks(std::span<const double> x, double fs,
                                        const PeakDetectorConfig& cfg) {
  if (!(fs > 0)) throw InvalidSpec("sampling rate must be positive");
  const std::size_t two_sec = static_cast<std::size_t>(2.0 * fs);
  if (x.size() < two_sec) throw InvalidSpec("peak detection needs at least two seconds of signal");

  const std::size_t refractory = ms_to_samples(cfg.refractory_ms, fs);
  const std::size_t radius = ms_to_samples(cfg.refine_ms, fs);
  const std::vector<double> mwi =
      integrated_energy(x, std::max<std::size_t>(1, ms_to_samples(cfg.integration_ms, fs)));

  // Candidate fiducials: local maxima of the integrated energy.
  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < mwi.size(); ++i) {
    if (mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1]) candidates.push_back(i);
  }

  // Learning phase over the first two seconds.
  const double init_max = *std::max_element(mwi.begin(), mwi.begin() + static_cast<std::ptrdiff_t>(two_sec));
  const double init_mean =
      std::accumulate(mwi.begin(), mwi.begin() + static_cast<std::ptrdiff_t>(two_sec), 0.0) /
      static_cast<double>(two_sec);
  if (!(init_max > 0)) throw NoPeaksFound("signal carries no QRS energy");
  double spk = 0.25 * init_max;
  double npk = 0.5 * init_mean;
  auto threshold = [&] { return npk + 0.25 * (spk - npk); };

  std::vector<std::size_t> qrs;
  std::vector<std::size_t> rejected;  // noise candidates since the last QRS
  double rr_avg = 0.0;

  auto accept = [&](std::size_t idx, double weight) {
    if (!qrs.empty()) {
      const double rr = static_cast<double>(idx - qrs.back());
      rr_avg = rr_avg == 0.0 ? rr : 0.875 * rr_avg + 0.125 * rr;
    }
    qrs.push_back(idx);
    spk = weight * mwi[idx] + (1.0 - weight) * spk;
    rejected.clear();
  };

  for (const std::size_t c : candidates) {
    // Search back for a missed beat when the gap grows too long.
    if (!qrs.empty() && rr_avg > 0 &&
        static_cast<double>(c - qrs.back()) > cfg.searchback_factor * rr_avg) {
      std::size_t best = 0;
      double best_val = 0.5 * threshold();
      for (const std::size_t r : rejected) {
        if (r >= qrs.back() + refractory && c >= r + refractory && mwi[r] > best_val) {
          best = r;
          best_val = mwi[r];
        }
      }
      if (best != 0) accept(best, 0.25);
    }

    const double v = mwi[c];
    if (v > threshold()) {
      if (!qrs.empty() && c - qrs.back() < refractory) {
        if (v > mwi[qrs.back()]) {
          qrs.back() = c;
          spk = 0.125 * v + 0.875 * spk;
        }
        continue;
      }
      accept(c, 0.125);
    } else {
      npk = 0.125 * v + 0.875 * npk;
      rejected.push_back(c);
    }
  }

  // Move each fiducial onto the R apex of the filtered signal.
  std::vector<std::size_t> peaks;
  peaks.reserve(qrs.size());
  for (const std::size_t q : qrs) {
    const std::size_t r = refine_to_local_max(x, q, radius);
    if (!peaks.empty() && r <= peaks.back()) {
      continue;
    }
    if (!peaks.empty() && r - peaks.back() < refractory) {
      if (x[r] > x[peaks.back()]) peaks.back() = r;
      continue;
    }
    peaks.push_back(r);
  }
  if (peaks.size() < 2) throw NoPeaksFound("fewer than two R-peaks detected");
  return peaks;
}

QualityVerdict assess_quality(std::span<const double> filtered, std::span<const std::size_t> peaks,
                              const QualityGate& gate) {
  if (peaks.size() < gate.min_peaks) {
    return {false, "only " + std::to_string(peaks.size()) + " peaks"};
  }
  double lo = filtered[peaks.front()];
  double hi = lo;
  for (const std::size_t p : peaks) {
    lo = std::min(lo, filtered[p]);
    hi = std::max(hi, filtered[p]);
  }
  if (!(lo > 0) || hi > gate.max_amplitude_ratio * lo) {
    return {false, "R amplitude varies beyond the allowed ratio"};
  }
  return {};
}

}  // namespace ecgcbam::signal
