#include <algorithm>
#include <cmath>
#include <numbers>

#include "ecgcbam/error.hpp"
#include "ecgcbam/signal.hpp"

namespace ecgcbam::signal {

using cplx = std::complex<double>;

void FilterSpec::validate() const {
  if (order <= 0 || order % 2 != 0) throw InvalidSpec("filter order must be even and positive");
  if (!(fs > 0)) throw InvalidSpec("sampling rate must be positive");
  if (!(low_hz > 0 && low_hz < high_hz && high_hz < fs / 2))
    throw InvalidSpec("band edges must satisfy 0 < low < high < fs/2");
}

BiquadCascade design_bandpass(const FilterSpec& spec) {
  spec.validate();
  const int n = spec.order / 2;  // lowpass prototype order
  const double fs2 = 2.0 * spec.fs;
  const double w_lo = fs2 * std::tan(std::numbers::pi * spec.low_hz / spec.fs);
  const double w_hi = fs2 * std::tan(std::numbers::pi * spec.high_hz / spec.fs);
  const double bw = w_hi - w_lo;
  const double w0_sq = w_lo * w_hi;

  // Lowpass -> bandpass: each prototype pole p yields the two roots of
  // s^2 - p*bw*s + w0^2. Zeros: n at s = 0 and n at infinity.
  std::vector<cplx> analog_poles;
  for (int k = 0; k < n; ++k) {
    const cplx p = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1) / (2.0 * n));
    const cplx pb = p * bw;
    const cplx disc = std::sqrt(pb * pb - 4.0 * w0_sq);
    analog_poles.push_back((pb + disc) / 2.0);
    analog_poles.push_back((pb - disc) / 2.0);
  }

  // Bilinear transform. Analog zeros at 0 map to z = 1, those at infinity to z = -1.
  cplx denom = 1.0;
  std::vector<cplx> poles;
  for (const cplx& s : analog_poles) {
    poles.push_back((fs2 + s) / (fs2 - s));
    denom *= (fs2 - s);
  }
  const double gain = (std::pow(bw, n) * std::pow(fs2, n) / denom).real();

  // Pair poles into sections: conjugate pairs first, then leftover real poles.
  std::vector<cplx> upper;
  std::vector<double> real_poles;
  for (const cplx& z : poles) {
    if (std::abs(z.imag()) < 1e-14 * std::max(1.0, std::abs(z))) {
      real_poles.push_back(z.real());
    } else if (z.imag() > 0) {
      upper.push_back(z);
    }
  }
  std::sort(upper.begin(), upper.end(),
            [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });
  std::sort(real_poles.begin(), real_poles.end());

  BiquadCascade cascade;
  for (const cplx& z : upper) {
    Biquad bq;
    bq.b0 = 1.0;
    bq.b1 = 0.0;
    bq.b2 = -1.0;
    bq.a1 = -2.0 * z.real();
    bq.a2 = std::norm(z);
    cascade.sections.push_back(bq);
  }
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    Biquad bq;
    bq.b0 = 1.0;
    bq.b1 = 0.0;
    bq.b2 = -1.0;
    bq.a1 = -(real_poles[i] + real_poles[i + 1]);
    bq.a2 = real_poles[i] * real_poles[i + 1];
    cascade.sections.push_back(bq);
  }
  if (cascade.sections.size() != static_cast<std::size_t>(n))
    throw InvalidSpec("pole pairing failed");

  Biquad& first = cascade.sections.front();
  first.b0 *= gain;
  first.b1 *= gain;
  first.b2 *= gain;
  return cascade;
}

cplx BiquadCascade::response(double f_hz, double fs) const {
  const cplx zinv = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs);
  const cplx zinv2 = zinv * zinv;
  cplx h = 1.0;
  for (const Biquad& s : sections) {
    h *= (s.b0 + s.b1 * zinv + s.b2 * zinv2) / (1.0 + s.a1 * zinv + s.a2 * zinv2);
  }
  return h;
}

double BiquadCascade::max_pole_radius() const {
  double r = 0.0;
  for (const Biquad& s : sections) {
    const cplx disc = std::sqrt(cplx(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
    r = std::max(r, std::abs((-s.a1 + disc) / 2.0));
    r = std::max(r, std::abs((-s.a1 - disc) / 2.0));
  }
  return r;
}

std::vector<double> filter_forward(const BiquadCascade& cascade, std::span<const double> x) {
  if (x.empty()) throw InvalidSpec("cannot filter an empty sequence");
  std::vector<double> y(x.begin(), x.end());
  for (const Biquad& s : cascade.sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> filter_zero_phase(const BiquadCascade& cascade, std::span<const double> x) {
  std::vector<double> y = filter_forward(cascade, x);
  std::reverse(y.begin(), y.end());
  y = filter_forward(cascade, y);
  std::reverse(y.begin(), y.end());
  return y;
}

std::vector<double> apply_filter(const BiquadCascade& cascade, const FilterSpec& spec,
                                 std::span<const double> x) {
  return spec.zero_phase ? filter_zero_phase(cascade, x) : filter_forward(cascade, x);
}

}  // namespace ecgcbam::signal
