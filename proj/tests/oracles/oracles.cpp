#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace ecgcbam::oracles {

std::vector<double> fd_gradient(const std::function<double()>& f, Tensor& x, double step) {
  std::vector<double> g(x.numel());
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + step;
    const double up = f();
    data[i] = saved - step;
    const double down = f();
    data[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

std::vector<double> conv1d_naive(std::span<const double> x, std::size_t n, std::size_t c_in,
                                 std::size_t width, std::span<const double> k, std::size_t c_out,
                                 std::size_t kernel, std::span<const double> bias,
                                 std::size_t stride, std::size_t padding) {
  const std::size_t padded = width + 2 * padding;
  std::vector<double> xp(n * c_in * padded, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t i = 0; i < width; ++i)
        xp[(b * c_in + c) * padded + padding + i] = x[(b * c_in + c) * width + i];

  const std::size_t wo = (padded - kernel) / stride + 1;
  std::vector<double> out(n * c_out * wo);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t j = 0; j < wo; ++j) {
        long double acc = 0.0L;
        for (std::size_t c = 0; c < c_in; ++c)
          for (std::size_t t = 0; t < kernel; ++t)
            acc += static_cast<long double>(xp[(b * c_in + c) * padded + j * stride + t]) *
                   k[(o * c_in + c) * kernel + t];
        out[(b * c_out + o) * wo + j] = static_cast<double>(acc + bias[o]);
      }
  return out;
}

double auc_pairwise(std::span<const double> scores, std::span<const int> labels) {
  double credit = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  return credit / static_cast<double>(pairs);
}

namespace {
std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}
}  // namespace

double freq_response(const signal::BiquadCascade& cascade, double f_hz, double fs) {
  std::vector<double> num{1.0}, den{1.0};
  for (const auto& s : cascade.sections) {
    num = poly_mul(num, {s.b0, s.b1, s.b2});
    den = poly_mul(den, {1.0, s.a1, s.a2});
  }
  const std::complex<double> zinv = std::exp(std::complex<double>(0.0, -2.0 * std::numbers::pi * f_hz / fs));
  auto horner = [&](const std::vector<double>& c) {
    std::complex<double> acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * zinv + *it;
    return acc;
  };
  return std::abs(horner(num) / horner(den));
}

double dft_magnitude(std::span<const double> x, double f_hz, double fs) {
  const double n = static_cast<double>(x.size());
  const double bin = std::round(f_hz * n / fs);
  std::complex<double> acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += x[i] * std::exp(std::complex<double>(0.0, -2.0 * std::numbers::pi * bin * static_cast<double>(i) / n));
  }
  return std::abs(acc);
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace ecgcbam::oracles
