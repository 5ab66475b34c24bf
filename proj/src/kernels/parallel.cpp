#include <algorithm>
#include <atomic>
#include <cstring>
#include <vector>

#include "ecgcbam/kernels.hpp"

namespace ecgcbam::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};

using idx_t = std::ptrdiff_t;

constexpr std::size_t kMaxTaps = 16;

// Output positions w in [lo, hi) whose tap k reads inside [0, width).
struct TapRange {
  std::size_t lo, hi;
};

TapRange valid_outputs(const Conv1dShape& s, std::size_t k, std::size_t wo) {
  // need 0 <= w*stride + k - padding < width
  std::size_t lo = 0;
  if (k < s.padding) lo = (s.padding - k + s.stride - 1) / s.stride;
  std::size_t hi = 0;
  if (s.width + s.padding > k) hi = (s.width + s.padding - k - 1) / s.stride + 1;
  hi = std::min(hi, wo);
  return {lo, std::max(lo, hi)};
}

double dot4(const double* a, const double* b, std::size_t len) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < len; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}
}  // namespace

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

void maxpool1d_backward(std::span<const double> grad_out, std::span<const std::size_t> argmax,
                        std::span<double> grad_x) {
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_x[argmax[i]] += grad_out[i];
}

namespace parallel {

namespace {

constexpr std::size_t kTileW = 16;  // output positions per register tile
constexpr std::size_t kTileR = 4;   // output rows per register tile
constexpr std::size_t kVecs = kTileW / 4;

using vec4 = double __attribute__((vector_size(32)));

inline vec4 load4(const double* p) {
  vec4 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store4(double* p, vec4 v) { std::memcpy(p, &v, sizeof v); }

// Zero-padded copy of x[N,C,W] with `left` and `right` zeros per row.
std::vector<double> pad_rows(std::span<const double> x, std::size_t rows, std::size_t width,
                             std::size_t left, std::size_t right) {
  const std::size_t pw = width + left + right;
  std::vector<double> out(rows * pw, 0.0);
#pragma omp parallel for schedule(static)
  for (idx_t r = 0; r < static_cast<idx_t>(rows); ++r) {
    const auto row = static_cast<std::size_t>(r);
    std::copy_n(x.data() + row * width, width, out.data() + row * pw + left);
  }
  return out;
}

// Stride-1 correlation over padded input rows:
//   out[n, r, i] (+)= sum_{c,k} in[n, c, i + k] * taps[r, c, k]
// for i in [0, out_w). Each (n, block of rows) is owned by one thread.
void correlate_padded(std::size_t n_batch, std::size_t c_in, std::size_t in_w, const double* in,
                      std::size_t rows_out, std::size_t kernel, const double* taps, std::size_t out_w,
                      double* out, bool accumulate) {
  const std::size_t row_blocks = (rows_out + kTileR - 1) / kTileR;
  const auto jobs = static_cast<idx_t>(n_batch * row_blocks);
#pragma omp parallel for schedule(static)
  for (idx_t job = 0; job < jobs; ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / row_blocks;
    const std::size_t r0 = (static_cast<std::size_t>(job) % row_blocks) * kTileR;
    const std::size_t nr = std::min(kTileR, rows_out - r0);
    const double* src = in + n * c_in * in_w;
    double* dst = out + (n * rows_out + r0) * out_w;

    for (std::size_t w0 = 0; w0 < out_w; w0 += kTileW) {
      const std::size_t nw = std::min(kTileW, out_w - w0);
      // Rows past the end reuse the last row's taps; the input carries kTileW
      // extra zeros on the right, so whole tiles never read out of bounds.
      std::size_t row_of[kTileR];
      for (std::size_t r = 0; r < kTileR; ++r) row_of[r] = r0 + std::min(r, nr - 1);
      double acc[kTileR][kTileW];
      vec4 a[kTileR][kVecs] = {};
      for (std::size_t c = 0; c < c_in; ++c) {
        const double* xs = src + c * in_w + w0;
        const double* tp[kTileR];
        for (std::size_t r = 0; r < kTileR; ++r) tp[r] = taps + (row_of[r] * c_in + c) * kernel;
        for (std::size_t k = 0; k < kernel; ++k) {
          vec4 v[kVecs];
          for (std::size_t q = 0; q < kVecs; ++q) v[q] = load4(xs + k + 4 * q);
          for (std::size_t r = 0; r < kTileR; ++r) {
            const double t = tp[r][k];
            for (std::size_t q = 0; q < kVecs; ++q) a[r][q] += t * v[q];
          }
        }
      }
      for (std::size_t r = 0; r < kTileR; ++r)
        for (std::size_t q = 0; q < kVecs; ++q) store4(&acc[r][4 * q], a[r][q]);
      for (std::size_t r = 0; r < nr; ++r) {
        double* d = dst + r * out_w + w0;
        if (accumulate) {
          for (std::size_t j = 0; j < nw; ++j) d[j] += acc[r][j];
        } else {
          for (std::size_t j = 0; j < nw; ++j) d[j] = acc[r][j];
        }
      }
    }
  }
}

// Accumulates d/dk for output channels co and co+1 (if present) against input
// channel ci over the whole batch. KC > 0 fixes the tap count at compile time.
template <std::size_t KC>
void weight_grad_pair(const Conv1dShape& s, const double* grad_out, const double* xp, std::size_t pw,
                      std::size_t co, std::size_t ci, double* grad_w) {
  const std::size_t kernel = KC > 0 ? KC : s.kernel;
  const std::size_t wo = s.out_width();
  const std::size_t co2 = std::min(co + 1, s.c_out - 1);
  // Lane-wise partial sums per tap, reduced in a fixed order at the end.
  vec4 acc0[kMaxTaps] = {}, acc1[kMaxTaps] = {};
  double tail0[kMaxTaps] = {}, tail1[kMaxTaps] = {};
  for (std::size_t n = 0; n < s.n; ++n) {
    const double* g0 = grad_out + (n * s.c_out + co) * wo;
    const double* g1 = grad_out + (n * s.c_out + co2) * wo;
    const double* xs = xp + (n * s.c_in + ci) * pw;
    std::size_t w = 0;
    for (; w + 4 <= wo; w += 4) {
      const vec4 ga = load4(g0 + w);
      const vec4 gb = load4(g1 + w);
      for (std::size_t k = 0; k < kernel; ++k) {
        const vec4 v = load4(xs + w + k);
        acc0[k] += ga * v;
        acc1[k] += gb * v;
      }
    }
    for (; w < wo; ++w) {
      for (std::size_t k = 0; k < kernel; ++k) {
        tail0[k] += g0[w] * xs[w + k];
        tail1[k] += g1[w] * xs[w + k];
      }
    }
  }
  const auto flush = [&](std::size_t c, const vec4* acc, const double* tail) {
    double* gw = grad_w + (c * s.c_in + ci) * kernel;
    for (std::size_t k = 0; k < kernel; ++k) {
      double sum = tail[k];
      for (std::size_t l = 0; l < 4; ++l) sum += acc[k][l];
      gw[k] += sum;
    }
  };
  flush(co, acc0, tail0);
  if (co2 != co) flush(co2, acc1, tail1);
}

}  // namespace

void conv1d_forward(const Conv1dShape& s, std::span<const double> x, std::span<const double> wt,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t wo = s.out_width();
  if (s.stride == 1) {
    // Right padding covers the whole receptive field of the last output.
    const std::size_t right = wo + s.kernel - 1 - s.width - s.padding;
    const std::vector<double> xp = pad_rows(x, s.n * s.c_in, s.width, s.padding, right + kTileW);
    correlate_padded(s.n, s.c_in, s.width + s.padding + right + kTileW, xp.data(), s.c_out, s.kernel, wt.data(), wo,
                     out.data(), false);
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t co = 0; co < s.c_out; ++co) {
        double* d = out.data() + (n * s.c_out + co) * wo;
        for (std::size_t w = 0; w < wo; ++w) d[w] += bias[co];
      }
    }
    return;
  }
  const auto rows = static_cast<idx_t>(s.n * s.c_out);
#pragma omp parallel for schedule(static)
  for (idx_t r = 0; r < rows; ++r) {
    const std::size_t n = static_cast<std::size_t>(r) / s.c_out;
    const std::size_t co = static_cast<std::size_t>(r) % s.c_out;
    double* __restrict dst = out.data() + static_cast<std::size_t>(r) * wo;
    std::fill(dst, dst + wo, bias[co]);
    for (std::size_t ci = 0; ci < s.c_in; ++ci) {
      const double* __restrict src = x.data() + (n * s.c_in + ci) * s.width;
      const double* taps = wt.data() + (co * s.c_in + ci) * s.kernel;
      for (std::size_t k = 0; k < s.kernel; ++k) {
        const auto [lo, hi] = valid_outputs(s, k, wo);
        for (std::size_t w = lo; w < hi; ++w) dst[w] += taps[k] * src[w * s.stride + k - s.padding];
      }
    }
  }
}

void conv1d_backward_input(const Conv1dShape& s, std::span<const double> grad_out,
                           std::span<const double> wt, std::span<double> grad_x) {
  const std::size_t wo = s.out_width();
  if (s.stride == 1 && s.padding < s.kernel) {
    // Full correlation of the output gradient with the flipped, transposed kernel:
    //   gx[n,ci,i] = sum_{co,k} gpad[n,co,i+k] * wt[co,ci,K-1-k],  gpad left pad K-1-p.
    const std::size_t left = s.kernel - 1 - s.padding;
    const std::size_t right = s.width + s.kernel - 1 > left + wo ? s.width + s.kernel - 1 - left - wo : 0;
    const std::vector<double> gp = pad_rows(grad_out, s.n * s.c_out, wo, left, right + kTileW);
    std::vector<double> flipped(s.c_in * s.c_out * s.kernel);
    for (std::size_t co = 0; co < s.c_out; ++co)
      for (std::size_t ci = 0; ci < s.c_in; ++ci)
        for (std::size_t k = 0; k < s.kernel; ++k)
          flipped[(ci * s.c_out + co) * s.kernel + k] = wt[(co * s.c_in + ci) * s.kernel + (s.kernel - 1 - k)];
    correlate_padded(s.n, s.c_out, wo + left + right + kTileW, gp.data(), s.c_in, s.kernel, flipped.data(), s.width,
                     grad_x.data(), true);
    return;
  }
  const auto rows = static_cast<idx_t>(s.n * s.c_in);
#pragma omp parallel for schedule(static)
  for (idx_t r = 0; r < rows; ++r) {
    const std::size_t n = static_cast<std::size_t>(r) / s.c_in;
    const std::size_t ci = static_cast<std::size_t>(r) % s.c_in;
    double* __restrict dst = grad_x.data() + static_cast<std::size_t>(r) * s.width;
    for (std::size_t co = 0; co < s.c_out; ++co) {
      const double* __restrict g = grad_out.data() + (n * s.c_out + co) * wo;
      const double* taps = wt.data() + (co * s.c_in + ci) * s.kernel;
      for (std::size_t k = 0; k < s.kernel; ++k) {
        const auto [lo, hi] = valid_outputs(s, k, wo);
        for (std::size_t w = lo; w < hi; ++w) dst[w * s.stride + k - s.padding] += taps[k] * g[w];
      }
    }
  }
}

void conv1d_backward_weight(const Conv1dShape& s, std::span<const double> grad_out,
                            std::span<const double> x, std::span<double> grad_w,
                            std::span<double> grad_bias) {
  const std::size_t wo = s.out_width();
  if (s.stride == 1 && s.kernel <= kMaxTaps) {
    const std::size_t right = wo + s.kernel - 1 - s.width - s.padding;
    const std::size_t pw = s.width + s.padding + right;
    const std::vector<double> xp = pad_rows(x, s.n * s.c_in, s.width, s.padding, right);
    const std::size_t co_pairs = (s.c_out + 1) / 2;
    const auto jobs = static_cast<idx_t>(co_pairs * s.c_in);
#pragma omp parallel for schedule(static)
    for (idx_t job = 0; job < jobs; ++job) {
      const std::size_t co = (static_cast<std::size_t>(job) / s.c_in) * 2;
      const std::size_t ci = static_cast<std::size_t>(job) % s.c_in;
      if (s.kernel == 7) {
        weight_grad_pair<7>(s, grad_out.data(), xp.data(), pw, co, ci, grad_w.data());
      } else {
        weight_grad_pair<0>(s, grad_out.data(), xp.data(), pw, co, ci, grad_w.data());
      }
    }
    for (std::size_t co = 0; co < s.c_out; ++co) {
      double bsum = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const double* g = grad_out.data() + (n * s.c_out + co) * wo;
        for (std::size_t w = 0; w < wo; ++w) bsum += g[w];
      }
      grad_bias[co] += bsum;
    }
    return;
  }
  const auto c_out = static_cast<idx_t>(s.c_out);
#pragma omp parallel for schedule(static)
  for (idx_t c = 0; c < c_out; ++c) {
    const auto co = static_cast<std::size_t>(c);
    for (std::size_t n = 0; n < s.n; ++n) {
      const double* g = grad_out.data() + (n * s.c_out + co) * wo;
      double bsum = 0.0;
      for (std::size_t w = 0; w < wo; ++w) bsum += g[w];
      grad_bias[co] += bsum;
      for (std::size_t ci = 0; ci < s.c_in; ++ci) {
        const double* src = x.data() + (n * s.c_in + ci) * s.width;
        double* gw = grad_w.data() + (co * s.c_in + ci) * s.kernel;
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const auto [lo, hi] = valid_outputs(s, k, wo);
          double acc = 0.0;
          for (std::size_t w = lo; w < hi; ++w) acc += g[w] * src[w * s.stride + k - s.padding];
          gw[k] += acc;
        }
      }
    }
  }
}

void dense_forward(const DenseShape& s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> out) {
  const auto total = static_cast<idx_t>(s.n * s.f_out);
#pragma omp parallel for schedule(static)
  for (idx_t r = 0; r < total; ++r) {
    const std::size_t n = static_cast<std::size_t>(r) / s.f_out;
    const std::size_t o = static_cast<std::size_t>(r) % s.f_out;
    out[static_cast<std::size_t>(r)] =
        b[o] + dot4(x.data() + n * s.f_in, w.data() + o * s.f_in, s.f_in);
  }
}

void dense_backward(const DenseShape& s, std::span<const double> grad_out,
                    std::span<const double> x, std::span<const double> w,
                    std::span<double> grad_x, std::span<double> grad_w,
                    std::span<double> grad_b) {
  if (!grad_x.empty()) {
#pragma omp parallel for schedule(static)
    for (idx_t r = 0; r < static_cast<idx_t>(s.n); ++r) {
      const auto n = static_cast<std::size_t>(r);
      double* gx = grad_x.data() + n * s.f_in;
      for (std::size_t o = 0; o < s.f_out; ++o) {
        const double g = grad_out[n * s.f_out + o];
        const double* wr = w.data() + o * s.f_in;
        for (std::size_t i = 0; i < s.f_in; ++i) gx[i] += g * wr[i];
      }
    }
  }
  if (!grad_w.empty() || !grad_b.empty()) {
#pragma omp parallel for schedule(static)
    for (idx_t r = 0; r < static_cast<idx_t>(s.f_out); ++r) {
      const auto o = static_cast<std::size_t>(r);
      for (std::size_t n = 0; n < s.n; ++n) {
        const double g = grad_out[n * s.f_out + o];
        if (!grad_b.empty()) grad_b[o] += g;
        if (!grad_w.empty()) {
          double* gw = grad_w.data() + o * s.f_in;
          const double* xr = x.data() + n * s.f_in;
          for (std::size_t i = 0; i < s.f_in; ++i) gw[i] += g * xr[i];
        }
      }
    }
  }
}

void maxpool1d_forward(const PoolShape& s, std::span<const double> x, std::span<double> out,
                       std::span<std::size_t> argmax) {
  const std::size_t wo = s.out_width();
#pragma omp parallel for schedule(static)
  for (idx_t r = 0; r < static_cast<idx_t>(s.n * s.c); ++r) {
    const auto row = static_cast<std::size_t>(r);
    const double* src = x.data() + row * s.width;
    for (std::size_t w = 0; w < wo; ++w) {
      std::size_t best = w * s.stride;
      for (std::size_t k = 1; k < s.window; ++k) {
        if (src[w * s.stride + k] > src[best]) best = w * s.stride + k;
      }
      out[row * wo + w] = src[best];
      argmax[row * wo + w] = row * s.width + best;
    }
  }
}

void avgpool1d_forward(const PoolShape& s, std::span<const double> x, std::span<double> out) {
  const std::size_t wo = s.out_width();
#pragma omp parallel for schedule(static)
  for (idx_t r = 0; r < static_cast<idx_t>(s.n * s.c); ++r) {
    const auto row = static_cast<std::size_t>(r);
    const double* src = x.data() + row * s.width;
    for (std::size_t w = 0; w < wo; ++w) {
      double acc = 0.0;
      for (std::size_t k = 0; k < s.window; ++k) acc += src[w * s.stride + k];
      out[row * wo + w] = acc / static_cast<double>(s.window);
    }
  }
}

void avgpool1d_backward(const PoolShape& s, std::span<const double> grad_out,
                        std::span<double> grad_x) {
  const std::size_t wo = s.out_width();
  const double scale = 1.0 / static_cast<double>(s.window);
#pragma omp parallel for schedule(static)
  for (idx_t r = 0; r < static_cast<idx_t>(s.n * s.c); ++r) {
    const auto row = static_cast<std::size_t>(r);
    double* dst = grad_x.data() + row * s.width;
    for (std::size_t w = 0; w < wo; ++w) {
      for (std::size_t k = 0; k < s.window; ++k) dst[w * s.stride + k] += grad_out[row * wo + w] * scale;
    }
  }
}

}  // namespace parallel
}  // namespace ecgcbam::kernels
