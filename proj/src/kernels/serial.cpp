#include <algorithm>

#include "ecgcbam/kernels.hpp"

namespace ecgcbam::kernels::serial {

void conv1d_forward(const Conv1dShape& s, std::span<const double> x, std::span<const double> wt,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t wo = s.out_width();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t co = 0; co < s.c_out; ++co) {
      for (std::size_t w = 0; w < wo; ++w) {
        double acc = bias[co];
        for (std::size_t ci = 0; ci < s.c_in; ++ci) {
          for (std::size_t k = 0; k < s.kernel; ++k) {
            const auto pos = static_cast<std::ptrdiff_t>(w * s.stride + k) -
                             static_cast<std::ptrdiff_t>(s.padding);
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.width)) continue;
            acc += x[(n * s.c_in + ci) * s.width + static_cast<std::size_t>(pos)] *
                   wt[(co * s.c_in + ci) * s.kernel + k];
          }
        }
        out[(n * s.c_out + co) * wo + w] = acc;
      }
    }
  }
}

void conv1d_backward_input(const Conv1dShape& s, std::span<const double> grad_out,
                           std::span<const double> wt, std::span<double> grad_x) {
  const std::size_t wo = s.out_width();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t co = 0; co < s.c_out; ++co) {
      for (std::size_t w = 0; w < wo; ++w) {
        const double g = grad_out[(n * s.c_out + co) * wo + w];
        for (std::size_t ci = 0; ci < s.c_in; ++ci) {
          for (std::size_t k = 0; k < s.kernel; ++k) {
            const auto pos = static_cast<std::ptrdiff_t>(w * s.stride + k) -
                             static_cast<std::ptrdiff_t>(s.padding);
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.width)) continue;
            grad_x[(n * s.c_in + ci) * s.width + static_cast<std::size_t>(pos)] +=
                g * wt[(co * s.c_in + ci) * s.kernel + k];
          }
        }
      }
    }
  }
}

void conv1d_backward_weight(const Conv1dShape& s, std::span<const double> grad_out,
                            std::span<const double> x, std::span<double> grad_w,
                            std::span<double> grad_bias) {
  const std::size_t wo = s.out_width();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t co = 0; co < s.c_out; ++co) {
      for (std::size_t w = 0; w < wo; ++w) {
        const double g = grad_out[(n * s.c_out + co) * wo + w];
        grad_bias[co] += g;
        for (std::size_t ci = 0; ci < s.c_in; ++ci) {
          for (std::size_t k = 0; k < s.kernel; ++k) {
            const auto pos = static_cast<std::ptrdiff_t>(w * s.stride + k) -
                             static_cast<std::ptrdiff_t>(s.padding);
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(s.width)) continue;
            grad_w[(co * s.c_in + ci) * s.kernel + k] +=
                g * x[(n * s.c_in + ci) * s.width + static_cast<std::size_t>(pos)];
          }
        }
      }
    }
  }
}

void dense_forward(const DenseShape& s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> out) {
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t o = 0; o < s.f_out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < s.f_in; ++i) acc += x[n * s.f_in + i] * w[o * s.f_in + i];
      out[n * s.f_out + o] = acc;
    }
  }
}

void dense_backward(const DenseShape& s, std::span<const double> grad_out,
                    std::span<const double> x, std::span<const double> w,
                    std::span<double> grad_x, std::span<double> grad_w,
                    std::span<double> grad_b) {
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t o = 0; o < s.f_out; ++o) {
      const double g = grad_out[n * s.f_out + o];
      if (!grad_b.empty()) grad_b[o] += g;
      for (std::size_t i = 0; i < s.f_in; ++i) {
        if (!grad_x.empty()) grad_x[n * s.f_in + i] += g * w[o * s.f_in + i];
        if (!grad_w.empty()) grad_w[o * s.f_in + i] += g * x[n * s.f_in + i];
      }
    }
  }
}

void maxpool1d_forward(const PoolShape& s, std::span<const double> x, std::span<double> out,
                       std::span<std::size_t> argmax) {
  const std::size_t wo = s.out_width();
  for (std::size_t row = 0; row < s.n * s.c; ++row) {
    for (std::size_t w = 0; w < wo; ++w) {
      std::size_t best = row * s.width + w * s.stride;
      for (std::size_t k = 1; k < s.window; ++k) {
        const std::size_t idx = row * s.width + w * s.stride + k;
        if (x[idx] > x[best]) best = idx;
      }
      out[row * wo + w] = x[best];
      argmax[row * wo + w] = best;
    }
  }
}

void avgpool1d_forward(const PoolShape& s, std::span<const double> x, std::span<double> out) {
  const std::size_t wo = s.out_width();
  for (std::size_t row = 0; row < s.n * s.c; ++row) {
    for (std::size_t w = 0; w < wo; ++w) {
      double acc = 0.0;
      for (std::size_t k = 0; k < s.window; ++k) acc += x[row * s.width + w * s.stride + k];
      out[row * wo + w] = acc / static_cast<double>(s.window);
    }
  }
}

void avgpool1d_backward(const PoolShape& s, std::span<const double> grad_out,
                        std::span<double> grad_x) {
  const std::size_t wo = s.out_width();
  const double scale = 1.0 / static_cast<double>(s.window);
  for (std::size_t row = 0; row < s.n * s.c; ++row) {
    for (std::size_t w = 0; w < wo; ++w) {
      for (std::size_t k = 0; k < s.window; ++k) {
        grad_x[row * s.width + w * s.stride + k] += grad_out[row * wo + w] * scale;
      }
    }
  }
}

}  // namespace ecgcbam::kernels::serial
