#pragma once

#include <cstddef>
#include <span>

// Dense numeric kernels behind the tensor ops. Every kernel exists twice:
// `serial` is the plain loop nest kept as the reference, `parallel` is the
// OpenMP version used in production. Parallel kernels partition work so that
// each output element is written by exactly one thread in a fixed order,
// which keeps results independent of the thread count.
namespace ecgcbam::kernels {

struct Conv1dShape {
  std::size_t n = 1, c_in = 1, width = 1;
  std::size_t c_out = 1, kernel = 1;
  std::size_t stride = 1, padding = 0;

  std::size_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
};

struct DenseShape {
  std::size_t n = 1, f_in = 1, f_out = 1;
};

struct PoolShape {
  std::size_t n = 1, c = 1, width = 1;
  std::size_t window = 2, stride = 2;

  std::size_t out_width() const { return (width - window) / stride + 1; }
};

#define ECGCBAM_KERNEL_SET                                                                   \
  /* out[n,co,w] = bias[co] + sum_{ci,k} x[n,ci,w*s+k-p] * wt[co,ci,k]  (overwrites out) */ \
  void conv1d_forward(const Conv1dShape& s, std::span<const double> x,                     \
                      std::span<const double> wt, std::span<const double> bias,            \
                      std::span<double> out);                                              \
  /* accumulates into grad_x */                                                            \
  void conv1d_backward_input(const Conv1dShape& s, std::span<const double> grad_out,       \
                             std::span<const double> wt, std::span<double> grad_x);        \
  /* accumulates into grad_w and grad_bias */                                              \
  void conv1d_backward_weight(const Conv1dShape& s, std::span<const double> grad_out,      \
                              std::span<const double> x, std::span<double> grad_w,         \
                              std::span<double> grad_bias);                                \
  /* out[n,o] = b[o] + sum_i x[n,i] * w[o,i] */                                            \
  void dense_forward(const DenseShape& s, std::span<const double> x,                       \
                     std::span<const double> w, std::span<const double> b,                 \
                     std::span<double> out);                                               \
  void dense_backward(const DenseShape& s, std::span<const double> grad_out,               \
                      std::span<const double> x, std::span<const double> w,                \
                      std::span<double> grad_x, std::span<double> grad_w,                  \
                      std::span<double> grad_b);                                           \
  /* argmax holds the flat input index of each output; ties go to the lowest index */      \
  void maxpool1d_forward(const PoolShape& s, std::span<const double> x,                    \
                         std::span<double> out, std::span<std::size_t> argmax);            \
  void avgpool1d_forward(const PoolShape& s, std::span<const double> x,                    \
                         std::span<double> out);                                           \
  void avgpool1d_backward(const PoolShape& s, std::span<const double> grad_out,            \
                          std::span<double> grad_x);

namespace serial {
ECGCBAM_KERNEL_SET
}  // namespace serial

namespace parallel {
ECGCBAM_KERNEL_SET
}  // namespace parallel

#undef ECGCBAM_KERNEL_SET

enum class Backend { Serial, Parallel };

/// Backend used by the tensor ops. Defaults to Parallel.
Backend backend();
void set_backend(Backend b);

/// Restores the previous backend on scope exit.
class BackendGuard {
 public:
  explicit BackendGuard(Backend b) : previous_(backend()) { set_backend(b); }
  ~BackendGuard() { set_backend(previous_); }
  BackendGuard(const BackendGuard&) = delete;
  BackendGuard& operator=(const BackendGuard&) = delete;

 private:
  Backend previous_;
};

/// Max-pool backward is a scatter through argmax and has one implementation.
void maxpool1d_backward(std::span<const double> grad_out, std::span<const std::size_t> argmax,
                        std::span<double> grad_x);

}  // namespace ecgcbam::kernels
