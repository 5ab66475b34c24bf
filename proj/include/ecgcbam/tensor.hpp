#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ecgcbam {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t numel(const Shape& shape);

/// Dense row-major float64 array with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage, which is what
/// the tape needs to route gradients back to parameters. Values are treated
/// as immutable once an op has consumed them; only parameters are updated in
/// place, by the optimizer, outside of any recorded computation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Allocates a zero buffer on first use. Gradient slots stay writable
  /// through const handles; values do not.
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  /// Deep copy of values; the copy does not require grad.
  Tensor detach_clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations for one thread.
class Tape {
 public:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  /// The calling thread's tape.
  static Tape& current();

  void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  /// Runs every node's backward rule in reverse order, then clears.
  void run_backward();

 private:
  std::vector<Node> nodes_;
};

/// Disables recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Seeds d(loss)/d(loss) = 1 and propagates through the current tape.
/// Leaf gradients accumulate; the tape is cleared afterwards.
void backward(const Tensor& loss);

namespace ops {

/// x[N,C_in,W] * k[C_out,C_in,K] + bias[C_out] -> [N,C_out,W_out], cross-correlation.
Tensor conv1d(const Tensor& x, const Tensor& k, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0);
/// x[N,F_in] * w[F_out,F_in]^T + b[F_out] -> [N,F_out]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor maxpool1d(const Tensor& x, std::size_t window, std::size_t stride);
Tensor avgpool1d(const Tensor& x, std::size_t window, std::size_t stride);

/// Pool over the width axis: [N,C,W] -> [N,C].
Tensor global_avgpool_w(const Tensor& x);
Tensor global_maxpool_w(const Tensor& x);

/// Pool across channels: [N,C,W] -> [N,1,W].
Tensor channel_avg(const Tensor& x);
Tensor channel_max(const Tensor& x);

/// [N,C1,W] ++ [N,C2,W] -> [N,C1+C2,W]
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// [N,C,W] concatenated with [M,C,W] along the batch axis.
Tensor concat_batch(const Tensor& a, const Tensor& b);

/// x[N,C,W] times a[N,C] (broadcast over W) or a[N,1,W] (broadcast over C).
Tensor mul_broadcast(const Tensor& x, const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor reshape(const Tensor& x, Shape shape);
/// Sum of all elements -> scalar.
Tensor sum(const Tensor& x);

inline constexpr double kBceClamp = 1e-12;

/// Mean binary cross-entropy of probabilities p (any shape with N elements)
/// against labels in {0,1}; p is clamped to [kBceClamp, 1-kBceClamp].
Tensor bce_loss(const Tensor& p, std::span<const double> labels);

}  // namespace ops
}  // namespace ecgcbam
