#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "ecgcbam/error.hpp"
#include "ecgcbam/kernels.hpp"
#include "ecgcbam/tensor.hpp"

namespace ecgcbam::ops {

namespace {

using idx_t = std::ptrdiff_t;
namespace kn = kernels;

bool tracks(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (!t.defined() || t.rank() != rank) {
    throw ShapeMismatch(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                        (t.defined() ? to_string(t.shape()) : std::string("undefined")));
  }
}

bool parallel_backend() { return kn::backend() == kn::Backend::Parallel; }

// Calls the serial or parallel flavour of a kernel.
#define ECGCBAM_DISPATCH(fn, ...)              \
  do {                                         \
    if (parallel_backend()) {                  \
      kn::parallel::fn(__VA_ARGS__);           \
    } else {                                   \
      kn::serial::fn(__VA_ARGS__);             \
    }                                          \
  } while (0)

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& k, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(x, 3, "conv1d input");
  require_rank(k, 3, "conv1d kernel");
  require_rank(bias, 1, "conv1d bias");
  if (stride < 1) throw ShapeMismatch("conv1d stride must be >= 1");
  kn::Conv1dShape s{x.dim(0), x.dim(1), x.dim(2), k.dim(0), k.dim(2), stride, padding};
  if (k.dim(1) != s.c_in || bias.dim(0) != s.c_out) {
    throw ShapeMismatch("conv1d: input " + to_string(x.shape()) + ", kernel " + to_string(k.shape()) +
                        ", bias " + to_string(bias.shape()));
  }
  if (s.kernel > s.width + 2 * padding) throw ShapeMismatch("conv1d kernel wider than padded input");

  Tensor out = Tensor::zeros({s.n, s.c_out, s.out_width()}, tracks({&x, &k, &bias}));
  ECGCBAM_DISPATCH(conv1d_forward, s, x.data(), k.data(), bias.data(), out.mutable_data());
  if (out.requires_grad()) {
    Tape::current().record({x, k, bias}, out, [x, k, bias, out, s]() {
      if (x.requires_grad()) ECGCBAM_DISPATCH(conv1d_backward_input, s, out.grad(), k.data(), x.mutable_grad());
      if (k.requires_grad() || bias.requires_grad()) {
        std::vector<double> gk(k.numel(), 0.0), gb(bias.numel(), 0.0);
        ECGCBAM_DISPATCH(conv1d_backward_weight, s, out.grad(), x.data(), gk, gb);
        if (k.requires_grad()) {
          auto g = k.mutable_grad();
          for (std::size_t i = 0; i < gk.size(); ++i) g[i] += gk[i];
        }
        if (bias.requires_grad()) {
          auto g = bias.mutable_grad();
          for (std::size_t i = 0; i < gb.size(); ++i) g[i] += gb[i];
        }
      }
    });
  }
  return out;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "dense input");
  require_rank(w, 2, "dense weight");
  require_rank(b, 1, "dense bias");
  kn::DenseShape s{x.dim(0), x.dim(1), w.dim(0)};
  if (w.dim(1) != s.f_in || b.dim(0) != s.f_out) {
    throw ShapeMismatch("dense: input " + to_string(x.shape()) + ", weight " + to_string(w.shape()) +
                        ", bias " + to_string(b.shape()));
  }
  Tensor out = Tensor::zeros({s.n, s.f_out}, tracks({&x, &w, &b}));
  ECGCBAM_DISPATCH(dense_forward, s, x.data(), w.data(), b.data(), out.mutable_data());
  if (out.requires_grad()) {
    Tape::current().record({x, w, b}, out, [x, w, b, out, s]() {
      std::span<double> gx, gw, gb;
      if (x.requires_grad()) gx = x.mutable_grad();
      if (w.requires_grad()) gw = w.mutable_grad();
      if (b.requires_grad()) gb = b.mutable_grad();
      ECGCBAM_DISPATCH(dense_backward, s, out.grad(), x.data(), w.data(), gx, gw, gb);
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  std::vector<double> v(x.data().begin(), x.data().end());
  for (double& e : v) e = e > 0.0 ? e : 0.0;
  Tensor out = Tensor::from(x.shape(), std::move(v), tracks({&x}));
  if (out.requires_grad()) {
    Tape::current().record({x}, out, [x, out]() {
      auto gx = x.mutable_grad();
      const auto g = out.grad();
      const auto xv = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (xv[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return out;
}

namespace {
double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(const Tensor& x) {
  std::vector<double> v(x.data().begin(), x.data().end());
  for (double& e : v) e = stable_sigmoid(e);
  Tensor out = Tensor::from(x.shape(), std::move(v), tracks({&x}));
  if (out.requires_grad()) {
    Tape::current().record({x}, out, [x, out]() {
      auto gx = x.mutable_grad();
      const auto g = out.grad();
      const auto y = out.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    });
  }
  return out;
}

Tensor maxpool1d(const Tensor& x, std::size_t window, std::size_t stride) {
  require_rank(x, 3, "maxpool1d");
  if (window < 1 || stride < 1 || window > x.dim(2)) throw ShapeMismatch("maxpool1d window does not fit");
  kn::PoolShape s{x.dim(0), x.dim(1), x.dim(2), window, stride};
  Tensor out = Tensor::zeros({s.n, s.c, s.out_width()}, tracks({&x}));
  std::vector<std::size_t> argmax(out.numel());
  ECGCBAM_DISPATCH(maxpool1d_forward, s, x.data(), out.mutable_data(), argmax);
  if (out.requires_grad()) {
    Tape::current().record({x}, out, [x, out, argmax = std::move(argmax)]() {
      kn::maxpool1d_backward(out.grad(), argmax, x.mutable_grad());
    });
  }
  return out;
}

Tensor avgpool1d(const Tensor& x, std::size_t window, std::size_t stride) {
  require_rank(x, 3, "avgpool1d");
  if (window < 1 || stride < 1 || window > x.dim(2)) throw ShapeMismatch("avgpool1d window does not fit");
  kn::PoolShape s{x.dim(0), x.dim(1), x.dim(2), window, stride};
  Tensor out = Tensor::zeros({s.n, s.c, s.out_width()}, tracks({&x}));
  ECGCBAM_DISPATCH(avgpool1d_forward, s, x.data(), out.mutable_data());
  if (out.requires_grad()) {
    Tape::current().record({x}, out, [x, out, s]() {
      ECGCBAM_DISPATCH(avgpool1d_backward, s, out.grad(), x.mutable_grad());
    });
  }
  return out;
}

Tensor global_avgpool_w(const Tensor& x) {
  require_rank(x, 3, "global_avgpool_w");
  const std::size_t rows = x.dim(0) * x.dim(1), w = x.dim(2);
  Tensor out = Tensor::zeros({x.dim(0), x.dim(1)}, tracks({&x}));
  auto o = out.mutable_data();
  const auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w; ++i) acc += xv[r * w + i];
    o[r] = acc / static_cast<double>(w);
  }
  if (out.requires_grad()) {
    Tape::current().record({x}, out, [x, out, rows, w]() {
      auto gx = x.mutable_grad();
      const auto g = out.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double share = g[r] / static_cast<double>(w);
        for (std::size_t i = 0; i < w; ++i) gx[r * w + i] += share;
      }
    });
  }
  return out;
}

Tensor global_maxpool_w(const Tensor& x) {
  require_rank(x, 3, "global_maxpool_w");
  const std::size_t rows = x.dim(0) * x.dim(1), w = x.dim(2);
  Tensor out = Tensor::zeros({x.dim(0), x.dim(1)}, tracks({&x}));
  auto o = out.mutable_data();
  const auto xv = x.data();
  std::vector<std::size_t> argmax(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = r * w;
    for (std::size_t i = 1; i < w; ++i) {
      if (xv[r * w + i] > xv[best]) best = r * w + i;
    }
    argmax[r] = best;
    o[r] = xv[best];
  }
  if (out.requires_grad()) {
    Tape::current().record({x}, out, [x, out, argmax = std::move(argmax)]() {
      kn::maxpool1d_backward(out.grad(), argmax, x.mutable_grad());
    });
  }
  return out;
}

Tensor channel_avg(const Tensor& x) {
  require_rank(x, 3, "channel_avg");
  const std::size_t n = x.dim(0), c = x.dim(1), w = x.dim(2);
  Tensor out = Tensor::zeros({n, 1, w}, tracks({&x}));
  auto o = out.mutable_data();
  const auto xv = x.data();
  const double inv = 1.0 / static_cast<double>(c);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* row = xv.data() + (b * c + ch) * w;
      for (std::size_t i = 0; i < w; ++i) o[b * w + i] += row[i];
    }
    for (std::size_t i = 0; i < w; ++i) o[b * w + i] *= inv;
  }
  if (out.requires_grad()) {
    Tape::current().record({x}, out, [x, out, n, c, w, inv]() {
      auto gx = x.mutable_grad();
      const auto g = out.grad();
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t i = 0; i < w; ++i) gx[(b * c + ch) * w + i] += g[b * w + i] * inv;
        }
      }
    });
  }
  return out;
}

Tensor channel_max(const Tensor& x) {
  require_rank(x, 3, "channel_max");
  const std::size_t n = x.dim(0), c = x.dim(1), w = x.dim(2);
  Tensor out = Tensor::zeros({n, 1, w}, tracks({&x}));
  auto o = out.mutable_data();
  const auto xv = x.data();
  std::vector<std::size_t> argmax(n * w);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < w; ++i) {
      std::size_t best = (b * c) * w + i;
      for (std::size_t ch = 1; ch < c; ++ch) {
        const std::size_t idx = (b * c + ch) * w + i;
        if (xv[idx] > xv[best]) best = idx;
      }
      argmax[b * w + i] = best;
      o[b * w + i] = xv[best];
    }
  }
  if (out.requires_grad()) {
    Tape::current().record({x}, out, [x, out, argmax = std::move(argmax)]() {
      kn::maxpool1d_backward(out.grad(), argmax, x.mutable_grad());
    });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_channels");
  require_rank(b, 3, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw ShapeMismatch("concat_channels: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), w = a.dim(2);
  Tensor out = Tensor::zeros({n, ca + cb, w}, tracks({&a, &b}));
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().begin() + static_cast<idx_t>(i * ca * w), ca * w,
                o.begin() + static_cast<idx_t>(i * (ca + cb) * w));
    std::copy_n(b.data().begin() + static_cast<idx_t>(i * cb * w), cb * w,
                o.begin() + static_cast<idx_t>((i * (ca + cb) + ca) * w));
  }
  if (out.requires_grad()) {
    Tape::current().record({a, b}, out, [a, b, out, n, ca, cb, w]() {
      const auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < ca * w; ++j) ga[i * ca * w + j] += g[i * (ca + cb) * w + j];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < cb * w; ++j) gb[i * cb * w + j] += g[(i * (ca + cb) + ca) * w + j];
      }
    });
  }
  return out;
}

Tensor concat_batch(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1 ||
      !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ShapeMismatch("concat_batch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<double> v(a.data().begin(), a.data().end());
  v.insert(v.end(), b.data().begin(), b.data().end());
  Tensor out = Tensor::from(std::move(shape), std::move(v), tracks({&a, &b}));
  if (out.requires_grad()) {
    Tape::current().record({a, b}, out, [a, b, out]() {
      const auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[a.numel() + i];
      }
    });
  }
  return out;
}

Tensor mul_broadcast(const Tensor& x, const Tensor& a) {
  require_rank(x, 3, "mul_broadcast");
  const std::size_t n = x.dim(0), c = x.dim(1), w = x.dim(2);
  const bool per_channel = a.defined() && a.rank() == 2 && a.dim(0) == n && a.dim(1) == c;
  const bool per_position = a.defined() && a.rank() == 3 && a.dim(0) == n && a.dim(1) == 1 && a.dim(2) == w;
  if (!per_channel && !per_position) {
    throw ShapeMismatch("mul_broadcast: " + to_string(x.shape()) + " by " +
                        (a.defined() ? to_string(a.shape()) : std::string("undefined")));
  }
  // Attention value multiplying element (b, ch, i).
  auto att_index = [=](std::size_t b, std::size_t ch, std::size_t i) {
    return per_channel ? b * c + ch : b * w + i;
  };
  Tensor out = Tensor::zeros(x.shape(), tracks({&x, &a}));
  auto o = out.mutable_data();
  const auto xv = x.data();
  const auto av = a.data();
#pragma omp parallel for schedule(static)
  for (idx_t r = 0; r < static_cast<idx_t>(n * c); ++r) {
    const std::size_t b = static_cast<std::size_t>(r) / c, ch = static_cast<std::size_t>(r) % c;
    for (std::size_t i = 0; i < w; ++i) {
      const std::size_t idx = static_cast<std::size_t>(r) * w + i;
      o[idx] = xv[idx] * av[att_index(b, ch, i)];
    }
  }
  if (out.requires_grad()) {
    Tape::current().record({x, a}, out, [x, a, out, n, c, w, att_index]() {
      const auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        const auto av = a.data();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < w; ++i) {
              const std::size_t idx = (b * c + ch) * w + i;
              gx[idx] += g[idx] * av[att_index(b, ch, i)];
            }
      }
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        const auto xv = x.data();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < w; ++i) {
              const std::size_t idx = (b * c + ch) * w + i;
              ga[att_index(b, ch, i)] += g[idx] * xv[idx];
            }
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] + b.data()[i];
  Tensor out = Tensor::from(a.shape(), std::move(v), tracks({&a, &b}));
  if (out.requires_grad()) {
    Tape::current().record({a, b}, out, [a, b, out]() {
      const auto g = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->mutable_grad();
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> v(x.data().begin(), x.data().end());
  for (double& e : v) e *= factor;
  Tensor out = Tensor::from(x.shape(), std::move(v), tracks({&x}));
  if (out.requires_grad()) {
    Tape::current().record({x}, out, [x, out, factor]() {
      auto gx = x.mutable_grad();
      const auto g = out.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (ecgcbam::numel(shape) != x.numel()) {
    throw ShapeMismatch("reshape " + to_string(x.shape()) + " to " + to_string(shape));
  }
  Tensor out = Tensor::from(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()),
                            tracks({&x}));
  if (out.requires_grad()) {
    Tape::current().record({x}, out, [x, out]() {
      auto gx = x.mutable_grad();
      const auto g = out.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (const double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc, tracks({&x}));
  if (out.requires_grad()) {
    Tape::current().record({x}, out, [x, out]() {
      auto gx = x.mutable_grad();
      const double g = out.grad()[0];
      for (double& e : gx) e += g;
    });
  }
  return out;
}

Tensor bce_loss(const Tensor& p, std::span<const double> labels) {
  if (!p.defined() || p.numel() != labels.size()) {
    throw ShapeMismatch("bce_loss: " + std::to_string(labels.size()) + " labels for " +
                        (p.defined() ? to_string(p.shape()) : std::string("undefined")));
  }
  const std::size_t n = labels.size();
  const auto pv = p.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::clamp(pv[i], kBceClamp, 1.0 - kBceClamp);
    acc -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(n), tracks({&p}));
  if (out.requires_grad()) {
    std::vector<double> y(labels.begin(), labels.end());
    Tape::current().record({p}, out, [p, out, y = std::move(y)]() {
      auto gp = p.mutable_grad();
      const auto pv = p.data();
      const double g = out.grad()[0] / static_cast<double>(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (pv[i] < kBceClamp || pv[i] > 1.0 - kBceClamp) continue;  // clamped: flat
        gp[i] += g * (-y[i] / pv[i] + (1.0 - y[i]) / (1.0 - pv[i]));
      }
    });
  }
  return out;
}

}  // namespace ecgcbam::ops
