#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <omp.h>

#include "ecgcbam/kernels.hpp"
#include "ecgcbam/model.hpp"

using namespace ecgcbam;
using clock_type = std::chrono::steady_clock;

namespace {

// Best of `reps` timings, in seconds.
double best_of(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock_type::now();
    f();
    best = std::min(best, std::chrono::duration<double>(clock_type::now() - t0).count());
  }
  return best;
}

std::vector<double> noise(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void row(const std::string& name, double serial, double parallel, double diff) {
  std::printf("%-34s %10.3f %10.3f %8.2fx %10.1e\n", name.c_str(), serial * 1e3, parallel * 1e3, serial / parallel,
              diff);
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t batch = argc > 1 ? std::stoul(argv[1]) : 64;
  const int reps = argc > 2 ? std::stoi(argv[2]) : 5;
  std::mt19937_64 rng(1);
  std::printf("batch %zu, %d OpenMP threads, best of %d\n\n", batch, omp_get_max_threads(), reps);
  std::printf("%-34s %10s %10s %9s %10s\n", "kernel", "serial ms", "parallel", "speedup", "max diff");

  // The four conv layers of the default model.
  const std::size_t layers[4][3] = {{1, 16, 600}, {16, 32, 300}, {32, 64, 150}, {64, 128, 75}};
  for (const auto& l : layers) {
    const kernels::Conv1dShape s{batch, l[0], l[2], l[1], 7, 1, 3};
    const std::size_t wo = s.out_width();
    const auto x = noise(s.n * s.c_in * s.width, rng);
    const auto w = noise(s.c_out * s.c_in * s.kernel, rng);
    const auto b = noise(s.c_out, rng);
    const auto go = noise(s.n * s.c_out * wo, rng);
    const std::string tag = std::to_string(l[0]) + "->" + std::to_string(l[1]) + " @" + std::to_string(l[2]);

    std::vector<double> y1(go.size()), y2(go.size());
    const double fs = best_of(reps, [&] { kernels::serial::conv1d_forward(s, x, w, b, y1); });
    const double fp = best_of(reps, [&] { kernels::parallel::conv1d_forward(s, x, w, b, y2); });
    row("conv fwd " + tag, fs, fp, max_abs_diff(y1, y2));

    std::vector<double> gx1(x.size()), gx2(x.size());
    const double is = best_of(reps, [&] {
      std::fill(gx1.begin(), gx1.end(), 0.0);
      kernels::serial::conv1d_backward_input(s, go, w, gx1);
    });
    const double ip = best_of(reps, [&] {
      std::fill(gx2.begin(), gx2.end(), 0.0);
      kernels::parallel::conv1d_backward_input(s, go, w, gx2);
    });
    row("conv bwd input " + tag, is, ip, max_abs_diff(gx1, gx2));

    std::vector<double> gw1(w.size()), gw2(w.size()), gb1(b.size()), gb2(b.size());
    const double ws = best_of(reps, [&] {
      std::fill(gw1.begin(), gw1.end(), 0.0);
      std::fill(gb1.begin(), gb1.end(), 0.0);
      kernels::serial::conv1d_backward_weight(s, go, x, gw1, gb1);
    });
    const double wp = best_of(reps, [&] {
      std::fill(gw2.begin(), gw2.end(), 0.0);
      std::fill(gb2.begin(), gb2.end(), 0.0);
      kernels::parallel::conv1d_backward_weight(s, go, x, gw2, gb2);
    });
    row("conv bwd weight " + tag, ws, wp, max_abs_diff(gw1, gw2));
  }

  {
    const kernels::PoolShape s{batch, 64, 150, 2, 2};
    const auto x = noise(s.n * s.c * s.width, rng);
    std::vector<double> y1(s.n * s.c * s.out_width()), y2(y1.size());
    std::vector<std::size_t> a1(y1.size()), a2(y1.size());
    const double ps = best_of(reps, [&] { kernels::serial::maxpool1d_forward(s, x, y1, a1); });
    const double pp = best_of(reps, [&] { kernels::parallel::maxpool1d_forward(s, x, y2, a2); });
    row("maxpool 64 @150", ps, pp, max_abs_diff(y1, y2));
  }

  // Whole model, one training step's forward and backward pass.
  std::printf("\n%-34s %10s %10s %9s\n", "model fwd+bwd", "serial ms", "parallel", "speedup");
  const model::ModelParams params = model::init_params(model::ModelConfig{}, 1);
  const auto xs = noise(batch * 600, rng);
  const std::vector<double> labels(batch, 1.0);
  double t[2];
  for (int i = 0; i < 2; ++i) {
    kernels::BackendGuard guard(i == 0 ? kernels::Backend::Serial : kernels::Backend::Parallel);
    t[i] = best_of(std::max(1, reps / 2), [&] {
      const Tensor p = model::model_forward(Tensor::from({batch, 1, 600}, xs), params);
      backward(ops::bce_loss(p, labels));
      for (const Tensor& w : params.parameters()) w.zero_grad();
    });
  }
  std::printf("%-34s %10.1f %10.1f %8.2fx\n", "default config", t[0] * 1e3, t[1] * 1e3, t[0] / t[1]);
  return 0;
}
