#include <doctest.h>

#include <cmath>
#include <random>

#include "ecgcbam/error.hpp"
#include "ecgcbam/kernels.hpp"
#include "ecgcbam/tensor.hpp"
#include "oracles/gradcheck.hpp"
#include "oracles/oracles.hpp"

using namespace ecgcbam;
using oracles::grad_check;
using oracles::random_tensor;

namespace {

constexpr double kTol = 1e-5;

Tensor probabilities(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

TEST_CASE("tensor basics") {
  const Tensor t = Tensor::full({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.dim(1) == 3);
  CHECK_FALSE(t.requires_grad());
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0}), ShapeMismatch);
  CHECK(to_string(Shape{2, 3}) == "[2,3]");

  const Tensor alias = t;
  CHECK(alias.same_storage(t));
  const Tensor copy = t.detach_clone();
  CHECK_FALSE(copy.same_storage(t));
  CHECK(std::equal(copy.data().begin(), copy.data().end(), t.data().begin()));
}

TEST_CASE("fd oracle sanity") {
  Tensor x = Tensor::from({2}, {1.0, 2.0});
  const auto g = oracles::fd_gradient([&] { return x.data()[0] * x.data()[0] + x.data()[1] * x.data()[1]; }, x);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));

  Tensor p = Tensor::from({1}, {0.5});
  const auto gb = oracles::fd_gradient([&] { return -std::log(p.data()[0]); }, p);
  CHECK(gb[0] == doctest::Approx(-2.0).epsilon(1e-6));
}

TEST_CASE("backward through a shared input accumulates") {
  Tensor x = Tensor::from({3}, {1.0, -2.0, 3.0}, true);
  const Tensor y = ops::sum(ops::add(x, ops::scale(x, 2.0)));
  backward(y);
  for (double g : x.grad()) CHECK(g == 3.0);
  CHECK(Tape::current().size() == 0);
}

TEST_CASE("no-grad guard records nothing") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  {
    NoGradGuard off;
    CHECK_FALSE(grad_enabled());
    const Tensor y = ops::sum(ops::relu(x));
    CHECK_FALSE(y.requires_grad());
    CHECK(Tape::current().size() == 0);
  }
  CHECK(grad_enabled());
  CHECK_THROWS(backward(Tensor::scalar(1.0)));
}

TEST_CASE("gradient checks: layers") {
  for (auto backend : {kernels::Backend::Serial, kernels::Backend::Parallel}) {
    kernels::BackendGuard guard(backend);
    CAPTURE(static_cast<int>(backend));
    Tensor x = random_tensor({2, 3, 11}, 1);
    Tensor k = random_tensor({4, 3, 5}, 2);
    Tensor b = random_tensor({4}, 3);
    CHECK(grad_check([&] { return ops::conv1d(x, k, b, 1, 2); }, {{"x", x}, {"k", k}, {"b", b}}).max_rel_error < kTol);
    CHECK(grad_check([&] { return ops::conv1d(x, k, b, 2, 1); }, {{"x", x}, {"k", k}, {"b", b}}).max_rel_error < kTol);
    CHECK(grad_check([&] { return ops::conv1d(x, k, b, 1, 0); }, {{"x", x}, {"k", k}, {"b", b}}).max_rel_error < kTol);

    Tensor xd = random_tensor({5, 6}, 4);
    Tensor w = random_tensor({3, 6}, 5);
    Tensor bd = random_tensor({3}, 6);
    CHECK(grad_check([&] { return ops::dense(xd, w, bd); }, {{"x", xd}, {"w", w}, {"b", bd}}).max_rel_error < kTol);

    Tensor xp = random_tensor({2, 3, 10}, 7);
    CHECK(grad_check([&] { return ops::maxpool1d(xp, 2, 2); }, {{"x", xp}}).max_rel_error < kTol);
    CHECK(grad_check([&] { return ops::maxpool1d(xp, 3, 2); }, {{"x", xp}}).max_rel_error < kTol);
    CHECK(grad_check([&] { return ops::avgpool1d(xp, 3, 2); }, {{"x", xp}}).max_rel_error < kTol);
  }
}

TEST_CASE("gradient checks: elementwise and reductions") {
  Tensor x = random_tensor({2, 4, 9}, 11, 1e-3);
  CHECK(grad_check([&] { return ops::relu(x); }, {{"x", x}}).max_rel_error < kTol);
  CHECK(grad_check([&] { return ops::sigmoid(x); }, {{"x", x}}).max_rel_error < kTol);
  CHECK(grad_check([&] { return ops::global_avgpool_w(x); }, {{"x", x}}).max_rel_error < kTol);
  CHECK(grad_check([&] { return ops::global_maxpool_w(x); }, {{"x", x}}).max_rel_error < kTol);
  CHECK(grad_check([&] { return ops::channel_avg(x); }, {{"x", x}}).max_rel_error < kTol);
  CHECK(grad_check([&] { return ops::channel_max(x); }, {{"x", x}}).max_rel_error < kTol);
  CHECK(grad_check([&] { return ops::scale(x, -1.7); }, {{"x", x}}).max_rel_error < kTol);
  CHECK(grad_check([&] { return ops::reshape(x, {2, 36}); }, {{"x", x}}).max_rel_error < kTol);
  CHECK(grad_check([&] { return ops::sum(x); }, {{"x", x}}).max_rel_error < kTol);

  Tensor y = random_tensor({2, 4, 9}, 12);
  CHECK(grad_check([&] { return ops::add(x, y); }, {{"x", x}, {"y", y}}).max_rel_error < kTol);
  Tensor z = random_tensor({2, 3, 9}, 13);
  CHECK(grad_check([&] { return ops::concat_channels(x, z); }, {{"x", x}, {"z", z}}).max_rel_error < kTol);
  Tensor u = random_tensor({3, 4, 9}, 14);
  CHECK(grad_check([&] { return ops::concat_batch(x, u); }, {{"x", x}, {"u", u}}).max_rel_error < kTol);

  Tensor ac = random_tensor({2, 4}, 15);
  CHECK(grad_check([&] { return ops::mul_broadcast(x, ac); }, {{"x", x}, {"a", ac}}).max_rel_error < kTol);
  Tensor aw = random_tensor({2, 1, 9}, 16);
  CHECK(grad_check([&] { return ops::mul_broadcast(x, aw); }, {{"x", x}, {"a", aw}}).max_rel_error < kTol);
}

TEST_CASE("gradient check: BCE") {
  Tensor p = probabilities({6}, 21);
  const std::vector<double> labels{1, 0, 0, 1, 1, 0};
  CHECK(grad_check([&] { return ops::bce_loss(p, labels); }, {{"p", p}}).max_rel_error < kTol);
}

TEST_CASE("BCE spot values") {
  CHECK(ops::bce_loss(Tensor::from({1}, {0.5}), std::vector<double>{1}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ops::bce_loss(Tensor::from({1}, {0.9}), std::vector<double>{0}).item() ==
        doctest::Approx(2.302585092994046).epsilon(1e-12));
  CHECK(ops::bce_loss(Tensor::from({1}, {1.0}), std::vector<double>{1}).item() < 1e-9);
  CHECK(std::isfinite(ops::bce_loss(Tensor::from({1}, {0.0}), std::vector<double>{1}).item()));
  CHECK_THROWS_AS(ops::bce_loss(Tensor::from({2}, {0.5, 0.5}), std::vector<double>{1}), ShapeMismatch);
}

TEST_CASE("sigmoid is stable for large arguments") {
  const Tensor y = ops::sigmoid(Tensor::from({3}, {-800.0, 0.0, 800.0}));
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == 0.5);
  CHECK(y.data()[2] == 1.0);
}

TEST_CASE("shape errors") {
  const Tensor x = Tensor::zeros({2, 3, 8});
  CHECK_THROWS_AS(ops::conv1d(x, Tensor::zeros({4, 2, 3}), Tensor::zeros({4})), ShapeMismatch);
  CHECK_THROWS_AS(ops::dense(Tensor::zeros({2, 5}), Tensor::zeros({3, 4}), Tensor::zeros({3})), ShapeMismatch);
  CHECK_THROWS_AS(ops::mul_broadcast(x, Tensor::zeros({2, 2})), ShapeMismatch);
  CHECK_THROWS_AS(ops::add(x, Tensor::zeros({2, 3, 7})), ShapeMismatch);
  CHECK_THROWS_AS(ops::reshape(x, {5, 5}), ShapeMismatch);
}

TEST_CASE("conv1d matches the direct reference within 1e-12") {
  struct Case {
    std::size_t n, ci, w, co, k, stride, pad;
  };
  for (const Case c : {Case{2, 3, 40, 5, 7, 1, 3}, Case{1, 1, 600, 16, 7, 1, 3}, Case{3, 4, 17, 2, 3, 2, 1},
                       Case{2, 8, 75, 13, 7, 1, 3}, Case{1, 2, 9, 3, 9, 1, 0}}) {
    for (auto backend : {kernels::Backend::Serial, kernels::Backend::Parallel}) {
      kernels::BackendGuard guard(backend);
      const Tensor x = random_tensor({c.n, c.ci, c.w}, 31, 0.0, false);
      const Tensor k = random_tensor({c.co, c.ci, c.k}, 32, 0.0, false);
      const Tensor b = random_tensor({c.co}, 33, 0.0, false);
      const Tensor y = ops::conv1d(x, k, b, c.stride, c.pad);
      const auto ref = oracles::conv1d_naive(x.data(), c.n, c.ci, c.w, k.data(), c.co, c.k, b.data(), c.stride, c.pad);
      REQUIRE(ref.size() == y.numel());
      double worst = 0.0;
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - y.data()[i]));
      CHECK(worst < 1e-12);
    }
  }
}

TEST_CASE("parallel kernels agree with the serial reference") {
  using namespace kernels;
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g;
  const auto fill = [&](std::vector<double>& v) {
    for (double& e : v) e = g(rng);
  };
  for (const Conv1dShape s : {Conv1dShape{3, 5, 37, 7, 7, 1, 3}, Conv1dShape{2, 1, 600, 16, 7, 1, 3},
                              Conv1dShape{4, 9, 75, 13, 5, 1, 0}, Conv1dShape{2, 3, 20, 5, 3, 2, 1},
                              Conv1dShape{1, 2, 9, 3, 7, 1, 6}}) {
    const std::size_t wo = s.out_width();
    std::vector<double> x(s.n * s.c_in * s.width), w(s.c_out * s.c_in * s.kernel), b(s.c_out), go(s.n * s.c_out * wo);
    fill(x), fill(w), fill(b), fill(go);
    std::vector<double> y1(go.size()), y2(go.size());
    serial::conv1d_forward(s, x, w, b, y1);
    parallel::conv1d_forward(s, x, w, b, y2);
    std::vector<double> gx1(x.size(), 0.5), gx2(x.size(), 0.5);
    serial::conv1d_backward_input(s, go, w, gx1);
    parallel::conv1d_backward_input(s, go, w, gx2);
    std::vector<double> gw1(w.size(), 0.1), gw2(w.size(), 0.1), gb1(b.size(), 0.2), gb2(b.size(), 0.2);
    serial::conv1d_backward_weight(s, go, x, gw1, gb1);
    parallel::conv1d_backward_weight(s, go, x, gw2, gb2);
    CHECK(oracles::max_relative_error(y1, y2, 1.0) < 1e-12);
    CHECK(oracles::max_relative_error(gx1, gx2, 1.0) < 1e-12);
    CHECK(oracles::max_relative_error(gw1, gw2, 1.0) < 1e-12);
    CHECK(oracles::max_relative_error(gb1, gb2, 1.0) < 1e-12);
  }

  const DenseShape d{7, 13, 5};
  std::vector<double> x(d.n * d.f_in), w(d.f_out * d.f_in), b(d.f_out), go(d.n * d.f_out);
  fill(x), fill(w), fill(b), fill(go);
  std::vector<double> y1(go.size()), y2(go.size());
  serial::dense_forward(d, x, w, b, y1);
  parallel::dense_forward(d, x, w, b, y2);
  CHECK(oracles::max_relative_error(y1, y2, 1.0) < 1e-12);

  const PoolShape p{2, 3, 11, 2, 2};
  std::vector<double> px(p.n * p.c * p.width);
  fill(px);
  std::vector<double> m1(p.n * p.c * p.out_width()), m2(m1.size());
  std::vector<std::size_t> a1(m1.size()), a2(m1.size());
  serial::maxpool1d_forward(p, px, m1, a1);
  parallel::maxpool1d_forward(p, px, m2, a2);
  CHECK(m1 == m2);
  CHECK(a1 == a2);
}

TEST_CASE("parallel kernels are deterministic") {
  const Tensor x = random_tensor({8, 16, 300}, 51, 0.0, false);
  const Tensor k = random_tensor({32, 16, 7}, 52, 0.0, false);
  const Tensor b = random_tensor({32}, 53, 0.0, false);
  const Tensor y1 = ops::conv1d(x, k, b, 1, 3);
  const Tensor y2 = ops::conv1d(x, k, b, 1, 3);
  CHECK(std::equal(y1.data().begin(), y1.data().end(), y2.data().begin()));
}

TEST_CASE("max pool ties route the gradient to the first maximum") {
  Tensor x = Tensor::from({1, 1, 4}, {2.0, 2.0, 1.0, 1.0}, true);
  backward(ops::sum(ops::maxpool1d(x, 2, 2)));
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 1.0);
  CHECK(x.grad()[3] == 0.0);
}
