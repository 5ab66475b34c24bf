#include <doctest.h>

#include <cmath>
#include <fstream>

#include "ecgcbam/error.hpp"
#include "ecgcbam/model.hpp"
#include "oracles/gradcheck.hpp"
#include "support.hpp"

using namespace ecgcbam;
using namespace ecgcbam::model;
using oracles::grad_check;
using oracles::random_tensor;

namespace {

// Random non-zero biases so every parameter sees a non-trivial gradient.
ModelParams perturbed(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = init_params(cfg, seed);
  std::uint64_t s = seed * 100;
  for (auto& [name, t] : p.named()) {
    const Tensor r = random_tensor(t.shape(), ++s, 0.0, false);
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += 0.1 * r.data()[i];
  }
  return p;
}

}  // namespace

TEST_CASE("default configuration") {
  const ModelConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.blocks() == 4);
  CHECK(c.block_widths() == std::vector<std::size_t>{300, 150, 75, 37});
  const ModelParams p = init_params(c, 0);
  CHECK(p.named().size() == 4 * 8 + 2);
  CHECK(p.named().front().first == "block0.conv.kernel");
  CHECK(p.named().back().first == "head.b");
  CHECK(p.head_w.shape() == Shape{1, 128});
  CHECK(p.blocks[3].conv_kernel.shape() == Shape{128, 64, 7});
  CHECK(p.blocks[1].cam.w1.shape() == Shape{4, 32});
  CHECK(p.blocks[0].sam.kernel.shape() == Shape{1, 2, 7});
}

TEST_CASE("invalid configurations") {
  ModelConfig c;
  c.reductions = {4, 8, 8};
  CHECK_THROWS_AS(c.validate(), InvalidSpec);
  c = ModelConfig{};
  c.reductions[0] = 5;
  CHECK_THROWS_AS(c.validate(), InvalidSpec);
  c = ModelConfig{};
  c.width = 10;
  CHECK_THROWS_AS(c.validate(), InvalidSpec);
  c = ModelConfig{};
  c.kernel = 6;
  CHECK_THROWS_AS(c.validate(), InvalidSpec);
}

TEST_CASE("config json round-trip") {
  ModelConfig c = ModelConfig::tiny();
  c.cam_variant = CamVariant::StandardCbam;
  const nlohmann::json j = c;
  const ModelConfig back = j.get<ModelConfig>();
  CHECK(back.channels == c.channels);
  CHECK(back.reductions == c.reductions);
  CHECK(back.width == c.width);
  CHECK(back.cam_variant == CamVariant::StandardCbam);
  CHECK(cam_variant_from_string("paper-eq2") == CamVariant::PaperEq2);
  CHECK_THROWS_AS(cam_variant_from_string("other"), InvalidSpec);
}

TEST_CASE("initialization is deterministic in the seed") {
  const ModelConfig c = ModelConfig::tiny();
  CHECK(init_params(c, 3).values_equal(init_params(c, 3)));
  CHECK_FALSE(init_params(c, 3).values_equal(init_params(c, 4)));
  const ModelParams p = init_params(c, 3);
  for (double b : p.blocks[0].conv_bias.data()) CHECK(b == 0.0);
  // Glorot bound for the first conv: sqrt(6 / (fan_in + fan_out)) with fan = channels * kernel.
  const double bound = std::sqrt(6.0 / (1 * 7 + 4 * 7));
  for (double w : p.blocks[0].conv_kernel.data()) CHECK(std::abs(w) <= bound);
}

TEST_CASE("attention output ranges") {
  const ModelParams p = perturbed(ModelConfig::tiny(), 1);
  const Tensor x = random_tensor({3, 4, 20}, 2, 0.0, false);
  NoGradGuard off;
  const Tensor a = cam_attention(x, p.blocks[0].cam, CamVariant::PaperEq2);
  CHECK(a.shape() == Shape{3, 4});
  for (double v : a.data()) CHECK((v > 0.0 && v < 2.0));
  const Tensor s = cam_attention(x, p.blocks[0].cam, CamVariant::StandardCbam);
  for (double v : s.data()) CHECK((v > 0.0 && v < 1.0));
  const Tensor m = sam_attention(x, p.blocks[0].sam);
  CHECK(m.shape() == Shape{3, 1, 20});
  for (double v : m.data()) CHECK((v > 0.0 && v < 1.0));
  CHECK(cbam_forward(x, p.blocks[0].cam, p.blocks[0].sam, CamVariant::PaperEq2).shape() == x.shape());
}

TEST_CASE("gradient checks: attention modules") {
  for (CamVariant v : {CamVariant::PaperEq2, CamVariant::StandardCbam}) {
    const ModelParams p = perturbed(ModelConfig::tiny(), 5);
    Tensor x = random_tensor({2, 4, 12}, 6);
    const CamParams& c = p.blocks[0].cam;
    const SamParams& s = p.blocks[0].sam;
    const auto cam = grad_check([&] { return cam_attention(x, c, v); },
                                {{"x", x}, {"w1", c.w1}, {"b1", c.b1}, {"w2", c.w2}, {"b2", c.b2}});
    CHECK(cam.max_rel_error < 1e-5);
    const auto sam = grad_check([&] { return sam_attention(x, s); }, {{"x", x}, {"k", s.kernel}, {"b", s.bias}});
    CHECK(sam.max_rel_error < 1e-5);
    const auto both = grad_check([&] { return cbam_forward(x, c, s, v); },
                                 {{"x", x}, {"w1", c.w1}, {"w2", c.w2}, {"k", s.kernel}});
    CHECK(both.max_rel_error < 1e-5);
  }
}

TEST_CASE("gradient check: tiny full model") {
  const ModelParams p = perturbed(ModelConfig::tiny(), 7);
  Tensor x = random_tensor({3, 1, 40}, 8);
  const std::vector<double> labels{1, 0, 1};
  std::vector<std::pair<std::string, Tensor>> inputs = p.named();
  inputs.emplace_back("input", x);
  const auto r = grad_check([&] { return ops::bce_loss(model_forward(x, p), labels); }, inputs);
  CAPTURE(r.worst_input);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("forward is batch invariant") {
  const ModelParams p = perturbed(ModelConfig::tiny(), 9);
  const Tensor x = random_tensor({5, 1, 40}, 10, 0.0, false);
  NoGradGuard off;
  const Tensor all = model_forward(x, p);
  REQUIRE(all.shape() == Shape{5});
  for (std::size_t i = 0; i < 5; ++i) {
    const Tensor one = Tensor::from({1, 1, 40}, {x.data().begin() + i * 40, x.data().begin() + (i + 1) * 40});
    CHECK(model_forward(one, p).item() == all.data()[i]);
  }
}

TEST_CASE("predict matches forward and chunking does not matter") {
  const ModelParams p = perturbed(ModelConfig::tiny(), 11);
  std::vector<std::vector<double>> windows;
  for (std::uint64_t i = 0; i < 7; ++i) {
    const Tensor t = random_tensor({40}, 20 + i, 0.0, false);
    windows.emplace_back(t.data().begin(), t.data().end());
  }
  const auto a = predict(p, windows, 3);
  const auto b = predict(p, windows, 256);
  CHECK(a == b);
  for (double v : a) CHECK((v > 0.0 && v < 1.0));
  CHECK(Tape::current().size() == 0);
  std::vector<std::vector<double>> wrong{std::vector<double>(39, 0.0)};
  CHECK_THROWS_AS(predict(p, wrong), ShapeMismatch);
}

TEST_CASE("clone and assign_values") {
  ModelParams p = init_params(ModelConfig::tiny(), 1);
  const ModelParams c = p.clone();
  CHECK(c.values_equal(p));
  CHECK_FALSE(c.head_w.same_storage(p.head_w));
  p.head_w.mutable_data()[0] += 1.0;
  CHECK_FALSE(c.values_equal(p));
  p.assign_values(c);
  CHECK(c.values_equal(p));
  CHECK_THROWS_AS(p.assign_values(init_params(ModelConfig{}, 1)), ShapeMismatch);
}

TEST_CASE("checkpoint round-trip is exact") {
  const test::TempDir dir;
  Checkpoint ck;
  ck.params = perturbed(ModelConfig::tiny(), 12);
  ck.standardizer = signal::Standardizer{std::vector<double>(40, 0.25), std::vector<double>(40, 2.0)};
  ck.threshold = 0.4375;
  save_checkpoint(ck, dir.path() / "m.ckpt");
  const Checkpoint back = load_checkpoint(dir.path() / "m.ckpt");
  CHECK(back.params.values_equal(ck.params));
  CHECK(back.params.config.channels == ck.params.config.channels);
  REQUIRE(back.standardizer);
  CHECK(back.standardizer->mean == ck.standardizer->mean);
  CHECK(back.standardizer->std == ck.standardizer->std);
  CHECK(back.threshold == ck.threshold);

  save_checkpoint(ck, dir.path() / "again.ckpt");
  CHECK(test::slurp(dir.path() / "m.ckpt") == test::slurp(dir.path() / "again.ckpt"));

  save_params(ck.params, dir.path() / "p.ckpt");
  CHECK(load_params(dir.path() / "p.ckpt").values_equal(ck.params));
  CHECK_FALSE(load_checkpoint(dir.path() / "p.ckpt").threshold);
}

TEST_CASE("corrupt or truncated checkpoints are rejected") {
  const test::TempDir dir;
  const auto path = dir.path() / "m.ckpt";
  save_params(init_params(ModelConfig::tiny(), 1), path);
  const auto size = std::filesystem::file_size(path);

  test::truncate_file(path, size - 8);
  CHECK_THROWS_AS(load_params(path), FormatError);
  test::truncate_file(path, 12);
  CHECK_THROWS_AS(load_params(path), FormatError);

  save_params(init_params(ModelConfig::tiny(), 1), path);
  test::overwrite_byte(path, 0, 'Z');
  CHECK_THROWS_AS(load_params(path), FormatError);

  save_params(init_params(ModelConfig::tiny(), 1), path);
  test::overwrite_byte(path, 17, '#');  // inside the JSON header
  CHECK_THROWS_AS(load_params(path), FormatError);

  CHECK_THROWS_AS(load_params(dir.path() / "missing.ckpt"), FormatError);
}
