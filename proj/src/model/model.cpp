#include <cmath>
#include <random>

#include "ecgcbam/error.hpp"
#include "ecgcbam/model.hpp"

namespace ecgcbam::model {

using ecgcbam::to_string;

std::string to_string(CamVariant v) {
  return v == CamVariant::PaperEq2 ? "paper-eq2" : "standard-cbam";
}

CamVariant cam_variant_from_string(const std::string& s) {
  if (s == "paper-eq2") return CamVariant::PaperEq2;
  if (s == "standard-cbam") return CamVariant::StandardCbam;
  throw InvalidSpec("unknown channel-attention variant '" + s + "'");
}

void ModelConfig::validate() const {
  if (channels.empty()) throw InvalidSpec("model needs at least one block");
  if (reductions.size() != channels.size()) throw InvalidSpec("one reduction ratio per block required");
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] == 0 || reductions[i] == 0 || channels[i] % reductions[i] != 0) {
      throw InvalidSpec("reduction ratio " + std::to_string(reductions[i]) + " does not divide " +
                        std::to_string(channels[i]) + " channels");
    }
  }
  if (kernel == 0 || kernel % 2 == 0) throw InvalidSpec("conv kernel must be odd for same padding");
  if (sam_kernel == 0 || sam_kernel % 2 == 0) throw InvalidSpec("spatial kernel must be odd");
  if (pool_window == 0 || pool_stride == 0) throw InvalidSpec("pooling window and stride must be positive");
  std::size_t w = width;
  for (std::size_t b = 0; b < channels.size(); ++b) {
    if (w < sam_kernel || w < pool_window) {
      throw InvalidSpec("width " + std::to_string(width) + " collapses before block " + std::to_string(b + 1));
    }
    w = (w - pool_window) / pool_stride + 1;
  }
}

std::vector<std::size_t> ModelConfig::block_widths() const {
  std::vector<std::size_t> out;
  std::size_t w = width;
  for (std::size_t b = 0; b < channels.size(); ++b) {
    w = (w - pool_window) / pool_stride + 1;
    out.push_back(w);
  }
  return out;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.width = 40;
  c.channels = {4, 8};
  c.reductions = {2, 4};
  return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"width", c.width},
                     {"channels", c.channels},
                     {"reductions", c.reductions},
                     {"kernel", c.kernel},
                     {"pool_window", c.pool_window},
                     {"pool_stride", c.pool_stride},
                     {"sam_kernel", c.sam_kernel},
                     {"cam_variant", to_string(c.cam_variant)}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.width = j.value("width", c.width);
  c.channels = j.value("channels", c.channels);
  c.reductions = j.value("reductions", c.reductions);
  c.kernel = j.value("kernel", c.kernel);
  c.pool_window = j.value("pool_window", c.pool_window);
  c.pool_stride = j.value("pool_stride", c.pool_stride);
  c.sam_kernel = j.value("sam_kernel", c.sam_kernel);
  if (j.contains("cam_variant")) c.cam_variant = cam_variant_from_string(j.at("cam_variant").get<std::string>());
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    const BlockParams& bp = blocks[b];
    out.emplace_back(p + "conv.kernel", bp.conv_kernel);
    out.emplace_back(p + "conv.bias", bp.conv_bias);
    out.emplace_back(p + "cam.w1", bp.cam.w1);
    out.emplace_back(p + "cam.b1", bp.cam.b1);
    out.emplace_back(p + "cam.w2", bp.cam.w2);
    out.emplace_back(p + "cam.b2", bp.cam.b2);
    out.emplace_back(p + "sam.kernel", bp.sam.kernel);
    out.emplace_back(p + "sam.bias", bp.sam.bias);
  }
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  return out;
}

std::vector<Tensor> ModelParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : parameters()) n += t.numel();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams out = *this;
  auto copy = [](Tensor& t) {
    const bool rg = t.requires_grad();
    t = t.detach_clone();
    t.set_requires_grad(rg);
  };
  for (BlockParams& b : out.blocks) {
    for (Tensor* t : {&b.conv_kernel, &b.conv_bias, &b.cam.w1, &b.cam.b1, &b.cam.w2, &b.cam.b2,
                      &b.sam.kernel, &b.sam.bias}) {
      copy(*t);
    }
  }
  copy(out.head_w);
  copy(out.head_b);
  return out;
}

void ModelParams::assign_values(const ModelParams& other) {
  auto mine = parameters();
  auto theirs = other.parameters();
  if (mine.size() != theirs.size()) throw ShapeMismatch("parameter sets differ in length");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].shape() != theirs[i].shape()) throw ShapeMismatch("parameter shapes differ");
    auto dst = mine[i].mutable_data();
    const auto src = theirs[i].data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

bool ModelParams::values_equal(const ModelParams& other) const {
  const auto a = named();
  const auto b = other.named();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first || a[i].second.shape() != b[i].second.shape()) return false;
    const auto x = a[i].second.data();
    const auto y = b[i].second.data();
    if (!std::equal(x.begin(), x.end(), y.begin())) return false;
  }
  return true;
}

namespace {

// Uniform in [-limit, limit) from the top 53 bits; avoids the
// implementation-defined std::uniform_real_distribution.
double uniform_symmetric(std::mt19937_64& rng, double limit) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * limit;
}

Tensor glorot(std::mt19937_64& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(ecgcbam::numel(shape));
  for (double& e : v) e = uniform_symmetric(rng, limit);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor zero_bias(std::size_t n) { return Tensor::zeros({n}, true); }

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = config;
  std::size_t c_in = 1;
  for (std::size_t b = 0; b < config.blocks(); ++b) {
    const std::size_t c = config.channels[b];
    const std::size_t hidden = c / config.reductions[b];
    BlockParams bp;
    bp.conv_kernel = glorot(rng, {c, c_in, config.kernel}, c_in * config.kernel, c * config.kernel);
    bp.conv_bias = zero_bias(c);
    bp.cam.w1 = glorot(rng, {hidden, c}, c, hidden);
    bp.cam.b1 = zero_bias(hidden);
    bp.cam.w2 = glorot(rng, {c, hidden}, hidden, c);
    bp.cam.b2 = zero_bias(c);
    bp.sam.kernel = glorot(rng, {1, 2, config.sam_kernel}, 2 * config.sam_kernel, config.sam_kernel);
    bp.sam.bias = zero_bias(1);
    p.blocks.push_back(std::move(bp));
    c_in = c;
  }
  p.head_w = glorot(rng, {1, c_in}, c_in, 1);
  p.head_b = zero_bias(1);
  return p;
}

Tensor cam_attention(const Tensor& x, const CamParams& p, CamVariant variant) {
  if (x.rank() != 3 || p.w1.dim(1) != x.dim(1) || p.w2.dim(0) != x.dim(1)) {
    throw ShapeMismatch("channel attention: features " + to_string(x.shape()) + ", w1 " +
                        to_string(p.w1.shape()));
  }
  auto mlp = [&p](const Tensor& v) { return ops::dense(ops::relu(ops::dense(v, p.w1, p.b1)), p.w2, p.b2); };
  const Tensor avg = mlp(ops::global_avgpool_w(x));
  const Tensor max = mlp(ops::global_maxpool_w(x));
  if (variant == CamVariant::PaperEq2) return ops::add(ops::sigmoid(avg), ops::sigmoid(max));
  return ops::sigmoid(ops::add(avg, max));
}

Tensor sam_attention(const Tensor& x, const SamParams& p) {
  if (x.rank() != 3) throw ShapeMismatch("spatial attention expects [N,C,W], got " + to_string(x.shape()));
  const std::size_t k = p.kernel.dim(2);
  if (x.dim(2) < k) throw ShapeMismatch("spatial attention needs width >= kernel");
  const Tensor pooled = ops::concat_channels(ops::channel_avg(x), ops::channel_max(x));
  return ops::sigmoid(ops::conv1d(pooled, p.kernel, p.bias, 1, k / 2));
}

Tensor cbam_forward(const Tensor& x, const CamParams& cam, const SamParams& sam, CamVariant variant) {
  const Tensor refined = ops::mul_broadcast(x, cam_attention(x, cam, variant));
  return ops::mul_broadcast(refined, sam_attention(refined, sam));
}

Tensor model_forward(const Tensor& batch, const ModelParams& params) {
  const ModelConfig& cfg = params.config;
  if (batch.rank() != 3 || batch.dim(1) != 1 || batch.dim(2) != cfg.width) {
    throw ShapeMismatch("model expects [N,1," + std::to_string(cfg.width) + "], got " +
                        to_string(batch.shape()));
  }
  Tensor h = batch;
  for (const BlockParams& b : params.blocks) {
    h = ops::relu(ops::conv1d(h, b.conv_kernel, b.conv_bias, 1, cfg.kernel / 2));
    h = cbam_forward(h, b.cam, b.sam, cfg.cam_variant);
    h = ops::maxpool1d(h, cfg.pool_window, cfg.pool_stride);
  }
  const Tensor logit = ops::dense(ops::global_avgpool_w(h), params.head_w, params.head_b);
  return ops::reshape(ops::sigmoid(logit), {batch.dim(0)});
}

std::vector<double> predict(const ModelParams& params, std::span<const std::vector<double>> windows,
                            std::size_t chunk) {
  NoGradGuard no_grad;
  const std::size_t w = params.config.width;
  std::vector<double> out;
  out.reserve(windows.size());
  for (std::size_t start = 0; start < windows.size(); start += chunk) {
    const std::size_t n = std::min(chunk, windows.size() - start);
    std::vector<double> flat;
    flat.reserve(n * w);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& v = windows[start + i];
      if (v.size() != w) throw ShapeMismatch("window width " + std::to_string(v.size()) + " != " + std::to_string(w));
      flat.insert(flat.end(), v.begin(), v.end());
    }
    const Tensor p = model_forward(Tensor::from({n, 1, w}, std::move(flat)), params);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return out;
}

}  // namespace ecgcbam::model
