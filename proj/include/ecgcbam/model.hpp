#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ecgcbam/signal.hpp"
#include "ecgcbam/tensor.hpp"

namespace ecgcbam::model {

/// How channel attention combines its two pooled descriptors.
///   PaperEq2:     sigmoid(mlp(avg)) + sigmoid(mlp(max)), range (0, 2)
///   StandardCbam: sigmoid(mlp(avg) + mlp(max)),          range (0, 1)
enum class CamVariant { PaperEq2, StandardCbam };

std::string to_string(CamVariant v);
CamVariant cam_variant_from_string(const std::string& s);

struct ModelConfig {
  std::size_t width = 600;
  std::vector<std::size_t> channels{16, 32, 64, 128};
  /// Channel-attention reduction ratio per block; must divide that block's channels.
  std::vector<std::size_t> reductions{4, 8, 8, 8};
  std::size_t kernel = 7;
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;
  std::size_t sam_kernel = 7;
  CamVariant cam_variant = CamVariant::PaperEq2;

  void validate() const;
  std::size_t blocks() const { return channels.size(); }
  /// Feature width after each block's pooling stage.
  std::vector<std::size_t> block_widths() const;

  /// Two blocks, four and eight channels, width 40. Used for gradient checks.
  static ModelConfig tiny();
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct CamParams {
  Tensor w1, b1;  // [C/r, C], [C/r]   ReLU layer
  Tensor w2, b2;  // [C, C/r], [C]     sigmoid layer
};

struct SamParams {
  Tensor kernel;  // [1, 2, 7]
  Tensor bias;    // [1]
};

struct BlockParams {
  Tensor conv_kernel;  // [C_out, C_in, K]
  Tensor conv_bias;    // [C_out]
  CamParams cam;
  SamParams sam;
};

struct ModelParams {
  ModelConfig config;
  std::vector<BlockParams> blocks;
  Tensor head_w;  // [1, C_last]
  Tensor head_b;  // [1]

  /// Every learnable tensor with a stable dotted name, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  /// Deep copy with fresh storage.
  ModelParams clone() const;
  /// Overwrites values (not grads) from another set of identical shape.
  void assign_values(const ModelParams& other);
  bool values_equal(const ModelParams& other) const;
};

/// Glorot-uniform weights, zero biases, deterministic in seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Channel attention weights a[N,C].
Tensor cam_attention(const Tensor& x, const CamParams& p, CamVariant variant);
/// Spatial attention map m[N,1,W].
Tensor sam_attention(const Tensor& x, const SamParams& p);
/// Channel attention, then spatial attention; output has the input's shape.
Tensor cbam_forward(const Tensor& x, const CamParams& cam, const SamParams& sam, CamVariant variant);

/// batch[N,1,W] -> probabilities [N].
Tensor model_forward(const Tensor& batch, const ModelParams& params);

/// Gradient-free inference over a flat list of windows, in chunks.
std::vector<double> predict(const ModelParams& params, std::span<const std::vector<double>> windows,
                            std::size_t chunk = 256);

// --- checkpoints -----------------------------------------------------------------

/// Everything persisted next to the weights.
struct Checkpoint {
  ModelParams params;
  std::optional<signal::Standardizer> standardizer;
  std::optional<double> threshold;
};

/// 8-byte magic "ECGCBAM1", uint64 header length, JSON header (config and a
/// tensor directory of names, shapes and byte offsets), then little-endian
/// float64 payloads in directory order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace ecgcbam::model
