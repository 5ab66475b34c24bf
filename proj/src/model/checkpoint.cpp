#include <array>
#include <fstream>
#include <map>

#include "ecgcbam/binary_io.hpp"
#include "ecgcbam/error.hpp"
#include "ecgcbam/model.hpp"

namespace ecgcbam::model {

namespace {
constexpr std::array<char, 8> kMagic = {'E', 'C', 'G', 'C', 'B', 'A', 'M', '1'};
constexpr int kFormatVersion = 1;
constexpr std::uint64_t kMaxHeaderBytes = 16u << 20;
}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::vector<double>>> payloads;
  nlohmann::json directory = nlohmann::json::array();
  std::uint64_t offset = 0;
  auto add = [&](const std::string& name, const Shape& shape, std::span<const double> values) {
    directory.push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
    offset += values.size() * sizeof(double);
    payloads.emplace_back(name, std::vector<double>(values.begin(), values.end()));
  };
  for (const auto& [name, t] : ckpt.params.named()) add(name, t.shape(), t.data());
  if (ckpt.standardizer) {
    add("standardizer.mean", {ckpt.standardizer->mean.size()}, ckpt.standardizer->mean);
    add("standardizer.std", {ckpt.standardizer->std.size()}, ckpt.standardizer->std);
  }

  nlohmann::json header{{"format_version", kFormatVersion},
                        {"config", ckpt.params.config},
                        {"tensors", directory}};
  if (ckpt.threshold) header["threshold"] = *ckpt.threshold;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  io::write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, values] : payloads) io::write_le_array<double>(out, values);
  if (!out) throw FormatError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError("bad checkpoint magic in " + path.string());
  const auto header_len = io::read_le<std::uint64_t>(in);
  if (header_len > kMaxHeaderBytes) throw FormatError("implausible checkpoint header length");
  std::string text(static_cast<std::size_t>(header_len), '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  if (header.value("format_version", -1) != kFormatVersion) throw FormatError("unsupported checkpoint version");

  std::map<std::string, std::vector<double>> tensors;
  std::map<std::string, Shape> shapes;
  std::uint64_t expected_offset = 0;
  try {
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      if (entry.at("offset").get<std::uint64_t>() != expected_offset) throw FormatError("tensor directory out of order");
      std::vector<double> values = io::read_le_array<double>(in, ecgcbam::numel(shape));
      expected_offset += values.size() * sizeof(double);
      shapes[name] = shape;
      tensors[name] = std::move(values);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed tensor directory: ") + e.what());
  }

  Checkpoint ckpt;
  ModelConfig config;
  try {
    config = header.at("config").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model config: ") + e.what());
  }
  ckpt.params = init_params(config, 0);
  for (auto& [name, t] : ckpt.params.named()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint lacks tensor " + name);
    if (shapes[name] != t.shape()) throw FormatError("shape mismatch for " + name);
    std::copy(it->second.begin(), it->second.end(), t.mutable_data().begin());
  }
  if (tensors.count("standardizer.mean") && tensors.count("standardizer.std")) {
    ckpt.standardizer = signal::Standardizer{tensors["standardizer.mean"], tensors["standardizer.std"]};
  }
  if (header.contains("threshold")) ckpt.threshold = header["threshold"].get<double>();
  return ckpt;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  save_checkpoint(Checkpoint{params, std::nullopt, std::nullopt}, path);
}

ModelParams load_params(const std::filesystem::path& path) { return load_checkpoint(path).params; }

}  // namespace ecgcbam::model
