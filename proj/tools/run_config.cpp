#include "run_config.hpp"

#include <fstream>

#include "ecgcbam/error.hpp"
#include "ecgcbam/seed.hpp"

namespace ecgcbam::cli {

void RunConfig::fan_out_seeds() {
  synth.seed = derive_seed(seed, "synth");
  experiment.seed = derive_seed(seed, "experiment");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = c.experiment;
  j["seed"] = c.seed;
  j["synth"] = c.synth;
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  j.get_to(c.experiment);
  c.seed = j.value("seed", c.seed);
  if (j.contains("synth")) j.at("synth").get_to(c.synth);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return read_json(path).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("write failed for " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace ecgcbam::cli
