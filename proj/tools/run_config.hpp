#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "ecgcbam/cohort.hpp"
#include "ecgcbam/experiment.hpp"

namespace ecgcbam::cli {

/// Everything a command needs, loaded from one JSON file and then patched by
/// flags. A copy is echoed into every run directory.
struct RunConfig {
  std::uint64_t seed = 0;
  cohort::SynthSpec synth;
  experiment::GapConfig experiment;  // preprocess, model, train, splits, eval policy

  /// Module seeds derived from the global seed.
  void fan_out_seeds();
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);

/// Pretty JSON with a trailing newline; throws FormatError on I/O failure.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace ecgcbam::cli
