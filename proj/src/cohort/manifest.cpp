#include <algorithm>
#include <fstream>
#include <set>

#include "ecgcbam/cohort.hpp"
#include "ecgcbam/error.hpp"

namespace ecgcbam::cohort {

int label_from_glucose(double glucose_mgdl) { return glucose_mgdl > kHyperglycemiaMgdl ? 1 : 0; }

int label(const signal::EcgRecording& rec) {
  if (!rec.glucose_mgdl) throw InvalidSpec("recording " + rec.subject_id + " has no glucose value");
  return label_from_glucose(*rec.glucose_mgdl);
}

void CohortManifest::validate() const {
  std::set<std::pair<std::string, int>> seen;
  for (const ManifestEntry& e : records) {
    if (!seen.emplace(e.subject_id, e.session_id).second) {
      throw InvalidSpec("duplicate recording for subject " + e.subject_id + " session " +
                        std::to_string(e.session_id));
    }
    if (!(e.glucose_mgdl > 0)) throw InvalidSpec("non-positive glucose for subject " + e.subject_id);
  }
}

std::vector<std::string> CohortManifest::subjects() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const ManifestEntry& e : records) {
    if (seen.insert(e.subject_id).second) out.push_back(e.subject_id);
  }
  return out;
}

CohortManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  CohortManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.subject_id = j.at("subject_id").get<std::string>();
      e.session_id = j.at("session_id").get<int>();
      e.path = j.at("path").get<std::string>();
      e.glucose_mgdl = j.at("glucose_mgdl").get<double>();
      m.records.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (m.records.empty()) throw EmptyManifest("manifest " + path.string() + " lists no recordings");
  m.validate();
  return m;
}

void write_manifest(const CohortManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (const ManifestEntry& e : manifest.records) {
    const nlohmann::json j{{"subject_id", e.subject_id},
                           {"session_id", e.session_id},
                           {"path", e.path},
                           {"glucose_mgdl", e.glucose_mgdl}};
    out << j.dump() << '\n';
  }
}

signal::EcgRecording load_recording(const ManifestEntry& entry, const std::filesystem::path& manifest_dir) {
  signal::EcgRecording rec = signal::read_recording_file(manifest_dir / entry.path);
  rec.subject_id = entry.subject_id;
  rec.session_id = entry.session_id;
  rec.glucose_mgdl = entry.glucose_mgdl;
  rec.validate();
  return rec;
}

}  // namespace ecgcbam::cohort
