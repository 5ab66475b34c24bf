#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "ecgcbam/binary_io.hpp"
#include "ecgcbam/error.hpp"
#include "ecgcbam/signal.hpp"

namespace ecgcbam::signal {

namespace {
constexpr std::array<char, 8> kRecordingMagic = {'E', 'C', 'G', 'R', 'E', 'C', '0', '1'};
constexpr std::array<char, 8> kSegmentMagic = {'E', 'C', 'G', 'S', 'E', 'G', '0', '1'};
constexpr std::uint32_t kRecordingVersion = 1;
}  // namespace

void write_recording_file(const std::filesystem::path& path, double fs,
                          std::span<const double> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(kRecordingMagic.data(), kRecordingMagic.size());
  io::write_le<std::uint32_t>(out, kRecordingVersion);
  io::write_le<std::uint32_t>(out, 0);
  io::write_le<double>(out, fs);
  io::write_le<std::uint64_t>(out, samples.size());
  io::write_le_array(out, samples);
  if (!out) throw FormatError("write failed for " + path.string());
}

EcgRecording read_recording_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kRecordingMagic) throw FormatError("bad recording magic in " + path.string());
  const auto version = io::read_le<std::uint32_t>(in);
  if (version != kRecordingVersion) throw FormatError("unsupported recording version");
  io::read_le<std::uint32_t>(in);
  EcgRecording rec;
  rec.fs = io::read_le<double>(in);
  const auto count = io::read_le<std::uint64_t>(in);
  rec.samples = io::read_le_array<double>(in, count);
  rec.validate();
  return rec;
}

std::uint64_t subject_hash(std::string_view subject_id) {
  std::uint64_t h = 14695981039346656037ull;  // FNV-1a
  for (const unsigned char c : subject_id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void write_segment_cache(const std::filesystem::path& path, std::span<const Segment> segs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  const std::uint64_t w = segs.empty() ? 0 : segs.front().values.size();
  out.write(kSegmentMagic.data(), kSegmentMagic.size());
  io::write_le<std::uint64_t>(out, w);
  io::write_le<std::uint64_t>(out, segs.size());
  for (const Segment& s : segs) {
    if (s.values.size() != w) throw ShapeMismatch("segment cache requires a uniform width");
    io::write_le<std::uint64_t>(out, subject_hash(s.subject_id));
    io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.label));
    io::write_le_array<double>(out, s.values);
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

std::vector<CachedSegment> read_segment_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kSegmentMagic) throw FormatError("bad segment cache magic in " + path.string());
  const auto w = io::read_le<std::uint64_t>(in);
  const auto count = io::read_le<std::uint64_t>(in);
  std::vector<CachedSegment> segs;
  segs.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    CachedSegment s;
    s.subject_hash = io::read_le<std::uint64_t>(in);
    s.label = io::read_le<std::uint8_t>(in);
    s.values = io::read_le_array<double>(in, w);
    segs.push_back(std::move(s));
  }
  return segs;
}

}  // namespace ecgcbam::signal
