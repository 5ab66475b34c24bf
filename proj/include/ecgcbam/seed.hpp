#pragma once

#include <cstdint>
#include <string_view>

namespace ecgcbam {

/// Fixed derivation of a module seed from the global seed and a purpose tag,
/// so one seed reproduces every random draw in a run.
inline std::uint64_t derive_seed(std::uint64_t global, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::uint64_t z = global ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace ecgcbam
