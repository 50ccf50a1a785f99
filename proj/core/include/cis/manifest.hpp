#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cis/image.hpp"

namespace cis {

// One dataset row: file paths are stored relative to the manifest location.
struct ManifestEntry {
  std::string frame;
  std::string flow;
  std::string mask;  // may be empty (no ground truth / prediction-only fields)
  std::uint64_t seed = 0;
  int dt = 0;
  std::string sequence;          // optional grouping key
  std::string soft;              // optional soft-mask path (predictions)
};

struct Manifest {
  std::string dir;  // directory the paths are relative to
  std::vector<ManifestEntry> entries;

  std::string resolve(const std::string& rel) const;
};

// JSON-lines codec: one object per line with fields
// {frame, flow, mask, seed, dt} plus optional {sequence, soft}.
void manifest_write(const std::string& path, const Manifest& manifest);
Manifest manifest_read(const std::string& path);

// fully loaded sample
struct SceneSample {
  Frame frame;
  FlowField flow;
  std::optional<Mask> gt_mask;
  std::uint64_t seed = 0;
  int dt = 0;
  std::string sequence;
};

SceneSample load_sample(const Manifest& manifest, std::size_t index);

}  // namespace cis
