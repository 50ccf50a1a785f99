#include "cis/manifest.hpp"

#include <filesystem>
#include <fstream>

#include "cis/error.hpp"
#include "cis/flo_io.hpp"
#include "cis/pnm_io.hpp"
#include "json.hpp"

namespace cis {

namespace fs = std::filesystem;
using nlohmann::json;

std::string Manifest::resolve(const std::string& rel) const {
  if (rel.empty()) return rel;
  fs::path p(rel);
  if (p.is_absolute()) return rel;
  return (fs::path(dir) / p).string();
}

void manifest_write(const std::string& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) fail("manifest: cannot open '" + path + "' for writing");
  for (const auto& e : manifest.entries) {
    json j;
    j["frame"] = e.frame;
    j["flow"] = e.flow;
    j["mask"] = e.mask;
    j["seed"] = e.seed;
    j["dt"] = e.dt;
    if (!e.sequence.empty()) j["sequence"] = e.sequence;
    if (!e.soft.empty()) j["soft"] = e.soft;
    out << j.dump() << "\n";
  }
  if (!out) fail("manifest: write failed on '" + path + "'");
}

Manifest manifest_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("manifest: cannot open '" + path + "'");
  Manifest m;
  m.dir = fs::path(path).parent_path().string();
  if (m.dir.empty()) m.dir = ".";
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail("manifest: parse error in '" + path + "' line " + std::to_string(lineno) + ": " +
           e.what());
    }
    ManifestEntry e;
    e.frame = j.value("frame", "");
    e.flow = j.value("flow", "");
    e.mask = j.value("mask", "");
    e.seed = j.value("seed", std::uint64_t{0});
    e.dt = j.value("dt", 0);
    e.sequence = j.value("sequence", "");
    e.soft = j.value("soft", "");
    m.entries.push_back(std::move(e));
  }
  return m;
}

SceneSample load_sample(const Manifest& manifest, std::size_t index) {
  if (index >= manifest.entries.size()) {
    fail("manifest: sample index " + std::to_string(index) + " out of range");
  }
  const auto& e = manifest.entries[index];
  std::string missing;
  for (const auto& rel : {e.frame, e.flow}) {
    if (!rel.empty() && !fs::exists(manifest.resolve(rel))) {
      missing += (missing.empty() ? "" : ", ") + manifest.resolve(rel);
    }
  }
  if (!e.mask.empty() && !fs::exists(manifest.resolve(e.mask))) {
    missing += (missing.empty() ? "" : ", ") + manifest.resolve(e.mask);
  }
  if (!missing.empty()) fail("manifest: missing files: " + missing);

  SceneSample s;
  s.frame = ppm_read(manifest.resolve(e.frame));
  s.flow = flo_read(manifest.resolve(e.flow));
  if (!e.mask.empty()) s.gt_mask = pgm_read_mask(manifest.resolve(e.mask));
  s.seed = e.seed;
  s.dt = e.dt;
  s.sequence = e.sequence;
  return s;
}

}  // namespace cis
