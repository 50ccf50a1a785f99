#include "cis/flo_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "cis/error.hpp"

namespace cis {

namespace {
constexpr float kFloMagic = 202021.25f;
}

void flo_write(const std::string& path, const FlowField& flow) {
  for (float v : flow.uv) {
    if (!std::isfinite(v)) fail("flo: refusing to write non-finite flow to '" + path + "'");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("flo: cannot open '" + path + "' for writing");
  const std::int32_t w = flow.width, h = flow.height;
  out.write(reinterpret_cast<const char*>(&kFloMagic), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  // planar storage -> interleaved pairs
  std::vector<float> row(static_cast<std::size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      row[static_cast<std::size_t>(2 * x)] = flow.u(y, x);
      row[static_cast<std::size_t>(2 * x + 1)] = flow.v(y, x);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) fail("flo: write failed on '" + path + "'");
}

FlowField flo_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("flo: cannot open '" + path + "'");
  float magic = 0.0f;
  std::int32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  if (in.gcount() != 4) fail("flo: truncated header in '" + path + "' at byte offset 0");
  if (magic != kFloMagic) {
    fail("flo: bad magic in '" + path + "' at byte offset 0 (got " + std::to_string(magic) + ")");
  }
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in || w <= 0 || h <= 0 || w > 1 << 20 || h > 1 << 20) {
    fail("flo: bad extents in '" + path + "' at byte offset 4");
  }
  FlowField flow = FlowField::zeros(w, h);
  std::vector<float> row(static_cast<std::size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != row.size() * sizeof(float)) {
      const std::size_t offset = 12 + (static_cast<std::size_t>(y) * w * 2) * sizeof(float) +
                                 static_cast<std::size_t>(in.gcount());
      fail("flo: truncated payload in '" + path + "' at byte offset " + std::to_string(offset));
    }
    for (int x = 0; x < w; ++x) {
      flow.u(y, x) = row[static_cast<std::size_t>(2 * x)];
      flow.v(y, x) = row[static_cast<std::size_t>(2 * x + 1)];
    }
  }
  return flow;
}

}  // namespace cis
