#include "cis/pnm_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "cis/error.hpp"

namespace cis {

namespace {

void write_header(std::ofstream& out, const char* magic, int w, int h) {
  out << magic << "\n" << w << " " << h << "\n255\n";
}

struct PnmHeader {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
};

// header token reader; skips whitespace and '#' comments
PnmHeader read_header(std::ifstream& in, const std::string& path) {
  auto next_token = [&in, &path]() {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {}
        continue;
      }
      if (!std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
        return tok;
      }
    }
    fail("pnm: truncated header in '" + path + "'");
  };
  PnmHeader h;
  h.magic = next_token();
  h.width = std::stoi(next_token());
  h.height = std::stoi(next_token());
  h.maxval = std::stoi(next_token());
  if (h.width <= 0 || h.height <= 0 || h.maxval != 255) {
    fail("pnm: unsupported header in '" + path + "'");
  }
  return h;
}

std::vector<std::uint8_t> read_payload(std::ifstream& in, const std::string& path,
                                       std::size_t n) {
  std::vector<std::uint8_t> data(n);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    fail("pnm: truncated payload in '" + path + "'");
  }
  return data;
}

}  // namespace

void ppm_write(const std::string& path, const Frame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("ppm: cannot open '" + path + "' for writing");
  write_header(out, "P6", frame.width, frame.height);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(frame.width) * 3);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(frame.at(c, y, x), 0.0f, 1.0f);
        row[static_cast<std::size_t>(3 * x + c)] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) fail("ppm: write failed on '" + path + "'");
}

Frame ppm_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("ppm: cannot open '" + path + "'");
  const auto h = read_header(in, path);
  if (h.magic != "P6") fail("ppm: bad magic '" + h.magic + "' in '" + path + "'");
  const auto data = read_payload(in, path, static_cast<std::size_t>(h.width) * h.height * 3);
  Frame f = Frame::zeros(h.width, h.height);
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        f.at(c, y, x) =
            static_cast<float>(data[(static_cast<std::size_t>(y) * h.width + x) * 3 + c]) / 255.0f;
      }
    }
  }
  return f;
}

void pgm_write_mask(const std::string& path, const Mask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("pgm: cannot open '" + path + "' for writing");
  write_header(out, "P5", mask.width, mask.height);
  std::vector<std::uint8_t> data(mask.fg.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = mask.fg[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) fail("pgm: write failed on '" + path + "'");
}

Mask pgm_read_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("pgm: cannot open '" + path + "'");
  const auto h = read_header(in, path);
  if (h.magic != "P5") fail("pgm: bad magic '" + h.magic + "' in '" + path + "'");
  const auto data = read_payload(in, path, static_cast<std::size_t>(h.width) * h.height);
  Mask m = Mask::zeros(h.width, h.height);
  for (std::size_t i = 0; i < data.size(); ++i) m.fg[i] = data[i] >= 128 ? 1 : 0;
  return m;
}

void pgm_write_soft(const std::string& path, const SoftMask& soft) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("pgm: cannot open '" + path + "' for writing");
  write_header(out, "P5", soft.width, soft.height);
  std::vector<std::uint8_t> data(soft.p.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(soft.p[i], 0.0f, 1.0f) * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) fail("pgm: write failed on '" + path + "'");
}

SoftMask pgm_read_soft(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("pgm: cannot open '" + path + "'");
  const auto h = read_header(in, path);
  if (h.magic != "P5") fail("pgm: bad magic '" + h.magic + "' in '" + path + "'");
  const auto data = read_payload(in, path, static_cast<std::size_t>(h.width) * h.height);
  SoftMask s;
  s.width = h.width;
  s.height = h.height;
  s.p.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) s.p[i] = static_cast<float>(data[i]) / 255.0f;
  return s;
}

}  // namespace cis
