#include "cis/param_store.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "cis/error.hpp"

namespace cis {

namespace {

constexpr char kMagic[4] = {'C', 'I', 'S', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) fail("checkpoint: cannot open '" + path + "' for writing");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) fail("checkpoint: write failed on '" + path_ + "'");
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void record(const std::string& name, const Shape& shape, const float* data, std::size_t n) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u32(static_cast<std::uint32_t>(shape.size()));
    for (int e : shape) u32(static_cast<std::uint32_t>(e));
    bytes(data, n * sizeof(float));
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) fail("checkpoint: cannot open '" + path + "'");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      fail("checkpoint: truncated file '" + path_ + "' at byte offset " +
           std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())));
    }
    offset_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  struct Record {
    std::string name;
    Shape shape;
    std::vector<float> data;
  };
  Record record() {
    Record r;
    const std::uint32_t name_len = u32();
    if (name_len > 4096) fail("checkpoint: implausible name length in '" + path_ + "'");
    r.name.resize(name_len);
    bytes(r.name.data(), name_len);
    const std::uint32_t rank = u32();
    if (rank > 8) fail("checkpoint: implausible rank in '" + path_ + "'");
    r.shape.resize(rank);
    std::int64_t n = 1;
    for (auto& e : r.shape) {
      e = static_cast<int>(u32());
      n *= e;
    }
    r.data.resize(static_cast<std::size_t>(n));
    bytes(r.data.data(), static_cast<std::size_t>(n) * sizeof(float));
    return r;
  }

 private:
  std::ifstream in_;
  std::string path_;
  std::size_t offset_ = 0;
};

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(store.params().size()));
  for (const auto& p : store.params()) {
    w.record(p.name, p.tensor.shape(), p.tensor.values().data(),
             static_cast<std::size_t>(p.tensor.size()));
  }
  // aux section: per-parameter moments, then buffers, all in the record layout
  const std::uint32_t aux = static_cast<std::uint32_t>(2 * store.params().size() +
                                                       store.buffers().size());
  w.u32(aux);
  for (const auto& p : store.params()) {
    std::vector<float> m = p.m, v = p.v;
    m.resize(static_cast<std::size_t>(p.tensor.size()), 0.0f);
    v.resize(static_cast<std::size_t>(p.tensor.size()), 0.0f);
    w.record(p.name + "#m", p.tensor.shape(), m.data(), m.size());
    w.record(p.name + "#v", p.tensor.shape(), v.data(), v.size());
  }
  for (const auto& b : store.buffers()) {
    w.record("buf:" + b.name, b.tensor.shape(), b.tensor.values().data(),
             static_cast<std::size_t>(b.tensor.size()));
  }
  w.u64(store.step());
}

ParamStore load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    fail("checkpoint: bad magic in '" + path + "' at byte offset 0");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    fail("checkpoint: unsupported version " + std::to_string(version) + " in '" + path + "'");
  }
  ParamStore store;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto rec = r.record();
    check_finite<float>(rec.data, "checkpoint");
    auto& t = store.get_or_create(rec.name, rec.shape, [](Rng&) { return 0.0; });
    std::copy(rec.data.begin(), rec.data.end(), t.mutable_values().begin());
  }
  const std::uint32_t aux = r.u32();
  for (std::uint32_t i = 0; i < aux; ++i) {
    auto rec = r.record();
    if (rec.name.rfind("buf:", 0) == 0) {
      auto& b = store.buffer(rec.name.substr(4), rec.shape, 0.0f);
      std::copy(rec.data.begin(), rec.data.end(), b.mutable_values().begin());
    } else if (rec.name.size() > 2 && rec.name[rec.name.size() - 2] == '#') {
      const char kind = rec.name.back();
      const std::string base = rec.name.substr(0, rec.name.size() - 2);
      if (!store.has(base)) fail("checkpoint: moment record for unknown parameter '" + base + "'");
      for (auto& p : store.params()) {
        if (p.name == base) {
          if (kind == 'm') p.m = std::move(rec.data);
          else if (kind == 'v') p.v = std::move(rec.data);
          else fail("checkpoint: unknown moment kind in record '" + rec.name + "'");
          break;
        }
      }
    } else {
      fail("checkpoint: unrecognized aux record '" + rec.name + "'");
    }
  }
  store.set_step(r.u64());
  return store;
}

}  // namespace cis
