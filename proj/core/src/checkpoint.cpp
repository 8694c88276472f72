#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "mtseg/error.hpp"
#include "mtseg/segmenter.hpp"

namespace mtseg {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'S', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}

  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    le(bits, 8);
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

 private:
  void le(std::uint64_t v, int n) {
    char b[8];
    for (int i = 0; i < n; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(b, n);
  }
  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(std::ifstream& in) : in_(in) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() {
    const std::uint64_t bits = le(8);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  void bytes(void* p, std::size_t n) {
    if (!in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n)))
      throw Error(ErrorCode::MalformedHeader, "checkpoint truncated");
  }

 private:
  std::uint64_t le(int n) {
    unsigned char b[8];
    bytes(b, static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::ifstream& in_;
};

}  // namespace

void save_checkpoint(const ToyUNet& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  Writer w(out);
  const auto& cfg = model.config();
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(cfg.in_channels));
  w.u32(static_cast<std::uint32_t>(cfg.levels));
  for (std::size_t width : cfg.widths) w.u32(static_cast<std::uint32_t>(width));
  for (std::size_t p : cfg.patch_size) w.u32(static_cast<std::uint32_t>(p));
  w.u64(cfg.seed);
  const auto& params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& t : params) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.values) w.f64(v);
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

ToyUNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  Reader r(in);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw Error(ErrorCode::MalformedHeader, "not a checkpoint: " + path.string());
  if (r.u32() != kVersion) throw Error(ErrorCode::MalformedHeader, "unsupported checkpoint version");

  SegmenterConfig cfg;
  cfg.in_channels = r.u32();
  cfg.levels = r.u32();
  if (cfg.levels == 0 || cfg.levels > 8) throw Error(ErrorCode::MalformedHeader, "implausible level count");
  cfg.widths.resize(cfg.levels);
  for (auto& width : cfg.widths) width = r.u32();
  for (auto& p : cfg.patch_size) p = r.u32();
  cfg.seed = r.u64();

  const std::uint32_t count = r.u32();
  if (count > 1024) throw Error(ErrorCode::MalformedHeader, "implausible tensor count");
  std::vector<ParamTensor> params(count);
  for (auto& t : params) {
    const std::uint32_t len = r.u32();
    if (len > 256) throw Error(ErrorCode::MalformedHeader, "implausible tensor name");
    t.name.resize(len);
    r.bytes(t.name.data(), len);
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw Error(ErrorCode::MalformedHeader, "implausible tensor rank");
    std::size_t total = 1;
    t.shape.resize(ndim);
    for (auto& d : t.shape) {
      d = r.u32();
      total *= d;
    }
    if (total > (std::size_t{1} << 28)) throw Error(ErrorCode::MalformedHeader, "implausible tensor size");
    t.values.resize(total);
    for (double& v : t.values) v = r.f64();
  }
  try {
    return ToyUNet(cfg, std::move(params));
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("checkpoint does not match its config: ") + e.what());
  }
}

}  // namespace mtseg
