#include "ecdepth/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "ecdepth/error.hpp"

namespace ecdepth {

namespace {

constexpr char kMagic[8] = {'E', 'C', 'D', 'P', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

// Fixed little-endian encoding regardless of host order.
void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > buf.size())
      fail(ErrorCategory::format, std::string("checkpoint truncated reading ") + what);
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + static_cast<size_t>(i)]))
           << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + static_cast<size_t>(i)]))
           << (8 * i);
    pos += 8;
    return v;
  }
  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append(kMagic, 8);
  put_u32(out, kVersion);
  std::string cfg = serialize_config(ckpt.config);
  put_u32(out, static_cast<uint32_t>(cfg.size()));
  out += cfg;
  put_u64(out, ckpt.step);
  put_u32(out, static_cast<uint32_t>(ckpt.arrays.size()));
  for (const auto& [name, t] : ckpt.arrays) {  // map order: sorted, deterministic
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    const Shape& s = t.shape();
    if (s.size() > 255) fail(ErrorCategory::format, "checkpoint array rank > 255: " + name);
    out.push_back(static_cast<char>(s.size()));
    for (int d : s) put_u32(out, static_cast<uint32_t>(d));
    for (int64_t i = 0; i < t.size(); ++i) put_f32(out, t[i]);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCategory::io, "cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorCategory::io, "failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCategory::io, "cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string buf = ss.str();

  Reader r{buf};
  std::string magic = r.bytes(8, "magic");
  if (std::memcmp(magic.data(), kMagic, 8) != 0)
    fail(ErrorCategory::format, "not a checkpoint file (bad magic): " + path);
  uint32_t version = r.u32("version");
  if (version != kVersion)
    fail(ErrorCategory::format,
         "unsupported checkpoint version " + std::to_string(version) + ": " + path);

  Checkpoint ckpt;
  uint32_t cfg_len = r.u32("config length");
  ckpt.config = parse_config(r.bytes(cfg_len, "config"));
  ckpt.step = r.u64("step");
  uint32_t count = r.u32("array count");
  for (uint32_t a = 0; a < count; ++a) {
    uint32_t name_len = r.u32("array name length");
    std::string name = r.bytes(name_len, "array name");
    if (name.empty()) fail(ErrorCategory::format, "checkpoint array with empty name");
    uint8_t rank = r.u8("array rank");
    Shape shape;
    int64_t n = 1;
    for (int i = 0; i < rank; ++i) {
      uint32_t d = r.u32("array dim");
      if (d == 0 || d > (1u << 28)) fail(ErrorCategory::format, "bad dimension in array " + name);
      shape.push_back(static_cast<int>(d));
      n *= d;
    }
    if (n > (int64_t{1} << 31)) fail(ErrorCategory::format, "oversized array " + name);
    Tensor<float> t(shape);
    std::string raw = r.bytes(static_cast<size_t>(n) * 4, "array data");
    for (int64_t i = 0; i < n; ++i) {
      uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<uint32_t>(
                    static_cast<uint8_t>(raw[static_cast<size_t>(i) * 4 + static_cast<size_t>(b)]))
                << (8 * b);
      float v;
      std::memcpy(&v, &bits, 4);
      t[i] = v;
    }
    if (!ckpt.arrays.emplace(name, std::move(t)).second)
      fail(ErrorCategory::format, "duplicate checkpoint array " + name);
  }
  if (r.pos != buf.size())
    fail(ErrorCategory::format, "trailing data after checkpoint arrays: " + path);
  return ckpt;
}

std::string describe_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream out;
  out << "step " << ckpt.step << "\n";
  out << "arrays " << ckpt.arrays.size() << "\n";
  std::istringstream cfg(serialize_config(ckpt.config));
  std::string line;
  while (std::getline(cfg, line)) out << "config." << line << "\n";
  for (const auto& [name, t] : ckpt.arrays)
    out << name << " " << shape_str(t.shape()) << " " << t.size() * 4 << " bytes\n";
  return out.str();
}

}  // namespace ecdepth
