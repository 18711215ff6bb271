#include "mbd/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace mbd {

namespace {

constexpr char kMagic[4] = {'M', 'B', 'D', '1'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

struct Reader {
  std::ifstream in;
  std::string path;

  void read(void* dst, std::size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
      throw CheckpointError("truncated checkpoint: " + path);
    }
  }
  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  }
  std::uint16_t u16() {
    unsigned char b[2];
    read(b, 2);
    return static_cast<std::uint16_t>(std::uint16_t(b[0]) | std::uint16_t(b[1]) << 8);
  }
  std::uint8_t u8() {
    unsigned char b;
    read(&b, 1);
    return b;
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open for writing: " + path);
  os.write(kMagic, 4);
  put_u32(os, kFormatVersion);
  put_u32(os, static_cast<std::uint32_t>(ck.config_text.size()));
  os.write(ck.config_text.data(), static_cast<std::streamsize>(ck.config_text.size()));
  put_u32(os, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {  // std::map: lexicographic, so byte-stable
    if (name.size() > 0xffff) throw CheckpointError("tensor name too long: " + name);
    put_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put('\0' + 0);  // dtype 0 = f32
    os.put(static_cast<char>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<std::uint32_t>(t.dim(i)));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
  }
  if (!os) throw CheckpointError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r{std::ifstream(path, std::ios::binary), path};
  if (!r.in) throw CheckpointError("cannot open: " + path);

  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("bad magic in checkpoint: " + path);
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  }

  Checkpoint ck;
  const std::uint32_t cfg_len = r.u32();
  ck.config_text.resize(cfg_len);
  if (cfg_len > 0) r.read(ck.config_text.data(), cfg_len);

  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    if (name_len > 0) r.read(name.data(), name_len);
    const std::uint8_t dtype = r.u8();
    if (dtype != 0) throw CheckpointError("unsupported dtype " + std::to_string(dtype) + " for tensor " + name);
    const std::uint8_t rank = r.u8();
    if (rank > 8) throw CheckpointError("implausible rank " + std::to_string(rank) + " for tensor " + name);
    std::vector<int> shape(rank);
    std::int64_t numel = 1;
    for (auto& d : shape) {
      const std::uint32_t v = r.u32();
      if (v == 0 || v > (1u << 24)) throw CheckpointError("implausible dim " + std::to_string(v) + " for tensor " + name);
      d = static_cast<int>(v);
      numel *= d;
    }
    Tensor t(shape);
    r.read(t.data(), static_cast<std::size_t>(numel) * 4);
    if (!ck.tensors.emplace(name, std::move(t)).second) {
      throw CheckpointError("duplicate tensor name: " + name);
    }
  }
  return ck;
}

Params extract_params(const Checkpoint& ck, const NetConfig& cfg) {
  const auto shapes = param_shapes(cfg);
  Params params;
  for (const auto& [name, t] : ck.tensors) {
    if (name.rfind("adam.", 0) == 0) continue;  // optimizer slots live alongside params
    auto it = shapes.find(name);
    if (it == shapes.end()) throw CheckpointError("unknown tensor name: " + name);
    if (t.shape() != it->second) {
      throw CheckpointError("shape mismatch for " + name + ": checkpoint has " + shape_str(t.shape()) +
                            ", config wants " + shape_str(it->second));
    }
    params.emplace(name, t);
  }
  for (const auto& [name, shape] : shapes) {
    if (!params.count(name)) throw CheckpointError("missing parameter: " + name);
  }
  return params;
}

}  // namespace mbd
