#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "dfres/errors.hpp"
#include "dfres/model.hpp"

namespace fs = std::filesystem;

namespace dfres {

static_assert(std::endian::native == std::endian::little, "weight I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'D', 'F', 'R', 'S'};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

class Reader {
 public:
  Reader(std::istream& in, const fs::path& path) : in_(in), path_(path) {}

  void bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(path_.string() + ": truncated weight file");
    }
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
  std::string text(std::size_t n) {
    // Bound text fields so a corrupted length cannot trigger a huge allocation.
    if (n > (1u << 24)) throw FormatError(path_.string() + ": implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
  const fs::path& path_;
};

struct RawTensor {
  Shape shape;
  std::vector<float> values;
};

struct RawFile {
  std::map<std::string, RawTensor> tensors;
  std::string config_text;
};

RawFile read_raw(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  Reader r(in, path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path.string() + ": bad magic, not a DFRS weight file");
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) {
    throw FormatError(path.string() + ": unsupported format version " + std::to_string(version));
  }
  RawFile file;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.text(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError(path.string() + ": bad rank for " + name);
    RawTensor t;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u32());
      numel *= t.shape.back();
    }
    if (numel == 0 || numel > (std::size_t{1} << 32)) {
      throw FormatError(path.string() + ": bad extents for " + name);
    }
    t.values.resize(numel);
    r.bytes(t.values.data(), numel * sizeof(float));
    if (!file.tensors.emplace(name, std::move(t)).second) {
      throw FormatError(path.string() + ": duplicate tensor " + name);
    }
  }
  file.config_text = r.text(r.u64());
  return file;
}

}  // namespace

void save_weights(const ModelWeights<float>& weights, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out.write(kMagic, 4);
  put_u32(out, kWeightFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(weights.params().size()));
  for (const auto& [name, t] : weights.params()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (const auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  const std::string cfg = weights.config().serialize();
  put_u64(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  if (!out) throw FormatError(path.string() + ": write failed");
}

namespace {

ModelWeights<float> bind_raw(const RawFile& raw, const fs::path& path,
                             const NetworkConfig& expected) {
  ModelWeights<float> weights(expected);
  for (const auto& [name, t] : raw.tensors) {
    if (!weights.params().count(name)) {
      throw FormatError(path.string() + ": unknown tensor '" + name + "' for this configuration");
    }
  }
  for (auto& [name, t] : weights.params()) {
    auto it = raw.tensors.find(name);
    if (it == raw.tensors.end()) throw FormatError(path.string() + ": missing tensor '" + name + "'");
    if (it->second.shape != t.shape()) {
      throw FormatError(path.string() + ": tensor '" + name + "' has shape " +
                        shape_str(it->second.shape) + ", expected " + shape_str(t.shape()));
    }
    std::copy(it->second.values.begin(), it->second.values.end(), t.mutable_data().begin());
  }
  return weights;
}

}  // namespace

ModelWeights<float> load_weights(const fs::path& path, const NetworkConfig& expected) {
  return bind_raw(read_raw(path), path, expected);
}

ModelWeights<float> load_weights(const fs::path& path) {
  const RawFile raw = read_raw(path);
  NetworkConfig cfg;
  try {
    cfg = NetworkConfig::parse(raw.config_text);
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": bad embedded config: " + e.what());
  }
  return bind_raw(raw, path, cfg);
}

}  // namespace dfres
