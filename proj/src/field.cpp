#include "rgbmpc/field.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace rgbmpc {

void HashGridConfig::validate() const {
  if (levels < 1 || levels > 64) throw InputError("hash grid needs 1..64 levels");
  if (base_resolution < 2) throw InputError("hash grid base resolution must be >= 2");
  if (!(growth > 1.0)) throw InputError("hash grid growth factor must exceed 1");
  if (features < 1 || features > 16) throw InputError("hash grid features per level must be 1..16");
  if (table_size == 0 || (table_size & (table_size - 1)) != 0) throw InputError("hash table size must be a power of two");
  if (!(bounds.volume() > 0)) throw InputError("hash grid domain has non-positive volume");
}

void FieldConfig::validate() const {
  grid.validate();
  if (density_hidden < 1 || geometry_features < 1 || color_hidden < 1 || color_layers < 1) {
    throw InputError("field network sizes must be positive");
  }
}

ParamLayout ParamLayout::from(const FieldConfig& c) {
  c.validate();
  ParamLayout l;
  std::size_t off = 0;
  l.hash_offset = off;
  l.hash_size = std::size_t(c.grid.levels) * c.grid.table_size * c.grid.features;
  off += l.hash_size;
  auto add = [&](std::vector<LayerSpec>& v, int in, int out) {
    LayerSpec s{in, out, off, 0};
    off += std::size_t(in) * out;
    s.bias = off;
    off += out;
    v.push_back(s);
  };
  add(l.density, c.grid.output_dim(), c.density_hidden);
  add(l.density, c.density_hidden, 1 + c.geometry_features);
  add(l.color, c.geometry_features + FieldConfig::kDirDim, c.color_hidden);
  for (int i = 1; i < c.color_layers; ++i) add(l.color, c.color_hidden, c.color_hidden);
  add(l.color, c.color_hidden, 3);
  l.total = off;
  return l;
}

std::pair<std::size_t, std::size_t> ParamLayout::group_range(ParamGroup g) const {
  switch (g) {
    case ParamGroup::HashGrid: return {hash_offset, hash_offset + hash_size};
    case ParamGroup::DensityHead: return {density.front().weight, density.back().bias + density.back().out};
    case ParamGroup::ColorHead: return {color.front().weight, color.back().bias + color.back().out};
  }
  return {0, 0};
}

ParamGroup ParamLayout::group_of(std::size_t index) const {
  if (index < hash_offset + hash_size) return ParamGroup::HashGrid;
  if (index < color.front().weight) return ParamGroup::DensityHead;
  return ParamGroup::ColorHead;
}

// ---------------------------------------------------------------------------
// checkpoint

namespace {
constexpr char kMagic[4] = {'R', 'G', 'B', 'F'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  std::vector<unsigned char> bytes;
  template <typename T>
  void put(T v) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes.insert(bytes.end(), buf, buf + sizeof(T));
  }
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& b, std::string src) : bytes_(b), src_(std::move(src)) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw InputError("truncated checkpoint " + src_);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const unsigned char* cursor() const { return bytes_.data() + pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::string src_;
  std::size_t pos_ = 0;
};
}  // namespace

std::vector<unsigned char> checkpoint_bytes(const FieldParams<float>& params) {
  Writer w;
  for (char c : kMagic) w.put(c);
  w.put(kVersion);
  const auto& c = params.config;
  w.put<std::uint32_t>(c.grid.levels);
  w.put<std::uint32_t>(c.grid.base_resolution);
  w.put<double>(c.grid.growth);
  w.put<std::uint32_t>(c.grid.features);
  w.put<std::uint32_t>(c.grid.table_size);
  for (int a = 0; a < 3; ++a) w.put<double>(c.grid.bounds.lo[a]);
  for (int a = 0; a < 3; ++a) w.put<double>(c.grid.bounds.hi[a]);
  w.put<std::uint32_t>(c.density_hidden);
  w.put<std::uint32_t>(c.geometry_features);
  w.put<std::uint32_t>(c.color_hidden);
  w.put<std::uint32_t>(c.color_layers);
  w.put<std::uint64_t>(params.values.size());
  const auto* raw = reinterpret_cast<const unsigned char*>(params.values.data());
  w.bytes.insert(w.bytes.end(), raw, raw + sizeof(float) * params.values.size());
  return w.bytes;
}

FieldParams<float> checkpoint_from_bytes(const std::vector<unsigned char>& bytes, const std::string& source) {
  Reader r(bytes, source);
  for (char c : kMagic) {
    if (r.get<char>() != c) throw InputError("not a field checkpoint (bad magic): " + source);
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw InputError("unsupported checkpoint version " + std::to_string(version) + ": " + source);
  FieldConfig c;
  c.grid.levels = static_cast<int>(r.get<std::uint32_t>());
  c.grid.base_resolution = static_cast<int>(r.get<std::uint32_t>());
  c.grid.growth = r.get<double>();
  c.grid.features = static_cast<int>(r.get<std::uint32_t>());
  c.grid.table_size = r.get<std::uint32_t>();
  for (int a = 0; a < 3; ++a) c.grid.bounds.lo[a] = r.get<double>();
  for (int a = 0; a < 3; ++a) c.grid.bounds.hi[a] = r.get<double>();
  c.density_hidden = static_cast<int>(r.get<std::uint32_t>());
  c.geometry_features = static_cast<int>(r.get<std::uint32_t>());
  c.color_hidden = static_cast<int>(r.get<std::uint32_t>());
  c.color_layers = static_cast<int>(r.get<std::uint32_t>());
  const auto count = r.get<std::uint64_t>();
  FieldParams<float> p(c);
  if (count != p.size() || r.remaining() != sizeof(float) * count) {
    throw InputError("checkpoint parameter block has the wrong size: " + source);
  }
  std::memcpy(p.values.data(), r.cursor(), sizeof(float) * count);
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const FieldParams<float>& params) {
  const auto bytes = checkpoint_bytes(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

FieldParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes, path.string());
}

}  // namespace rgbmpc
