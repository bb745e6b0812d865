#include "sttrack/numerics/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sttrack/numerics/random.hpp"

namespace sttrack::num {

namespace {

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xffU);
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw FormatError("checkpoint: truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

Tensor& ParameterSet::uniform(const std::string& name, Shape shape, std::size_t fan_in) {
  Rng rng(derive_seed(seed_, name));
  const double s = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<double> values(numel_of(shape));
  for (auto& v : values) v = rng.uniform(-s, s);
  return insert(name, Tensor::from(std::move(shape), std::move(values)));
}

Tensor& ParameterSet::constant(const std::string& name, Shape shape, double value) {
  return insert(name, Tensor::full(std::move(shape), value));
}

Tensor& ParameterSet::insert(const std::string& name, Tensor value) {
  if (entries_.count(name)) throw ConfigError("parameter '" + name + "' already exists");
  value.set_requires_grad(true);
  return entries_.emplace(name, std::move(value)).first->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

ParameterSet ParameterSet::deep_copy() const {
  ParameterSet out(seed_);
  for (const auto& [name, t] : entries_) out.insert(name, t.detach());
  return out;
}

void write_checkpoint(std::ostream& os, const ParameterSet& params) {
  os.write("STTK", 4);
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (name.size() > 0xffff) throw FormatError("checkpoint: name too long");
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    if (t.rank() > 0xff) throw FormatError("checkpoint: rank too large");
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    for (double v : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw FormatError("checkpoint: write failed");
}

ParameterSet read_checkpoint(std::istream& is, std::uint64_t seed) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "STTK", 4) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(is);
  ParameterSet params(seed);
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = get_le<std::uint16_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("checkpoint: truncated name");
    const auto rank = get_le<std::uint8_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint32_t>(is);
    std::vector<double> values(numel_of(shape));
    for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
    params.insert(name, Tensor::from(std::move(shape), std::move(values)));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("checkpoint: cannot open " + path.string());
  write_checkpoint(os, params);
}

ParameterSet load_checkpoint(const std::filesystem::path& path, std::uint64_t seed) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open " + path.string());
  return read_checkpoint(is, seed);
}

}  // namespace sttrack::num
