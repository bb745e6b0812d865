#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "sttrack/numerics/tensor.hpp"

namespace sttrack::num {

// Named trainable tensors. Iteration order is lexicographic by name, which
// keeps checkpoints and updates deterministic.
class ParameterSet {
 public:
  explicit ParameterSet(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Uniform in [-s, s], s = 1/sqrt(fan_in). The draw depends only on
  // (seed, name), not on creation order.
  Tensor& uniform(const std::string& name, Shape shape, std::size_t fan_in);
  Tensor& constant(const std::string& name, Shape shape, double value);
  // Registers an existing tensor (marked requires_grad).
  Tensor& insert(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  // Independent storage with identical values.
  ParameterSet deep_copy() const;

 private:
  std::uint64_t seed_;
  std::map<std::string, Tensor> entries_;
};

// Binary checkpoint: "STTK", u32 version, u32 count, then per entry u16 name
// length, name bytes, u8 rank, u32 extents, little-endian f64 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void write_checkpoint(std::ostream& os, const ParameterSet& params);
ParameterSet read_checkpoint(std::istream& is, std::uint64_t seed = 0);
void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::filesystem::path& path, std::uint64_t seed = 0);

}  // namespace sttrack::num
