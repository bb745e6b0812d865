#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sttrack/harness/config.hpp"
#include "sttrack/numerics/gradcheck.hpp"

namespace sttrack::harness {

// A differentiable scalar over a parameter set, for finite-difference checks.
struct GradCase {
  std::string name;
  num::ParameterSet params;
  num::ScalarFn fn;
};

// Every differentiable op on small seeded inputs; ops that produce tensors
// are reduced with a fixed random weighting so every output element matters.
std::vector<GradCase> op_grad_cases(std::uint64_t seed = 11);

// Pillars -> backbone -> stlm -> head -> loss on a fixed synthetic sample.
GradCase pipeline_grad_case(const RunConfig& cfg, std::uint64_t seed = 5);

// Small grid and channel counts so every variant/pattern can be checked quickly.
RunConfig reduced_config();

// FNV-1a over the values printed with 10 significant digits, which keeps
// hashes stable under last-bit differences.
std::uint64_t hash_values(std::span<const double> values);
std::string hash_hex(std::uint64_t h);

// name -> hash for every golden output.
std::map<std::string, std::string> compute_goldens();
void write_goldens(const std::filesystem::path& path, const std::map<std::string, std::string>& goldens);
std::map<std::string, std::string> read_goldens(const std::filesystem::path& path);

// Hash of forward_local outputs on the golden sample under `cfg`.
std::string pipeline_golden(const RunConfig& cfg);

}  // namespace sttrack::harness
