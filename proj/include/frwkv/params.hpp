#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "frwkv/tensor.hpp"

FRWKV_BEGIN_NAMESPACE

/// Deterministic 64-bit generator (splitmix64). Identical streams on every
/// platform, unlike the std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::uint64_t state_;
};

/// Stream seed for a named consumer: mixes the base seed with a hash of name.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

struct Init {
  enum class Kind { zeros, constant, uniform_fan_in, uniform };
  Kind kind = Kind::zeros;
  double value = 0;  // constant value, or bound for `uniform`
  int fan_in = 1;

  static Init zeros() { return {}; }
  static Init constant(double v) { return {Kind::constant, v, 1}; }
  /// uniform(+-1/sqrt(fan_in))
  static Init fan_in_uniform(int fan_in) { return {Kind::uniform_fan_in, 0, fan_in}; }
  static Init uniform(double bound) { return {Kind::uniform, bound, 1}; }
};

/// Named learnable tensors in insertion order.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  /// Creates a parameter. Names must be unique.
  Tensor add(const std::string& name, const Shape& shape, const Init& init, bool trainable = true);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::int64_t total_parameter_count() const;
  std::int64_t trainable_parameter_count() const;
  std::uint64_t seed() const { return seed_; }

  void zero_grad() const;

 private:
  std::uint64_t seed_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

FRWKV_END_NAMESPACE
