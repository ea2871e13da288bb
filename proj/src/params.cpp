#include "frwkv/params.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

FRWKV_BEGIN_NAMESPACE

std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ULL;
  }
  Rng mix(seed ^ h);
  return mix.next_u64();
}

Tensor ParameterStore::add(const std::string& name, const Shape& shape, const Init& init, bool trainable) {
  if (contains(name)) throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
  std::vector<Real> data(static_cast<std::size_t>(shape.numel()), Real(0));
  switch (init.kind) {
    case Init::Kind::zeros:
      break;
    case Init::Kind::constant:
      std::fill(data.begin(), data.end(), static_cast<Real>(init.value));
      break;
    case Init::Kind::uniform_fan_in:
    case Init::Kind::uniform: {
      const double bound =
          init.kind == Init::Kind::uniform ? init.value : 1.0 / std::sqrt(static_cast<double>(std::max(init.fan_in, 1)));
      Rng rng(derive_seed(seed_, name));
      for (Real& v : data) v = static_cast<Real>(rng.uniform(-bound, bound));
      break;
    }
  }
  Tensor t = trainable ? Tensor::leaf(shape, std::move(data)) : Tensor::from_data(shape, std::move(data));
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, t, trainable});
  return t;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
  return entries_[it->second].tensor;
}

std::int64_t ParameterStore::total_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

std::int64_t ParameterStore::trainable_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.tensor.numel();
  }
  return n;
}

void ParameterStore::zero_grad() const {
  for (const auto& e : entries_) e.tensor.zero_grad();
}

FRWKV_END_NAMESPACE
