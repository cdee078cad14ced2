#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace metapac {

/// Counter-based generator: output i is a bijective mix of key + i * golden.
class Rng {
 public:
  using result_type = std::uint64_t;
  explicit Rng(std::uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()();

  double uniform();  // in (0, 1)
  double normal();
  double gamma(double shape, double rate);
  std::vector<double> dirichlet(const std::vector<double>& concentration);
  bool bernoulli(double p);
  std::size_t index(std::size_t n);  // uniform on {0..n-1}

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Immutable (seed, label) descriptor.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string label);

  RandomStream child(std::string_view part) const;
  RandomStream child(std::string_view part, std::uint64_t index) const;
  Rng rng() const { return Rng(key_); }

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }
  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::uint64_t key_;
};

std::uint64_t hash_label(std::string_view label);

}  // namespace metapac
