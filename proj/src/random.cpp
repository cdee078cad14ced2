#include "metapac/random.hpp"

#include <cmath>
#include <numbers>

#include "metapac/errors.hpp"

namespace metapac {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return mix64(h);
}

Rng::result_type Rng::operator()() { return mix64(key_ + (++counter_) * kGolden); }

double Rng::uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform(), u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(phi);
  has_spare_ = true;
  return r * std::cos(phi);
}

// Marsaglia-Tsang; shape < 1 handled by the u^(1/a) boost.
double Rng::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw DomainError("Rng::gamma: need shape, rate > 0");
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0, 1.0);
    return g * std::pow(uniform(), 1.0 / shape) / rate;
  }
  const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

std::vector<double> Rng::dirichlet(const std::vector<double>& concentration) {
  std::vector<double> w(concentration.size());
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += (w[k] = gamma(concentration[k], 1.0));
  for (double& v : w) v /= s;
  return w;
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw DomainError("Rng::index: empty range");
  // Modulo with rejection of the incomplete top block.
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x;
  do {
    x = (*this)();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

RandomStream::RandomStream(std::uint64_t seed, std::string label)
    : seed_(seed), label_(std::move(label)), key_(mix64(seed ^ hash_label(label_)) ^ hash_label(label_)) {}

RandomStream RandomStream::child(std::string_view part) const {
  std::string l = label_;
  if (!l.empty()) l += '/';
  l += part;
  return RandomStream(seed_, std::move(l));
}

RandomStream RandomStream::child(std::string_view part, std::uint64_t index) const {
  std::string p(part);
  p += '/';
  p += std::to_string(index);
  return child(p);
}

}  // namespace metapac
