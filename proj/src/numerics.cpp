#include "metapac/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "metapac/errors.hpp"

namespace metapac {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double log_sum_exp(std::span<const double> log_weights, std::span<const double> values) {
  if (log_weights.empty() || log_weights.size() != values.size())
    throw DomainError("log_sum_exp: vectors must be nonempty and of equal length");
  double m = kNegInf;
  for (std::size_t i = 0; i < values.size(); ++i) m = std::max(m, log_weights[i] + values[i]);
  if (m == kNegInf) return kNegInf;
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += std::exp(log_weights[i] + values[i] - m);
  return m + std::log(s);
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw DomainError("log_sum_exp: empty vector");
  double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

// Lanczos approximation, g = 7, nine coefficients.
double log_gamma(double x) {
  if (!(x > 0.0)) throw DomainError("log_gamma: argument must be positive");
  if (x < 0.5) return log_gamma(x + 1.0) - std::log(x);
  static constexpr double g = 7.0;
  static constexpr double p[9] = {0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
                                  771.32342877765313,   -176.61502916214059,   12.507343278686905,
                                  -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  const double z = x - 1.0;
  double a = p[0];
  for (int i = 1; i < 9; ++i) a += p[i] / (z + i);
  const double t = z + g + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(a);
}

double digamma(double x) {
  if (!(x > 0.0)) throw DomainError("digamma: argument must be positive");
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double r = 1.0 / (x * x);
  const double series =
      r * (1.0 / 12 - r * (1.0 / 120 - r * (1.0 / 252 - r * (1.0 / 240 - r * (1.0 / 132)))));
  return acc + std::log(x) - 0.5 / x - series;
}

namespace {

double gamma_series(double a, double x, double gln) {
  double ap = a, sum = 1.0 / a, del = sum;
  for (int i = 0; i < 100000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - gln);
}

// Continued fraction for Q(a, x), modified Lentz.
double gamma_cf(double a, double x, double gln) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw DomainError("regularized_gamma_p: need a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double gln = log_gamma(a);
  if (x < a + 1.0) return gamma_series(a, x, gln);
  return 1.0 - gamma_cf(a, x, gln);
}

double gamma_p_inverse(double a, double u) {
  if (!(a > 0.0) || !(u > 0.0) || !(u < 1.0))
    throw DomainError("gamma_p_inverse: need a > 0 and u in (0, 1)");
  const double gln = log_gamma(a);
  const double a1 = a - 1.0;
  double x, lna1 = 0.0, afac = 0.0;
  if (a > 1.0) {
    lna1 = std::log(a1);
    afac = std::exp(a1 * (lna1 - 1.0) - gln);
    const double pp = u < 0.5 ? u : 1.0 - u;
    const double t = std::sqrt(-2.0 * std::log(pp));
    x = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
    if (u < 0.5) x = -x;
    x = std::max(1e-3, a * std::pow(1.0 - 1.0 / (9.0 * a) - x / (3.0 * std::sqrt(a)), 3));
  } else {
    const double t = 1.0 - a * (0.253 + a * 0.12);
    x = u < t ? std::pow(u / t, 1.0 / a) : 1.0 - std::log(1.0 - (u - t) / (1.0 - t));
  }
  for (int j = 0; j < 100; ++j) {
    if (x <= 0.0) return 0.0;
    const double err = regularized_gamma_p(a, x) - u;
    double t = a > 1.0 ? afac * std::exp(-(x - a1) + a1 * (std::log(x) - lna1))
                       : std::exp(-x + a1 * std::log(x) - gln);
    if (t == 0.0) break;
    const double ratio = err / t;
    t = ratio / (1.0 - 0.5 * std::min(1.0, ratio * ((a - 1.0) / x - 1.0)));
    x -= t;
    if (x <= 0.0) x = 0.5 * (x + t);
    if (std::fabs(t) < 1e-14 * x) break;
  }
  return x;
}

double log_binomial(int n, int k) {
  if (k < 0 || k > n) throw DomainError("log_binomial: need 0 <= k <= n");
  return log_gamma(n + 1.0) - log_gamma(k + 1.0) - log_gamma(n - k + 1.0);
}

double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 16) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t h = x.size() / 2;
  return pairwise_sum(x.subspan(0, h)) + pairwise_sum(x.subspan(h));
}

Quadrature1D::Quadrature1D(double lower_, double upper_, std::size_t nodes_)
    : lower(lower_), upper(upper_), nodes(nodes_) {
  if (nodes < 2) throw DomainError("Quadrature1D: need at least 2 nodes");
  if (!(lower < upper)) throw DomainError("Quadrature1D: need lower < upper");
}

double trapezoid(const std::function<double(double)>& f, const Quadrature1D& grid) {
  const double h = (grid.upper - grid.lower) / static_cast<double>(grid.nodes - 1);
  std::vector<double> vals(grid.nodes);
  for (std::size_t i = 0; i < grid.nodes; ++i) {
    const double x = i + 1 == grid.nodes ? grid.upper : grid.lower + h * static_cast<double>(i);
    double v = f(x);
    if (!std::isfinite(v)) throw NumericError("trapezoid: non-finite integrand");
    if (i == 0 || i + 1 == grid.nodes) v *= 0.5;
    vals[i] = v;
  }
  return h * pairwise_sum(vals);
}

double kl_quadrature_oracle(const std::function<double(double)>& log_density_p,
                            const std::function<double(double)>& log_density_q,
                            const Quadrature1D& grid) {
  return trapezoid(
      [&](double x) {
        const double lp = log_density_p(x), lq = log_density_q(x);
        if (!std::isfinite(lp) || !std::isfinite(lq))
          throw NumericError("kl_quadrature_oracle: non-finite log density");
        return std::exp(lp) * (lp - lq);
      },
      grid);
}

void MeanAccumulator::add(double x) { values_.push_back(x); }

double MeanAccumulator::mean() const { return mean_and_se(values_).mean; }

double MeanAccumulator::variance() const {
  const std::size_t n = values_.size();
  if (n < 2) return 0.0;
  const double m = mean();
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = (values_[i] - m) * (values_[i] - m);
  return pairwise_sum(sq) / static_cast<double>(n - 1);
}

double MeanAccumulator::standard_error() const {
  const std::size_t n = values_.size();
  if (n < 2) return 0.0;
  return std::sqrt(variance() / static_cast<double>(n));
}

MeanSe mean_and_se(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) throw DomainError("mean_and_se: empty sample");
  const double m = pairwise_sum(x) / static_cast<double>(n);
  if (n < 2) return {m, 0.0};
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = (x[i] - m) * (x[i] - m);
  return {m, std::sqrt(pairwise_sum(sq) / static_cast<double>(n - 1) / static_cast<double>(n))};
}

}  // namespace metapac
