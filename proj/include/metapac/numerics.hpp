#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace metapac {

/// log sum_i exp(log_weights[i] + values[i]); -inf entries are allowed.
double log_sum_exp(std::span<const double> log_weights, std::span<const double> values);
/// log sum_i exp(x[i]).
double log_sum_exp(std::span<const double> x);

double log_gamma(double x);
double digamma(double x);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);
/// Inverse of P(a, .) at probability u in (0, 1).
double gamma_p_inverse(double a, double u);

double log_binomial(int n, int k);

/// Pairwise summation, error O(eps log n).
double pairwise_sum(std::span<const double> x);

struct Quadrature1D {
  double lower;
  double upper;
  std::size_t nodes;
  Quadrature1D(double lower, double upper, std::size_t nodes);
};

/// Trapezoidal estimate of int p log(p/q) over the grid. Error is O(1/nodes^2)
/// for smooth densities plus the mass outside [lower, upper].
double kl_quadrature_oracle(const std::function<double(double)>& log_density_p,
                            const std::function<double(double)>& log_density_q,
                            const Quadrature1D& grid);

/// Trapezoidal integral of f over the grid.
double trapezoid(const std::function<double(double)>& f, const Quadrature1D& grid);

/// Running mean and standard error of a sequence of values.
class MeanAccumulator {
 public:
  void add(double x);
  std::size_t count() const { return values_.size(); }
  double mean() const;
  double variance() const;  // unbiased
  double standard_error() const;
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

struct MeanSe {
  double mean;
  double se;
};

MeanSe mean_and_se(std::span<const double> x);

}  // namespace metapac
