#pragma once

#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

#include "metapac/divergences.hpp"
#include "metapac/random.hpp"

namespace metapac {

using Point = std::vector<double>;

enum class LossKind { ZeroOne, ClippedSquared };

struct BoundedLoss {
  LossKind kind;
  double C;
  static BoundedLoss zero_one() { return {LossKind::ZeroOne, 1.0}; }
  static BoundedLoss clipped_squared(double clip);
  double operator()(int z, int theta) const;
  double operator()(const Point& z, const Point& theta) const;
};

struct DiscreteTask {
  int M;
  int theta_star;
  double flip;
};

struct GaussianTask {
  Point mean;  // theta*
  double noise_var;
  double clip;
  std::size_t dim() const { return mean.size(); }
};

using TaskDistribution = std::variant<DiscreteTask, GaussianTask>;

struct TaskSample {
  std::vector<int> labels;   // discrete tasks
  std::vector<Point> points;  // gaussian tasks
  int n = 0;
};

struct DiscreteEnv {
  int M;
  std::vector<int> a_star;
  double flip;
};

struct GaussianEnv {
  std::size_t d;
  Point mu_star;
  double spread;  // s^2, per coordinate
  double noise_var;
  double clip;
};

struct MixtureEnv {
  std::vector<Point> centers;
  double spread;  // per-coordinate variance around a center
  double noise_var;
  double clip;
  std::size_t dim() const { return centers.front().size(); }
};

using MetaEnvironment = std::variant<DiscreteEnv, GaussianEnv, MixtureEnv>;

void validate(const MetaEnvironment& env);
BoundedLoss loss_of(const MetaEnvironment& env);
BoundedLoss loss_of(const TaskDistribution& task);
/// Smoothness constant: 1 for the clipped-squared settings, none for discrete.
std::optional<double> smoothness_constant(const MetaEnvironment& env);
/// Sigma(P) for gaussian, Sigma_K(P) with the generating centers for mixture.
double dispersion(const MetaEnvironment& env);
/// 25 * (noise_var * d + offset2).
double default_clip(std::size_t d, double noise_var, double offset2);

TaskDistribution sample_task(const MetaEnvironment& env, const RandomStream& stream);
TaskSample sample_dataset(const TaskDistribution& task, int n, const RandomStream& stream);

double true_risk(const DiscreteTask& task, int theta);
double true_risk(const GaussianTask& task, const Point& theta);
/// E_{theta ~ rho} R(theta) for a diagonal Gaussian rho.
double expected_risk(const GaussianTask& task, const DiagGaussian& rho);
double min_risk(const TaskDistribution& task);

/// E min(C, |W|^2) for W ~ N(delta, diag(var)). Closed form when the clipping
/// probability bound is below 1e-12, Poisson-mixture series when isotropic,
/// tensor trapezoid otherwise (d <= 3).
double expected_clipped_square(const Point& delta, const std::vector<double>& var, double clip);
/// Chernoff upper bound on P(|W|^2 > clip).
double clip_probability_bound(const Point& delta, const std::vector<double>& var, double clip);

struct BernsteinConstant {
  double value = 0.0;
  bool infinite = false;
};

/// sup over sampled tasks and grid points of V(theta, theta*) / (R(theta) - R*).
/// Discrete envs: grid holds labels (one-element points). Continuous envs: grid
/// holds offsets from theta*. Pairs with zero variance and zero excess count as 0.
BernsteinConstant bernstein_constant_estimate(const MetaEnvironment& env, const std::vector<Point>& grid,
                                              int reps, const RandomStream& stream);

}  // namespace metapac
