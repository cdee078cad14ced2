#include "metapac/environments.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "metapac/errors.hpp"
#include "metapac/numerics.hpp"

namespace metapac {

namespace {

double squared_distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double squared_norm(const Point& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

// log of the noncentral chi-square MGF bound minimized over t.
double log_chernoff(const Point& delta, const std::vector<double>& var, double clip) {
  double vmax = 0.0;
  for (double v : var) vmax = std::max(vmax, v);
  auto f = [&](double t) {
    double s = -t * clip;
    for (std::size_t i = 0; i < var.size(); ++i) {
      const double den = 1.0 - 2.0 * t * var[i];
      s += -0.5 * std::log(den) + delta[i] * delta[i] * t / den;
    }
    return s;
  };
  double lo = 0.0, hi = 0.5 / vmax * (1.0 - 1e-12);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 200; ++it) {
    const double m1 = hi - phi * (hi - lo), m2 = lo + phi * (hi - lo);
    if (f(m1) < f(m2))
      hi = m2;
    else
      lo = m1;
  }
  return std::min(0.0, f(0.5 * (lo + hi)));
}

// Isotropic case: W ~ N(delta, s2 I), |W|^2 = s2 * noncentral chi-square(d, lambda).
double clipped_square_isotropic(double norm2, double s2, std::size_t d, double clip) {
  const double c = clip / s2;
  const double mu = 0.5 * norm2 / s2;  // Poisson mean
  const double spread = 12.0 * std::sqrt(mu) + 40.0;
  const auto jlo = static_cast<long>(std::max(0.0, std::floor(mu - spread)));
  const auto jhi = static_cast<long>(std::ceil(mu + spread));
  const double dd = static_cast<double>(d);
  double below = 0.0, cdf = 0.0;
  for (long j = jlo; j <= jhi; ++j) {
    const double lw = mu > 0.0 ? -mu + j * std::log(mu) - log_gamma(j + 1.0) : (j == 0 ? 0.0 : -INFINITY);
    if (lw < -745.0) continue;
    const double w = std::exp(lw);
    const double k = dd + 2.0 * j;
    below += w * k * regularized_gamma_p(0.5 * k + 1.0, 0.5 * c);
    cdf += w * regularized_gamma_p(0.5 * k, 0.5 * c);
  }
  return s2 * below + clip * std::max(0.0, 1.0 - cdf);
}

double clipped_square_tensor(const Point& delta, const std::vector<double>& var, double clip) {
  const std::size_t d = delta.size();
  if (d > 3) throw Unsupported("expected_clipped_square: anisotropic case supports d <= 3");
  const std::size_t nodes = d == 1 ? 4001 : d == 2 ? 801 : 161;
  std::vector<double> x(d);
  std::function<double(std::size_t, double)> rec = [&](std::size_t i, double acc) -> double {
    if (i == d) return std::min(clip, acc);
    if (var[i] == 0.0) return rec(i + 1, acc + delta[i] * delta[i]);
    const double sd = std::sqrt(var[i]);
    Quadrature1D grid(delta[i] - 10.0 * sd, delta[i] + 10.0 * sd, nodes);
    return trapezoid(
        [&](double w) {
          const double z = (w - delta[i]) / sd;
          const double dens = std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
          return dens * rec(i + 1, acc + w * w);
        },
        grid);
  };
  return rec(0, 0.0);
}

}  // namespace

BoundedLoss BoundedLoss::clipped_squared(double clip) {
  if (!(clip > 0.0)) throw DomainError("clipped_squared: clip must be positive");
  return {LossKind::ClippedSquared, clip};
}

double BoundedLoss::operator()(int z, int theta) const {
  if (kind != LossKind::ZeroOne) throw DomainError("BoundedLoss: label input needs zero-one loss");
  return z == theta ? 0.0 : C;
}

double BoundedLoss::operator()(const Point& z, const Point& theta) const {
  if (kind != LossKind::ClippedSquared) throw DomainError("BoundedLoss: point input needs clipped-squared loss");
  if (z.size() != theta.size()) throw DomainError("BoundedLoss: dimension mismatch");
  return std::min(C, squared_distance(z, theta));
}

void validate(const MetaEnvironment& env) {
  std::visit(
      [](const auto& e) {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, DiscreteEnv>) {
          if (e.M < 1) throw DomainError("discrete env: M must be >= 1");
          if (e.a_star.empty()) throw DomainError("discrete env: A* must be nonempty");
          for (int a : e.a_star)
            if (a < 0 || a >= e.M) throw DomainError("discrete env: A* must be a subset of {0..M-1}");
          if (!(e.flip >= 0.0 && e.flip <= 1.0)) throw DomainError("discrete env: flip probability in [0,1]");
          if (e.M == 1 && e.flip > 0.0) throw DomainError("discrete env: M = 1 requires flip = 0");
        } else if constexpr (std::is_same_v<E, GaussianEnv>) {
          if (e.d < 1 || e.mu_star.size() != e.d) throw DomainError("gaussian env: mu* must have d >= 1 entries");
          if (e.spread < 0.0 || e.noise_var < 0.0) throw DomainError("gaussian env: variances must be >= 0");
          if (!(e.clip > 0.0)) throw DomainError("gaussian env: clip must be positive");
        } else {
          if (e.centers.empty()) throw DomainError("mixture env: need at least one center");
          for (const auto& c : e.centers)
            if (c.size() != e.dim() || c.empty()) throw DomainError("mixture env: center dimension mismatch");
          if (e.spread < 0.0 || e.noise_var < 0.0) throw DomainError("mixture env: variances must be >= 0");
          if (!(e.clip > 0.0)) throw DomainError("mixture env: clip must be positive");
        }
      },
      env);
}

BoundedLoss loss_of(const MetaEnvironment& env) {
  if (const auto* g = std::get_if<GaussianEnv>(&env)) return BoundedLoss::clipped_squared(g->clip);
  if (const auto* m = std::get_if<MixtureEnv>(&env)) return BoundedLoss::clipped_squared(m->clip);
  return BoundedLoss::zero_one();
}

BoundedLoss loss_of(const TaskDistribution& task) {
  if (const auto* g = std::get_if<GaussianTask>(&task)) return BoundedLoss::clipped_squared(g->clip);
  return BoundedLoss::zero_one();
}

std::optional<double> smoothness_constant(const MetaEnvironment& env) {
  if (std::holds_alternative<DiscreteEnv>(env)) return std::nullopt;
  return 1.0;
}

double dispersion(const MetaEnvironment& env) {
  if (const auto* g = std::get_if<GaussianEnv>(&env)) return static_cast<double>(g->d) * g->spread;
  if (const auto* m = std::get_if<MixtureEnv>(&env)) return static_cast<double>(m->dim()) * m->spread;
  return 0.0;
}

double default_clip(std::size_t d, double noise_var, double offset2) {
  return 25.0 * (noise_var * static_cast<double>(d) + offset2);
}

TaskDistribution sample_task(const MetaEnvironment& env, const RandomStream& stream) {
  Rng rng = stream.rng();
  if (const auto* e = std::get_if<DiscreteEnv>(&env)) {
    const int star = e->a_star[e->a_star.size() == 1 ? 0 : rng.index(e->a_star.size())];
    return DiscreteTask{e->M, star, e->flip};
  }
  if (const auto* e = std::get_if<GaussianEnv>(&env)) {
    Point mu = e->mu_star;
    const double sd = std::sqrt(e->spread);
    for (double& v : mu) v += sd * rng.normal();
    return GaussianTask{std::move(mu), e->noise_var, e->clip};
  }
  const auto& e = std::get<MixtureEnv>(env);
  Point mu = e.centers[rng.index(e.centers.size())];
  const double sd = std::sqrt(e.spread);
  for (double& v : mu) v += sd * rng.normal();
  return GaussianTask{std::move(mu), e.noise_var, e.clip};
}

TaskSample sample_dataset(const TaskDistribution& task, int n, const RandomStream& stream) {
  if (n < 1) throw DomainError("sample_dataset: n must be >= 1");
  Rng rng = stream.rng();
  TaskSample s;
  s.n = n;
  if (const auto* t = std::get_if<DiscreteTask>(&task)) {
    s.labels.resize(static_cast<std::size_t>(n));
    for (int& z : s.labels) {
      if (t->flip > 0.0 && rng.bernoulli(t->flip)) {
        const int other = static_cast<int>(rng.index(static_cast<std::size_t>(t->M - 1)));
        z = other >= t->theta_star ? other + 1 : other;
      } else {
        z = t->theta_star;
      }
    }
    return s;
  }
  const auto& t = std::get<GaussianTask>(task);
  const double sd = std::sqrt(t.noise_var);
  s.points.resize(static_cast<std::size_t>(n), t.mean);
  for (auto& z : s.points)
    for (double& v : z) v += sd * rng.normal();
  return s;
}

double true_risk(const DiscreteTask& task, int theta) {
  if (theta < 0 || theta >= task.M) throw DomainError("true_risk: label out of range");
  if (theta == task.theta_star) return task.flip;
  return 1.0 - task.flip / static_cast<double>(task.M - 1);
}

double clip_probability_bound(const Point& delta, const std::vector<double>& var, double clip) {
  bool degenerate = true;
  for (double v : var) degenerate = degenerate && v == 0.0;
  if (degenerate) return squared_norm(delta) > clip ? 1.0 : 0.0;
  return std::exp(log_chernoff(delta, var, clip));
}

double expected_clipped_square(const Point& delta, const std::vector<double>& var, double clip) {
  if (delta.size() != var.size() || delta.empty()) throw DomainError("expected_clipped_square: shape mismatch");
  double total_var = 0.0;
  for (double v : var) {
    if (v < 0.0) throw DomainError("expected_clipped_square: negative variance");
    total_var += v;
  }
  if (clip_probability_bound(delta, var, clip) < 1e-12) return squared_norm(delta) + total_var;
  if (total_var == 0.0) return std::min(clip, squared_norm(delta));
  const bool isotropic = std::all_of(var.begin(), var.end(), [&](double v) { return v == var.front(); });
  if (isotropic) return clipped_square_isotropic(squared_norm(delta), var.front(), delta.size(), clip);
  return clipped_square_tensor(delta, var, clip);
}

double true_risk(const GaussianTask& task, const Point& theta) {
  if (theta.size() != task.dim()) throw DomainError("true_risk: dimension mismatch");
  Point delta(theta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = theta[i] - task.mean[i];
  return expected_clipped_square(delta, std::vector<double>(delta.size(), task.noise_var), task.clip);
}

double expected_risk(const GaussianTask& task, const DiagGaussian& rho) {
  if (rho.dim() != task.dim()) throw DomainError("expected_risk: dimension mismatch");
  Point delta(rho.dim());
  std::vector<double> var(rho.dim());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    delta[i] = rho.mean[i] - task.mean[i];
    var[i] = rho.var[i] + task.noise_var;
  }
  return expected_clipped_square(delta, var, task.clip);
}

double min_risk(const TaskDistribution& task) {
  if (const auto* t = std::get_if<DiscreteTask>(&task)) return t->flip;
  const auto& g = std::get<GaussianTask>(task);
  return true_risk(g, g.mean);
}

namespace {

struct PairMoments {
  double variance;  // E[(l(Z,theta) - l(Z,theta*))^2]
  double excess;
};

PairMoments discrete_moments(const DiscreteTask& t, int theta) {
  const BoundedLoss loss = BoundedLoss::zero_one();
  double v = 0.0;
  for (int z = 0; z < t.M; ++z) {
    const double pz = z == t.theta_star ? 1.0 - t.flip : t.flip / static_cast<double>(t.M - 1);
    const double diff = loss(z, theta) - loss(z, t.theta_star);
    v += pz * diff * diff;
  }
  return {v, true_risk(t, theta) - true_risk(t, t.theta_star)};
}

PairMoments gaussian_moments(const GaussianTask& t, const Point& offset, const RandomStream& stream) {
  Point theta = t.mean;
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += offset[i];
  const double excess = true_risk(t, theta) - min_risk(t);
  const std::vector<double> var(t.dim(), t.noise_var);
  const double n2 = squared_norm(offset);
  const bool inactive = clip_probability_bound(offset, var, t.clip) < 1e-12 &&
                        clip_probability_bound(Point(t.dim(), 0.0), var, t.clip) < 1e-12;
  if (inactive) return {n2 * n2 + 4.0 * t.noise_var * n2, excess};
  const BoundedLoss loss = BoundedLoss::clipped_squared(t.clip);
  Rng rng = stream.rng();
  const double sd = std::sqrt(t.noise_var);
  std::vector<double> sq(20000);
  Point z(t.dim());
  for (double& s : sq) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = t.mean[i] + sd * rng.normal();
    const double diff = loss(z, theta) - loss(z, t.mean);
    s = diff * diff;
  }
  return {pairwise_sum(sq) / static_cast<double>(sq.size()), excess};
}

}  // namespace

BernsteinConstant bernstein_constant_estimate(const MetaEnvironment& env, const std::vector<Point>& grid,
                                              int reps, const RandomStream& stream) {
  if (grid.empty()) throw DomainError("bernstein_constant_estimate: empty grid");
  if (reps < 1) throw DomainError("bernstein_constant_estimate: reps must be >= 1");
  validate(env);
  BernsteinConstant out;
  for (int r = 0; r < reps; ++r) {
    const TaskDistribution task = sample_task(env, stream.child("task", static_cast<std::uint64_t>(r)));
    for (std::size_t g = 0; g < grid.size(); ++g) {
      PairMoments pm{};
      if (const auto* t = std::get_if<DiscreteTask>(&task)) {
        if (grid[g].size() != 1) throw DomainError("bernstein_constant_estimate: discrete grid holds labels");
        const int theta = static_cast<int>(grid[g][0]);
        if (theta == t->theta_star) continue;
        pm = discrete_moments(*t, theta);
      } else {
        const auto& gt = std::get<GaussianTask>(task);
        if (grid[g].size() != gt.dim()) throw DomainError("bernstein_constant_estimate: offset dimension");
        pm = gaussian_moments(gt, grid[g], stream.child("mc", static_cast<std::uint64_t>(r) * grid.size() + g));
      }
      if (pm.excess < 1e-12) {
        if (pm.variance > 0.0) {
          out.infinite = true;
          out.value = 0.0;
          return out;
        }
        continue;
      }
      out.value = std::max(out.value, pm.variance / pm.excess);
    }
  }
  return out;
}

}  // namespace metapac
