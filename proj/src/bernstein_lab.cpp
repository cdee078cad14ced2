#include "metapac/bernstein_lab.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "metapac/errors.hpp"
#include "metapac/parallel.hpp"
#include "metapac/within_task.hpp"

namespace metapac {

LemmaGap lemma1_gap(double x, double y, double tau, double C) {
  if (!(tau > 0.0) || !(C > 0.0)) throw DomainError("lemma1_gap: tau and C must be positive");
  const double lo = std::exp(-C * tau);
  if (!(x >= lo && x <= 1.0 && y >= lo && y <= 1.0))
    throw DomainError("lemma1_gap: x and y must lie in [exp(-C tau), 1]");
  auto f = [tau](double u) { return -std::log(u) / tau; };
  const double fx = f(x), fy = f(y);
  const double lhs = (fx - fy) * (fx - fy);
  const double rhs = (8.0 * std::exp(2.0 * C * tau) / tau) * ((fx + fy) / 2.0 - f((x + y) / 2.0));
  return {lhs, rhs};
}

namespace {

// Free energies minus R_hat(theta*) for every candidate on one fresh task.
std::vector<double> candidate_energies(const DiscreteEnv& env, const FinitePriorFamily& family, double alpha, int n,
                                       const RandomStream& rep) {
  const TaskDistribution task = sample_task(env, rep.child("task"));
  const TaskSample sample = sample_dataset(task, n, rep.child("data"));
  const std::vector<double> risks = empirical_risks(sample, BoundedLoss::zero_one(), env.M);
  const double proxy = risks[static_cast<std::size_t>(std::get<DiscreteTask>(task).theta_star)];
  std::vector<double> out(family.priors.size());
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = log_partition_free_energy(family.priors[j].log_weights, risks, alpha, n) - proxy;
  return out;
}

std::vector<std::vector<double>> energy_table(const DiscreteEnv& env, const FinitePriorFamily& family, double alpha,
                                              int n, int reps, const RandomStream& stream) {
  std::vector<std::vector<double>> table(static_cast<std::size_t>(reps));
  parallel_for(table.size(), [&](std::size_t r) {
    table[r] = candidate_energies(env, family, alpha, n, stream.child("rep", r));
  });
  return table;
}

BernsteinEstimate compare(const std::vector<std::vector<double>>& table, std::size_t j, std::size_t ref, double c) {
  std::vector<double> delta(table.size()), sq(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    delta[r] = table[r][j] - table[r][ref];
    sq[r] = delta[r] * delta[r];
  }
  const MeanSe d = mean_and_se(delta), s = mean_and_se(sq);
  BernsteinEstimate e;
  e.lhs = s.mean;
  e.se_lhs = s.se;
  e.rhs = c * d.mean;
  e.se_rhs = c * d.se;
  e.reps = static_cast<int>(table.size());
  e.c_used = c;
  e.pass = e.lhs <= e.rhs + 3.0 * (e.se_lhs + e.se_rhs);
  return e;
}

}  // namespace

PiStarEstimate estimate_pi_star(const DiscreteEnv& env, const FinitePriorFamily& candidates, double alpha, int n,
                                int reps, const RandomStream& stream) {
  if (reps < 100) throw DomainError("estimate_pi_star: reps must be at least 100");
  validate(MetaEnvironment{env});
  const auto table = energy_table(env, candidates, alpha, n, reps, stream);
  const std::size_t J = candidates.priors.size();
  PiStarEstimate out{0, 0, {}, {}};
  std::vector<double> column(table.size());
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t r = 0; r < table.size(); ++r) column[r] = table[r][j];
    out.objective.push_back(mean_and_se(column));
  }
  for (std::size_t j = 1; j < J; ++j)
    if (out.objective[j].mean < out.objective[out.index].mean) out.index = j;
  out.second = out.index;
  for (std::size_t j = 0; j < J; ++j) {
    if (j == out.index) continue;
    if (out.second == out.index || out.objective[j].mean < out.objective[out.second].mean) out.second = j;
  }
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t r = 0; r < table.size(); ++r) column[r] = table[r][j] - table[r][out.index];
    out.gap.push_back(mean_and_se(column));
  }
  return out;
}

std::size_t MetaBernsteinReport::passed() const {
  std::size_t k = 0;
  for (const auto& c : checks) k += c.against_pi_star.pass ? 1 : 0;
  return k;
}

MetaBernsteinReport verify_meta_bernstein(const DiscreteEnv& env, const FinitePriorFamily& candidates, double alpha,
                                          int n, int reps, const RandomStream& stream,
                                          const std::vector<std::size_t>& tested) {
  if (reps < 100) throw DomainError("verify_meta_bernstein: reps must be at least 100");
  const PiStarEstimate star = estimate_pi_star(env, candidates, alpha, n, reps, stream.child("estimate"));
  const double c = 8.0 * std::numbers::e * BoundedLoss::zero_one().C;
  const auto table = energy_table(env, candidates, alpha, n, reps, stream.child("verify"));
  MetaBernsteinReport report{star.index, star.second, c, {}};
  std::vector<std::size_t> list = tested;
  if (list.empty())
    for (std::size_t j = 0; j < candidates.priors.size(); ++j) list.push_back(j);
  for (std::size_t j : list) {
    if (j >= candidates.priors.size()) throw DomainError("verify_meta_bernstein: tested index out of range");
    if (j == star.index) continue;
    report.checks.push_back({j, compare(table, j, star.index, c), compare(table, j, star.second, c)});
  }
  return report;
}

FinitePriorFamily make_candidate_family(const DiscreteEnv& env, int count, const RandomStream& stream) {
  if (count < 1) throw DomainError("make_candidate_family: count must be positive");
  const auto M = static_cast<std::size_t>(env.M);
  std::vector<DiscretePrior> priors;
  for (int a : env.a_star) {
    if (priors.size() == static_cast<std::size_t>(count)) break;
    std::vector<double> lw(M, -std::numeric_limits<double>::infinity());
    lw[static_cast<std::size_t>(a)] = 0.0;
    priors.push_back({lw});
  }
  if (priors.size() < static_cast<std::size_t>(count))
    priors.push_back({std::vector<double>(M, -std::log(static_cast<double>(M)))});
  Rng rng = stream.rng();
  while (priors.size() < static_cast<std::size_t>(count)) {
    const std::vector<double> w = rng.dirichlet(std::vector<double>(M, 1.0));
    double s = 0.0;
    for (double v : w) s += v;
    std::vector<double> lw(M);
    for (std::size_t i = 0; i < M; ++i) lw[i] = std::log(w[i] / s);
    priors.push_back({lw});
  }
  const std::size_t J = priors.size();
  return FinitePriorFamily(std::move(priors), CategoricalDist::uniform(J));
}

WithinTaskBernsteinReport verify_within_task_bernstein(const MetaEnvironment& env, const std::vector<Point>& grid,
                                                       int reps, const RandomStream& stream, double ceiling) {
  const BernsteinConstant k = bernstein_constant_estimate(env, grid, reps, stream);
  return {k, ceiling, !k.infinite && k.value <= ceiling};
}

}  // namespace metapac
