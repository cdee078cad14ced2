#include "metapac/experiments.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "metapac/bounds.hpp"
#include "metapac/errors.hpp"
#include "metapac/numerics.hpp"
#include "metapac/parallel.hpp"
#include "metapac/within_task.hpp"

namespace metapac {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Estimate to_estimate(const std::vector<double>& v) {
  const MeanSe m = mean_and_se(v);
  return {m.mean, m.se, static_cast<int>(v.size())};
}

double discrete_excess(const DiscreteTask& task, const std::vector<double>& probs) {
  std::vector<double> terms(probs.size());
  const double best = min_risk(TaskDistribution{task});
  for (std::size_t th = 0; th < probs.size(); ++th)
    terms[th] = probs[th] * (true_risk(task, static_cast<int>(th)) - best);
  return pairwise_sum(terms);
}

double mixture_expected_risk(const GaussianTask& task, const GaussianMixture& rho) {
  std::vector<double> terms(rho.components.size());
  for (std::size_t k = 0; k < terms.size(); ++k) terms[k] = rho.weights.probs[k] * expected_risk(task, rho.components[k]);
  return pairwise_sum(terms);
}

struct TestDraw {
  TaskDistribution task;
  TaskSample sample;
};

TestDraw draw_test(const MetaEnvironment& env, int n, const RandomStream& rep) {
  TaskDistribution task = sample_task(env, rep.child("test_task"));
  TaskSample sample = sample_dataset(task, n, rep.child("test_data"));
  return {std::move(task), std::move(sample)};
}

std::vector<double> discrete_excess_vector(const DiscreteTask& task) {
  std::vector<double> out(static_cast<std::size_t>(task.M));
  const double best = min_risk(TaskDistribution{task});
  for (int th = 0; th < task.M; ++th) out[static_cast<std::size_t>(th)] = true_risk(task, th) - best;
  return out;
}

// Column sums of subset free energies over T training tasks, one vector per kind.
struct SubsetTraining {
  std::vector<std::vector<double>> colsums;
  double max_gap = 0.0;  // max |F_kind1 - F_kind0| when two kinds are given
};

SubsetTraining train_subsets(const DiscreteEnv& env, const SubsetPriorFamily& fam, double alpha, int n, long long T,
                             const RandomStream& rep, const std::vector<FreeEnergyKind>& kinds) {
  SubsetTraining out;
  out.colsums.assign(kinds.size(), std::vector<double>(fam.size(), 0.0));
  std::vector<std::vector<double>> energies(kinds.size());
  const BoundedLoss loss = BoundedLoss::zero_one();
  for (long long t = 0; t < T; ++t) {
    const auto idx = static_cast<std::uint64_t>(t);
    const TaskDistribution task = sample_task(env, rep.child("train_task", idx));
    const TaskSample sample = sample_dataset(task, n, rep.child("train_data", idx));
    const std::vector<double> risks = empirical_risks(sample, loss, env.M);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      subset_free_energies(fam, risks, alpha, n, kinds[k], energies[k]);
      auto& cs = out.colsums[k];
      for (std::size_t j = 0; j < cs.size(); ++j) cs[j] += energies[k][j];
    }
    if (kinds.size() == 2)
      for (std::size_t j = 0; j < fam.size(); ++j)
        out.max_gap = std::max(out.max_gap, std::fabs(energies[1][j] - energies[0][j]));
  }
  return out;
}

HyperReference reference_for(const AlgorithmConfig& a, std::size_t K) { return make_reference(K, a.xi2_ref, a.a_ref, a.b_ref); }

std::vector<std::size_t> k_grid_for(const AlgorithmConfig& a, long long T) {
  if (!a.k_grid.empty()) return a.k_grid;
  std::vector<std::size_t> g;
  for (std::size_t K = 1; K <= std::min<std::size_t>(4, static_cast<std::size_t>(T)); ++K) g.push_back(K);
  return g;
}

struct RepResult {
  double meta = 0.0;
  double iso = 0.0;
  double favorable = kNaN;
  double sigma_hat = kNaN;
  bool approximate = false;
};

RepResult continuous_rep(const ExperimentConfig& cfg, double alpha, double beta, int n, long long T,
                         const RandomStream& rep) {
  const AlgorithmConfig& a = cfg.algorithm;
  const MetaEnvironment& env = cfg.environment;
  std::vector<TaskSample> train;
  train.reserve(static_cast<std::size_t>(T));
  for (long long t = 0; t < T; ++t) {
    const auto idx = static_cast<std::uint64_t>(t);
    const TaskDistribution task = sample_task(env, rep.child("train_task", idx));
    train.push_back(sample_dataset(task, n, rep.child("train_data", idx)));
  }
  const MetaConstants consts{1.0, loss_of(env).C};
  RepResult out;
  HyperPosterior hyper;
  if (a.family == FamilyKind::GaussianGamma) {
    GaussianFitOptions opt;
    opt.mode = a.fit_mode;
    opt.epsilon = a.epsilon.eval(n, T);
    opt.regime_threshold = a.regime_threshold.value_or(Schedule{Schedule::Kind::NOverT, 0.0}).eval(n, T);
    opt.reference_var = a.reference_var;
    opt.budget = a.budget;
    opt.draws = a.draws;
    GaussianFitResult fit =
        fit_gaussian_hyperposterior(train, consts, alpha, beta, reference_for(a, 1), opt, rep.child("fit"));
    out.favorable = fit.regime == Regime::Favorable ? 1.0 : 0.0;
    out.sigma_hat = fit.sigma_hat;
    hyper = fit.hyper;
  } else {
    MixtureFitOptions opt;
    opt.regime_threshold = a.regime_threshold.value_or(Schedule{Schedule::Kind::NOverT2, 0.0}).eval(n, T);
    opt.reference_var = a.reference_var;
    opt.refine = a.refine;
    opt.budget = a.budget;
    opt.draws = a.draws;
    MixtureFitResult fit;
    if (a.family == FamilyKind::Mixture) {
      fit = fit_mixture_hyperposterior(train, consts, alpha, beta, reference_for(a, a.K), a.K, opt, rep.child("fit"));
    } else {
      fit = fit_unknownK_hyperposterior(train, consts, alpha, beta, a.xi2_ref, a.b_ref, k_grid_for(a, T), opt,
                                        rep.child("fit"))
                .fit;
    }
    out.favorable = fit.regime == Regime::Favorable ? 1.0 : 0.0;
    out.sigma_hat = fit.sigma_hat;
    hyper = fit.hyper;
  }
  const PriorSpec prior = sample_prior(hyper, rep.child("prior"));
  const TestDraw test = draw_test(env, n, rep);
  const BoundedLoss loss = loss_of(env);
  bool approx = false;
  out.meta = gibbs_excess(prior, test.task, test.sample, loss, alpha, a.variational_budget, rep.child("variational"),
                          &approx);
  out.approximate = approx;
  out.iso = gibbs_excess(isolation_prior(env, a), test.task, test.sample, loss, alpha, a.variational_budget,
                         rep.child("variational_isolation"));
  return out;
}

RepResult discrete_rep(const ExperimentConfig& cfg, const SubsetPriorFamily& fam, double alpha, double beta, int n,
                       long long T, const RandomStream& rep) {
  const DiscreteEnv& env = std::get<DiscreteEnv>(cfg.environment);
  const SubsetTraining tr = train_subsets(env, fam, alpha, n, T, rep, {FreeEnergyKind::Gibbs});
  const CategoricalDist weights = meta_gibbs_finite(tr.colsums[0], fam.log_lambda, beta);
  const TestDraw test = draw_test(cfg.environment, n, rep);
  const auto& task = std::get<DiscreteTask>(test.task);
  const std::vector<double> risks = empirical_risks(test.sample, BoundedLoss::zero_one(), env.M);
  RepResult out;
  out.meta = subset_expected_excess(fam, weights, risks, discrete_excess_vector(task), alpha, n);
  const std::vector<double> uniform(static_cast<std::size_t>(env.M), -std::log(static_cast<double>(env.M)));
  out.iso = discrete_excess(task, gibbs_discrete(uniform, risks, alpha, n).probabilities());
  return out;
}

double squared_norm(const Point& p) {
  double s = 0.0;
  for (double v : p) s += v * v;
  return s;
}

std::pair<double, double> cell_bounds(const ExperimentConfig& cfg, double alpha, double beta, int n, long long T) {
  const MetaEnvironment& env = cfg.environment;
  const AlgorithmConfig& a = cfg.algorithm;
  try {
    if (const auto* e = std::get_if<DiscreteEnv>(&env)) {
      const BoundReport r =
          discrete_meta_bound(static_cast<int>(e->a_star.size()), e->M, alpha, beta, n, static_cast<double>(T));
      return {r.value, r.extra("isolation_2")};
    }
    BoundParams p = default_constants(loss_of(env).C);
    p.alpha = alpha;
    p.beta = beta;
    p.n = n;
    p.T = T;
    p.xi2_ref = a.xi2_ref;
    p.a_ref = a.a_ref;
    p.b_ref = a.b_ref;
    if (const auto* g = std::get_if<GaussianEnv>(&env)) {
      p.d = static_cast<int>(g->d);
      p.sigma = dispersion(env);
      p.mu_norm2 = squared_norm(g->mu_star);
      p.regime_threshold = a.regime_threshold.value_or(Schedule{Schedule::Kind::NOverT, 0.0}).eval(n, T);
      p.epsilon = a.epsilon.eval(n, T);
      const double meta = gaussian_meta_bound(p).value;
      return {meta, gaussian_isolation_bound(p, p.mu_norm2, a.a_ref / a.b_ref).value};
    }
    const auto& m = std::get<MixtureEnv>(env);
    p.d = static_cast<int>(m.dim());
    p.regime_threshold = a.regime_threshold.value_or(Schedule{Schedule::Kind::NOverT2, 0.0}).eval(n, T);
    const std::size_t centers = m.centers.size();
    auto cell = [&](std::size_t K) {
      std::vector<double> norms;
      for (std::size_t k = 0; k < K; ++k) norms.push_back(squared_norm(m.centers[std::min(k, centers - 1)]));
      return MixtureCell{static_cast<int>(K), dispersion(env), norms};
    };
    double meta = kNaN;
    if (a.family == FamilyKind::Mixture) {
      if (a.K >= centers) {
        const MixtureCell c = cell(a.K);
        p.K = c.K;
        p.sigma_K = c.sigma_K;
        p.tau_norm2 = c.tau_norm2;
        meta = mixture_meta_bound(p, true).value;
      }
    } else {
      std::vector<MixtureCell> grid;
      for (std::size_t K : k_grid_for(a, T))
        if (K >= centers && static_cast<long long>(K) <= T) grid.push_back(cell(K));
      if (!grid.empty()) meta = mixture_meta_bound_unknownK(p, grid).value;
    }
    double mean_norm = 0.0;
    for (const auto& c : m.centers) mean_norm += squared_norm(c) / static_cast<double>(centers);
    p.sigma = dispersion(env);
    return {meta, gaussian_isolation_bound(p, mean_norm, a.a_ref / a.b_ref).value};
  } catch (const DomainError&) {
    return {kNaN, kNaN};
  }
}

}  // namespace

double gibbs_excess(const PriorSpec& prior, const TaskDistribution& task, const TaskSample& sample,
                    const BoundedLoss& loss, double alpha, int variational_budget, const RandomStream& stream,
                    bool* approximate) {
  if (approximate) *approximate = false;
  if (const auto* d = std::get_if<DiscretePrior>(&prior)) {
    const auto& t = std::get<DiscreteTask>(task);
    const std::vector<double> risks = empirical_risks(sample, loss, t.M);
    return discrete_excess(t, gibbs_discrete(d->log_weights, risks, alpha, sample.n).probabilities());
  }
  const auto& t = std::get<GaussianTask>(task);
  const double best = min_risk(task);
  const QuadraticSummary s = summarize(sample);
  if (const auto* g = std::get_if<DiagGaussian>(&prior)) {
    DiagGaussian rho = gibbs_gaussian_quadratic(*g, s, alpha);
    if (!clipping_negligible(sample, rho, loss.C))
      rho = variational_gaussian_posterior(sample, loss, *g, alpha, sample.n, variational_budget, stream).posterior;
    return expected_risk(t, rho) - best;
  }
  const GaussianMixture rho = gibbs_mixture_quadratic(std::get<GaussianMixture>(prior), s, alpha);
  if (approximate)
    for (const auto& c : rho.components)
      if (!clipping_negligible(sample, c, loss.C)) *approximate = true;
  return mixture_expected_risk(t, rho) - best;
}

double subset_expected_excess(const SubsetPriorFamily& family, const CategoricalDist& weights,
                              const std::vector<double>& risks, const std::vector<double>& excess, double alpha, int n) {
  const int M = family.M;
  if (risks.size() != static_cast<std::size_t>(M) || excess.size() != risks.size() || weights.size() != family.size())
    throw DomainError("subset_expected_excess: size mismatch");
  const double an = alpha * n;
  const double rmin = *std::min_element(risks.begin(), risks.end());
  std::vector<double> w(risks.size()), wx(risks.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(-an * (risks[i] - rmin));
    wx[i] = w[i] * excess[i];
  }
  const std::size_t total = family.size();
  std::vector<double> num(total + 1, 0.0), den(total + 1, 0.0), terms(total);
  for (std::size_t mask = 1; mask <= total; ++mask) {
    const auto low = static_cast<std::size_t>(std::countr_zero(static_cast<std::uint32_t>(mask)));
    num[mask] = num[mask & (mask - 1)] + wx[low];
    den[mask] = den[mask & (mask - 1)] + w[low];
    double value;
    if (den[mask] > 0.0) {
      value = num[mask] / den[mask];
    } else {  // every member underflowed: renormalize inside the subset
      double local = std::numeric_limits<double>::infinity();
      for (int i = 0; i < M; ++i)
        if (mask & (1u << i)) local = std::min(local, risks[static_cast<std::size_t>(i)]);
      double a = 0.0, b = 0.0;
      for (int i = 0; i < M; ++i)
        if (mask & (1u << i)) {
          const double wi = std::exp(-an * (risks[static_cast<std::size_t>(i)] - local));
          a += wi * excess[static_cast<std::size_t>(i)];
          b += wi;
        }
      value = a / b;
    }
    terms[mask - 1] = weights.probs[mask - 1] * value;
  }
  return pairwise_sum(terms);
}

Estimate estimate_meta_risk(const HyperPosterior& hyper, const MetaEnvironment& env, double alpha, int n, int reps,
                            const RandomStream& stream, int variational_budget) {
  if (reps < 2) throw DomainError("estimate_meta_risk: reps must be at least 2");
  const BoundedLoss loss = loss_of(env);
  std::vector<double> values(static_cast<std::size_t>(reps));
  parallel_for(values.size(), [&](std::size_t r) {
    const RandomStream rep = stream.child("rep", r);
    const TestDraw test = draw_test(env, n, rep);
    if (const auto* s = std::get_if<SubsetHyper>(&hyper)) {
      const auto& task = std::get<DiscreteTask>(test.task);
      values[r] = subset_expected_excess(*s->family, s->weights, empirical_risks(test.sample, loss, task.M),
                                         discrete_excess_vector(task), alpha, n);
    } else if (const auto* f = std::get_if<FiniteHyper>(&hyper)) {
      std::vector<double> terms(f->weights.size());
      for (std::size_t j = 0; j < terms.size(); ++j)
        terms[j] = f->weights.probs[j] == 0.0 ? 0.0
                                               : f->weights.probs[j] * gibbs_excess(f->family->priors[j], test.task,
                                                                                    test.sample, loss, alpha,
                                                                                    variational_budget, rep);
      values[r] = pairwise_sum(terms);
    } else {
      const PriorSpec prior = sample_prior(hyper, rep.child("prior"));
      values[r] = gibbs_excess(prior, test.task, test.sample, loss, alpha, variational_budget, rep.child("variational"));
    }
  });
  return to_estimate(values);
}

Estimate estimate_prior_risk(const PriorSpec& prior, const MetaEnvironment& env, double alpha, int n, int reps,
                             const RandomStream& stream, int variational_budget) {
  if (reps < 2) throw DomainError("estimate_prior_risk: reps must be at least 2");
  const BoundedLoss loss = loss_of(env);
  std::vector<double> values(static_cast<std::size_t>(reps));
  parallel_for(values.size(), [&](std::size_t r) {
    const RandomStream rep = stream.child("rep", r);
    const TestDraw test = draw_test(env, n, rep);
    values[r] = gibbs_excess(prior, test.task, test.sample, loss, alpha, variational_budget, rep.child("variational"));
  });
  return to_estimate(values);
}

PriorSpec isolation_prior(const MetaEnvironment& env, const AlgorithmConfig& algorithm) {
  if (const auto* e = std::get_if<DiscreteEnv>(&env))
    return DiscretePrior{std::vector<double>(static_cast<std::size_t>(e->M), -std::log(static_cast<double>(e->M)))};
  const std::size_t d = std::holds_alternative<GaussianEnv>(env) ? std::get<GaussianEnv>(env).d
                                                                  : std::get<MixtureEnv>(env).dim();
  return DiagGaussian(Point(d, 0.0), std::vector<double>(d, algorithm.a_ref / algorithm.b_ref));
}

CellRow run_cell(const ExperimentConfig& cfg, std::uint64_t seed, long long T, int n) {
  const double alpha = resolved_alpha(cfg), beta = resolved_beta(cfg);
  const RandomStream cell = RandomStream(seed, cfg.name).child("T", static_cast<std::uint64_t>(T)).child(
      "n", static_cast<std::uint64_t>(n));
  const auto reps = static_cast<std::size_t>(cfg.sweep.reps);
  std::vector<RepResult> results(reps);
  if (const auto* e = std::get_if<DiscreteEnv>(&cfg.environment)) {
    const SubsetPriorFamily fam = subset_family(e->M);
    parallel_for(
        reps, [&](std::size_t r) { results[r] = discrete_rep(cfg, fam, alpha, beta, n, T, cell.child("rep", r)); },
        cfg.sweep.threads);
  } else {
    parallel_for(
        reps, [&](std::size_t r) { results[r] = continuous_rep(cfg, alpha, beta, n, T, cell.child("rep", r)); },
        cfg.sweep.threads);
  }
  std::vector<double> meta(reps), iso(reps), diff(reps), fav(reps), sig(reps);
  int approx = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    meta[r] = results[r].meta;
    iso[r] = results[r].iso;
    diff[r] = results[r].meta - results[r].iso;
    fav[r] = results[r].favorable;
    sig[r] = results[r].sigma_hat;
    approx += results[r].approximate ? 1 : 0;
  }
  CellRow row;
  row.setting = cfg.name;
  row.seed = seed;
  row.T = T;
  row.n = n;
  row.reps = cfg.sweep.reps;
  row.meta = to_estimate(meta);
  row.isolation = to_estimate(iso);
  row.diff = to_estimate(diff);
  const auto [mb, ib] = cell_bounds(cfg, alpha, beta, n, T);
  row.meta_bound = mb;
  row.isolation_bound = ib;
  row.favorable_fraction = pairwise_sum(fav) / static_cast<double>(reps);
  row.sigma_hat = pairwise_sum(sig) / static_cast<double>(reps);
  row.approximations = approx;
  auto ok = [](double bound, const Estimate& e) { return std::isnan(bound) || bound >= e.mean - 3.0 * e.se; };
  row.bound_ok = ok(mb, row.meta) && ok(ib, row.isolation);
  return row;
}

std::vector<CellRow> run_isolation_vs_meta(const ExperimentConfig& cfg) {
  std::vector<CellRow> rows;
  for (std::uint64_t seed : cfg.sweep.seeds)
    for (long long T : cfg.sweep.T_grid)
      for (int n : cfg.sweep.n_grid) rows.push_back(run_cell(cfg, seed, T, n));
  return rows;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_csv(std::ostream& out, const std::vector<CellRow>& rows) {
  out << "setting,seed,T,n,reps,meta_excess,meta_se,isolation_excess,isolation_se,diff,diff_se,meta_bound,"
         "isolation_bound,favorable_fraction,sigma_hat,approximations,bound_ok\n";
  for (const auto& r : rows) {
    out << r.setting << ',' << r.seed << ',' << r.T << ',' << r.n << ',' << r.reps << ',' << format_double(r.meta.mean)
        << ',' << format_double(r.meta.se) << ',' << format_double(r.isolation.mean) << ','
        << format_double(r.isolation.se) << ',' << format_double(r.diff.mean) << ',' << format_double(r.diff.se) << ','
        << format_double(r.meta_bound) << ',' << format_double(r.isolation_bound) << ','
        << format_double(r.favorable_fraction) << ',' << format_double(r.sigma_hat) << ',' << r.approximations << ','
        << (r.bound_ok ? 1 : 0) << '\n';
  }
}

RateReport rate_fit(const std::vector<RatePoint>& points) {
  RateReport rep{{}, 0.0, 0.0, 0.0};
  for (const auto& p : points)
    if (p.estimate > 0.0 && p.T > 0.0 && std::isfinite(p.estimate)) rep.points.push_back(p);
  if (rep.points.size() < 3) throw FitUnavailable("rate_fit: fewer than 3 positive estimates");
  const double k = static_cast<double>(rep.points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : rep.points) {
    mx += std::log(p.T) / k;
    my += std::log(p.estimate) / k;
  }
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : rep.points) {
    const double dx = std::log(p.T) - mx, dy = std::log(p.estimate) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw FitUnavailable("rate_fit: all points share the same T");
  rep.slope = sxy / sxx;
  rep.intercept = my - rep.slope * mx;
  rep.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return rep;
}

std::vector<ProbeRow> open_question_probe(const ExperimentConfig& cfg) {
  const auto* env = std::get_if<DiscreteEnv>(&cfg.environment);
  if (!env) throw Unsupported("open_question_probe: needs a finite parameter set");
  const double alpha = resolved_alpha(cfg), beta = resolved_beta(cfg);
  const SubsetPriorFamily fam = subset_family(env->M);
  std::vector<ProbeRow> rows;
  for (std::uint64_t seed : cfg.sweep.seeds)
    for (long long T : cfg.sweep.T_grid)
      for (int n : cfg.sweep.n_grid) {
        const RandomStream cell = RandomStream(seed, cfg.name + "/probe")
                                      .child("T", static_cast<std::uint64_t>(T))
                                      .child("n", static_cast<std::uint64_t>(n));
        const auto reps = static_cast<std::size_t>(cfg.sweep.reps);
        std::vector<double> g(reps), v(reps), gap(reps), fe_gap(reps);
        parallel_for(
            reps,
            [&](std::size_t r) {
              const RandomStream rep = cell.child("rep", r);
              const SubsetTraining tr =
                  train_subsets(*env, fam, alpha, n, T, rep, {FreeEnergyKind::Gibbs, cfg.probe.variational});
              const CategoricalDist wg = meta_gibbs_finite(tr.colsums[0], fam.log_lambda, beta);
              const CategoricalDist wv = meta_gibbs_finite(tr.colsums[1], fam.log_lambda, beta);
              const TestDraw test = draw_test(cfg.environment, n, rep);
              const auto& task = std::get<DiscreteTask>(test.task);
              const auto risks = empirical_risks(test.sample, BoundedLoss::zero_one(), env->M);
              const auto excess = discrete_excess_vector(task);
              g[r] = subset_expected_excess(fam, wg, risks, excess, alpha, n);
              v[r] = subset_expected_excess(fam, wv, risks, excess, alpha, n);
              gap[r] = v[r] - g[r];
              fe_gap[r] = tr.max_gap;
            },
            cfg.sweep.threads);
        ProbeRow row{seed, T, n, cfg.sweep.reps, to_estimate(g), to_estimate(v), to_estimate(gap), 0.0};
        for (double x : fe_gap) row.max_free_energy_gap = std::max(row.max_free_energy_gap, x);
        rows.push_back(row);
      }
  return rows;
}

void write_probe_csv(std::ostream& out, const std::vector<ProbeRow>& rows) {
  out << "seed,T,n,reps,gibbs_excess,gibbs_se,variational_excess,variational_se,gap,gap_se,max_free_energy_gap\n";
  for (const auto& r : rows)
    out << r.seed << ',' << r.T << ',' << r.n << ',' << r.reps << ',' << format_double(r.gibbs.mean) << ','
        << format_double(r.gibbs.se) << ',' << format_double(r.variational.mean) << ','
        << format_double(r.variational.se) << ',' << format_double(r.gap.mean) << ',' << format_double(r.gap.se) << ','
        << format_double(r.max_free_energy_gap) << '\n';
}

}  // namespace metapac
