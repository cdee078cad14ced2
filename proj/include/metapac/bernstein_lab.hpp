#pragma once

#include <vector>

#include "metapac/environments.hpp"
#include "metapac/meta_level.hpp"
#include "metapac/numerics.hpp"
#include "metapac/random.hpp"

namespace metapac {

struct LemmaGap {
  double lhs;
  double rhs;
};

/// f(u) = -log(u)/tau; lhs = (f(x) - f(y))^2,
/// rhs = (8 e^{2 C tau} / tau) ((f(x) + f(y))/2 - f((x + y)/2)).
LemmaGap lemma1_gap(double x, double y, double tau, double C);

struct PiStarEstimate {
  std::size_t index;
  std::size_t second;           // runner-up, equals index for a single candidate
  std::vector<MeanSe> objective;  // per candidate, mean free energy minus R_hat(theta*)
  std::vector<MeanSe> gap;        // paired difference to the argmin
};

/// Argmin over candidates of the Monte-Carlo expected Gibbs free energy; ties
/// go to the lowest index.
PiStarEstimate estimate_pi_star(const DiscreteEnv& env, const FinitePriorFamily& candidates, double alpha, int n,
                                int reps, const RandomStream& stream);

struct BernsteinEstimate {
  double lhs = 0.0;     // mean(delta^2)
  double rhs = 0.0;     // c * mean(delta)
  double se_lhs = 0.0;
  double se_rhs = 0.0;  // c * SE(mean(delta))
  int reps = 0;
  double c_used = 0.0;
  bool pass = true;     // lhs <= rhs + 3 (se_lhs + se_rhs)
};

struct CandidateCheck {
  std::size_t index;
  BernsteinEstimate against_pi_star;
  BernsteinEstimate against_second;  // sensitivity column
};

struct MetaBernsteinReport {
  std::size_t pi_star;
  std::size_t second;
  double c_used;
  std::vector<CandidateCheck> checks;
  std::size_t passed() const;
};

/// Estimates pi* on stream/"estimate", then verifies the meta-level Bernstein
/// inequality on stream/"verify" for each tested candidate other than pi*.
/// An empty `tested` list means every candidate.
MetaBernsteinReport verify_meta_bernstein(const DiscreteEnv& env, const FinitePriorFamily& candidates, double alpha,
                                          int n, int reps, const RandomStream& stream,
                                          const std::vector<std::size_t>& tested = {});

/// Candidate priors on {0..M-1}: a Dirac at each label of A*, the uniform
/// prior, then Dirichlet(1) draws until `count` candidates exist.
FinitePriorFamily make_candidate_family(const DiscreteEnv& env, int count, const RandomStream& stream);

struct WithinTaskBernsteinReport {
  BernsteinConstant constant;
  double ceiling;
  bool pass;
};

WithinTaskBernsteinReport verify_within_task_bernstein(const MetaEnvironment& env, const std::vector<Point>& grid,
                                                       int reps, const RandomStream& stream, double ceiling);

}  // namespace metapac
