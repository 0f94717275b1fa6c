#pragma once

#include <array>
#include <string>
#include <vector>

#include "profiler/registry.hpp"

namespace profiler {

// prior on the between-hospital scale tau
struct PriorSpec {
  enum class Kind { gamma_on_precision, uniform_on_sd, half_normal_on_sd, fixed };
  Kind kind = Kind::gamma_on_precision;
  double shape = 0.001, rate = 0.001;  // gamma_on_precision: tau^-2 ~ Gamma(shape, rate)
  double lo = 0.0, hi = 1.5;           // uniform_on_sd: tau ~ Unif(lo, hi)
  double variance = 0.26;              // half_normal_on_sd: tau ~ half-Normal(variance)
  double tau = 0.0;                    // fixed

  static PriorSpec gamma_on_precision(double shape, double rate);
  static PriorSpec uniform_on_sd(double lo, double hi);
  static PriorSpec half_normal_on_sd(double variance);
  static PriorSpec fixed_tau(double tau);

  void validate() const;
  std::string label() const;
  std::string to_json() const;
  static PriorSpec from_json(const std::string& text);
};

// random-intercept logistic model: logit(p_ij) = b0_i + b1'x_ij,
// b0_i ~ N(mu, tau^2), vague normal hyperpriors on mu and each b1 component
struct HierSpec {
  PriorSpec tau_prior;
  double mu_prior_var = 1000.0;
  double beta_prior_var = 1000.0;
  bool standardize_age = false;  // sampler conditioning only; draws reported on original scale
  uint64_t seed = 1;

  bool tau_is_fixed() const { return tau_prior.kind == PriorSpec::Kind::fixed; }
  std::string to_json() const;
  static HierSpec from_json(const std::string& text);
};

struct HierParams {
  double mu = 0.0;
  double tau_sq = 1.0;
  std::array<double, kDesignCols> beta1{};
  std::vector<double> beta0;  // one intercept per hospital
};

// log posterior density with tau^2 as the variance variable; -inf outside the
// prior's support. With a fixed tau of zero the intercept collapses to mu.
double log_posterior(const HierParams& params, const HierSpec& spec, const Cohort& cohort);

// analytic gradient, same layout as HierParams (tau_sq slot holds d/d tau^2)
HierParams log_posterior_gradient(const HierParams& params, const HierSpec& spec,
                                  const Cohort& cohort);

// log density of tau^2 implied by the prior (change of variables included)
double log_prior_tau_sq(const PriorSpec& prior, double tau_sq);
// log density of tau itself (used by the sampler's random walk on log tau)
double log_prior_tau_sd(const PriorSpec& prior, double tau);

// tau from a plausible 97.5%:2.5% mortality-odds ratio a: exp(3.92 tau) = a
double elicit_tau_from_odds_range(double a);

// half-Normal prior whose 95th percentile is tau95
PriorSpec elicit_half_normal_from_upper(double tau95);

double half_normal_quantile(double variance, double q);
double half_normal_cdf(double variance, double x);

// median of |b0_i - b0_j| for a random pair of hospitals
enum class PairwiseMedianConvention { exact, paper };
double pairwise_diff_median(double tau,
                            PairwiseMedianConvention conv = PairwiseMedianConvention::exact);

}  // namespace profiler
