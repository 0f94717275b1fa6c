#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace profiler::stats {

inline double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// log(1 + exp(x)) without overflow
inline double log1pexp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double norm_pdf(double x);
double norm_cdf(double x);
// inverse standard normal CDF (Wichura AS241), p in (0,1)
double norm_quantile(double p);

double lchoose(int n, int k);
double binom_logpmf(int n, double p, int k);

struct BinomTail {
  double point;  // P(X = k)
  double upper;  // P(X >= k)
  double lower;  // P(X <= k)
};
// exact, each pmf term computed in log space, tails summed with compensation
BinomTail binomial_point_and_tail(int n, double p, int k);

struct Interval {
  double lo, hi;
};
// exact (Clopper-Pearson) interval for a binomial proportion
Interval clopper_pearson(int k, int n, double conf = 0.95);

double mean(std::span<const double> v);
double sample_sd(std::span<const double> v);
double sample_var(std::span<const double> v);

// linear-interpolation quantile (R type 7) on an unsorted copy
double quantile(std::vector<double> v, double q);
double median(std::vector<double> v);

struct SummaryStat {
  double mean = 0, median = 0, lo = 0, hi = 0;  // lo/hi = 2.5/97.5 percentiles
};
SummaryStat summarize_draws(std::span<const double> v);

// nearest-rank percentile: value at index ceil(pct/100 * n) of the sorted sample
double nearest_rank_percentile(std::vector<double> v, double pct);

// Kolmogorov distance between the empirical CDF of v and Uniform(0,1)
double ks_uniform(std::vector<double> v);

}  // namespace profiler::stats
