#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "profiler/registry.hpp"

namespace profiler {

// fixed-effects logistic fit: logit(p_ij) = a0 + a1'x_ij
struct FixedFit {
  double intercept = 0.0;
  std::array<double, kDesignCols> slopes{};
  // 19x19 row-major inverse observed information; rows/cols of
  // constant (dropped) covariate columns are zero
  std::vector<double> covariance;
  std::array<uint8_t, kDesignCols> active{};  // columns that varied and were fit
  bool converged = false;
  int iterations = 0;
  double loglik = 0.0;

  double se_intercept() const { return covariance.empty() ? 0.0 : std::sqrt(covariance[0]); }
  double se_slope(int k) const {
    return covariance.empty() ? 0.0 : std::sqrt(covariance[(k + 1) * 19 + (k + 1)]);
  }
  double linear_predictor(const double* row) const;
};

// damped Newton on the log-likelihood; constant covariate columns are dropped
// (coefficient pinned at zero) so intercept-only cohorts are fit directly
FixedFit fit_logistic_mle(const Cohort& cohort);

// per-hospital mean of fitted probabilities (fractions)
std::vector<double> expected_rate_fixed(const FixedFit& fit, const Cohort& cohort);

struct ZRow {
  std::string id;
  int n = 0;
  double observed = 0.0;  // fraction
  double expected = 0.0;  // fraction
  double z = 0.0;
  bool flag = false;
};

struct ZReport {
  std::vector<ZRow> rows;
  double threshold = 1.645;
};

// z_i = (obs - exp) / sd, variance = sum p(1-p)/n^2 treating coefficients as
// fixed; propagate_coef_uncertainty adds the delta-method term g'Cov g
ZReport z_outliers(const FixedFit& fit, const Cohort& cohort, double threshold = 1.645,
                   bool propagate_coef_uncertainty = false);

struct OeRow {
  std::string id;
  int n = 0;
  int observed_deaths = 0;
  double rate_pct = 0.0;  // (obs/exp) * pooled * 100
  double lo_pct = 0.0;
  double hi_pct = 0.0;
  bool flag = false;  // interval excludes the pooled rate
};

std::vector<OeRow> oe_standardized(const FixedFit& fit, const Cohort& cohort);

struct VariationIndices {
  double extremal_quotient = 0.0;
  bool eq_infinite = false;  // min rate was zero
  double cv = 0.0;
  double scv = 0.0;
};

// rates are fractions; volumes give the within-institution binomial variance
VariationIndices variation_indices(std::span<const double> rates, std::span<const int> volumes);

}  // namespace profiler
