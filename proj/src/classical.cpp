#include "profiler/classical.hpp"

#include <cmath>
#include <cstring>

#include "profiler/kernels.hpp"
#include "profiler/linalg.hpp"
#include "profiler/stats.hpp"

namespace profiler {

double FixedFit::linear_predictor(const double* row) const {
  double eta = intercept;
  for (int k = 0; k < kDesignCols; ++k) eta += slopes[k] * row[k];
  return eta;
}

namespace {

// log-likelihood for the reduced design (intercept + active columns)
double loglik_at(std::span<const double> x, std::span<const uint8_t> y, int p,
                 std::span<const double> beta) {
  const long n = static_cast<long>(y.size());
  std::vector<double> eta(n);
  for (long j = 0; j < n; ++j) {
    const double* row = x.data() + j * p;
    double e = 0.0;
    for (int k = 0; k < p; ++k) e += row[k] * beta[k];
    eta[j] = e;
  }
  return kernels::bernoulli_loglik(eta, y);
}

}  // namespace

FixedFit fit_logistic_mle(const Cohort& cohort) {
  const int n = cohort.n_patients();
  const int deaths = cohort.total_deaths();
  if (deaths == 0 || deaths == n)
    fail(Errc::separation, "degenerate outcome: cohort needs at least one death and one survivor");

  // drop covariate columns with no variation
  std::array<uint8_t, kDesignCols> active{};
  int n_active = 0;
  for (int k = 0; k < kDesignCols; ++k) {
    const double first = cohort.design()[k];
    for (int j = 1; j < n; ++j)
      if (cohort.design()[j * kDesignCols + k] != first) {
        active[k] = 1;
        ++n_active;
        break;
      }
  }
  const int p = 1 + n_active;

  // reduced design with intercept column
  std::vector<double> x(static_cast<size_t>(n) * p);
  for (int j = 0; j < n; ++j) {
    x[j * p] = 1.0;
    int c = 1;
    for (int k = 0; k < kDesignCols; ++k)
      if (active[k]) x[j * p + c++] = cohort.design()[j * kDesignCols + k];
  }
  const auto y = cohort.deaths();

  std::vector<double> beta(p, 0.0);
  beta[0] = stats::logit(static_cast<double>(deaths) / n);
  double ll = loglik_at(x, y, p, beta);

  std::vector<double> grad(p), info(p * p), step(p);
  FixedFit fit;
  constexpr int kMaxIter = 50;
  constexpr double kGradTol = 1e-8;
  int iter = 0;
  for (; iter < kMaxIter; ++iter) {
    kernels::logistic_score_info(x, y, p, beta, grad, info);
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::fabs(g));
    if (gmax <= kGradTol) {
      fit.converged = true;
      break;
    }
    std::vector<double> l = info;
    if (!linalg::cholesky(l, p))
      fail(Errc::rank_deficient, "observed information is singular (collinear covariates)");
    std::copy(grad.begin(), grad.end(), step.begin());
    linalg::chol_solve(l, p, step);

    // step halving when the log-likelihood does not improve
    double scale = 1.0;
    std::vector<double> cand(p);
    double ll_new = -std::numeric_limits<double>::infinity();
    for (int h = 0; h < 10; ++h) {
      for (int k = 0; k < p; ++k) cand[k] = beta[k] + scale * step[k];
      ll_new = loglik_at(x, y, p, cand);
      if (ll_new >= ll) break;
      scale *= 0.5;
    }
    beta = cand;
    ll = ll_new;
    for (double b : beta)
      if (std::fabs(b) > 15.0)
        fail(Errc::separation, "coefficient diverged beyond |15| log-odds (separation)");
  }
  if (!fit.converged) {
    kernels::logistic_score_info(x, y, p, beta, grad, info);
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::fabs(g));
    fit.converged = gmax <= kGradTol;
    if (!fit.converged) fail(Errc::separation, "Newton iteration did not converge in 50 steps");
  }
  fit.iterations = iter;
  fit.loglik = ll;
  fit.active = active;
  fit.intercept = beta[0];
  {
    int c = 1;
    for (int k = 0; k < kDesignCols; ++k) fit.slopes[k] = active[k] ? beta[c++] : 0.0;
  }

  kernels::logistic_score_info(x, y, p, beta, grad, info);
  std::vector<double> l = info;
  if (!linalg::cholesky(l, p))
    fail(Errc::rank_deficient, "observed information is singular at the solution");
  const auto cov_red = linalg::chol_inverse(l, p);
  fit.covariance.assign(19 * 19, 0.0);
  std::vector<int> map(p);
  map[0] = 0;
  {
    int c = 1;
    for (int k = 0; k < kDesignCols; ++k)
      if (active[k]) map[c++] = k + 1;
  }
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b) fit.covariance[map[a] * 19 + map[b]] = cov_red[a * p + b];
  return fit;
}

std::vector<double> expected_rate_fixed(const FixedFit& fit, const Cohort& cohort) {
  std::vector<double> out(cohort.n_hospitals());
  for (int i = 0; i < cohort.n_hospitals(); ++i) {
    double s = 0.0;
    for (int j : cohort.rows_of(i))
      s += stats::expit(fit.linear_predictor(cohort.design_row_ptr(j)));
    out[i] = s / static_cast<double>(cohort.rows_of(i).size());
  }
  return out;
}

ZReport z_outliers(const FixedFit& fit, const Cohort& cohort, double threshold,
                   bool propagate_coef_uncertainty) {
  ZReport rep;
  rep.threshold = threshold;
  for (int i = 0; i < cohort.n_hospitals(); ++i) {
    const auto& rows = cohort.rows_of(i);
    const double ni = static_cast<double>(rows.size());
    double obs = 0.0, expd = 0.0, var = 0.0;
    std::vector<double> gbar(19, 0.0);
    for (int j : rows) {
      const double* xr = cohort.design_row_ptr(j);
      const double pj = stats::expit(fit.linear_predictor(xr));
      obs += cohort.deaths()[j];
      expd += pj;
      var += pj * (1.0 - pj);
      if (propagate_coef_uncertainty) {
        const double w = pj * (1.0 - pj);
        gbar[0] += w;
        for (int k = 0; k < kDesignCols; ++k) gbar[k + 1] += w * xr[k];
      }
    }
    obs /= ni;
    expd /= ni;
    var /= ni * ni;
    if (propagate_coef_uncertainty) {
      for (auto& g : gbar) g /= ni;
      double extra = 0.0;
      for (int a = 0; a < 19; ++a)
        for (int b = 0; b < 19; ++b) extra += gbar[a] * fit.covariance[a * 19 + b] * gbar[b];
      var += extra;
    }
    if (var <= 0.0)
      fail(Errc::zero_variance,
           "hospital " + cohort.hospital_ids()[i] + ": all fitted probabilities are 0 or 1");
    ZRow r;
    r.id = cohort.hospital_ids()[i];
    r.n = static_cast<int>(rows.size());
    r.observed = obs;
    r.expected = expd;
    r.z = (obs - expd) / std::sqrt(var);
    r.flag = r.z > threshold;
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

std::vector<OeRow> oe_standardized(const FixedFit& fit, const Cohort& cohort) {
  const double pooled = cohort.pooled_rate();
  const auto expected = expected_rate_fixed(fit, cohort);
  std::vector<OeRow> out;
  for (int i = 0; i < cohort.n_hospitals(); ++i) {
    const auto& rows = cohort.rows_of(i);
    OeRow r;
    r.id = cohort.hospital_ids()[i];
    r.n = static_cast<int>(rows.size());
    for (int j : rows) r.observed_deaths += cohort.deaths()[j];
    const double obs = static_cast<double>(r.observed_deaths) / r.n;
    const double scale = pooled / expected[i];
    r.rate_pct = 100.0 * obs * scale;
    const auto iv = stats::clopper_pearson(r.observed_deaths, r.n);
    r.lo_pct = 100.0 * iv.lo * scale;
    r.hi_pct = 100.0 * iv.hi * scale;
    r.flag = iv.lo > expected[i] || iv.hi < expected[i];
    out.push_back(std::move(r));
  }
  return out;
}

VariationIndices variation_indices(std::span<const double> rates, std::span<const int> volumes) {
  if (rates.size() < 2 || rates.size() != volumes.size())
    fail(Errc::invalid_input, "variation_indices: need >= 2 institutions with volumes");
  for (int v : volumes)
    if (v < 1) fail(Errc::invalid_input, "variation_indices: volumes must be >= 1");
  bool all_zero = true;
  for (double r : rates)
    if (r != 0.0) all_zero = false;
  if (all_zero) fail(Errc::degenerate_input, "variation_indices: every rate is zero");

  VariationIndices v;
  double rmin = rates[0], rmax = rates[0];
  for (double r : rates) {
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  if (rmin == 0.0) {
    v.eq_infinite = true;
    v.extremal_quotient = std::numeric_limits<double>::infinity();
  } else {
    v.extremal_quotient = rmax / rmin;
  }
  const double m = stats::mean(rates);
  v.cv = stats::sample_sd(rates) / m;
  double within = 0.0;
  for (size_t i = 0; i < rates.size(); ++i)
    within += rates[i] * (1.0 - rates[i]) / static_cast<double>(volumes[i]);
  within /= static_cast<double>(rates.size());
  v.scv = std::max(0.0, stats::sample_var(rates) - within);
  return v;
}

}  // namespace profiler
