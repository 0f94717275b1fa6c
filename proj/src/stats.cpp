#include "profiler/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "profiler/errors.hpp"

namespace profiler::stats {

double norm_pdf(double x) { return 0.3989422804014327 * std::exp(-0.5 * x * x); }

double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

// Wichura (1988) algorithm AS 241, PPND16
double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    fail(Errc::invalid_input, "norm_quantile: p outside [0,1]");
  }
  const double q = p - 0.5;
  double r;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) *
                    r +
                4.5921953931549871457e+4) *
                   r +
               1.3731693765509461125e+4) *
                  r +
              1.9715909503065514427e+3) *
                 r +
             1.3314166789178437745e+2) *
                r +
            3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) *
                    r +
                2.1213794301586595867e+4) *
                   r +
               5.3941960214247511077e+3) *
                  r +
              6.8718700749205790830e+2) *
                 r +
             4.2313330701600911252e+1) *
                r +
            1.0);
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e+0) *
                  r +
              3.64784832476320460504e+0) *
                 r +
             5.76949722146069140550e+0) *
                r +
            4.63033784615654529590e+0) *
               r +
           1.42343711074968357734e+0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e+0) *
                r +
            2.05319162663775882187e+0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e+0) *
                r +
            5.46378491116411436990e+0) *
               r +
           6.65790464350110377720e+0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return q < 0.0 ? -val : val;
}

double lchoose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double binom_logpmf(int n, double p, int k) {
  if (p <= 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return k == n ? 0.0 : -std::numeric_limits<double>::infinity();
  return lchoose(n, k) + k * std::log(p) + (n - k) * std::log1p(-p);
}

namespace {

// Kahan-compensated sum of exp(logpmf) over an inclusive range
double tail_sum(int n, double p, int a, int b) {
  double s = 0.0, c = 0.0;
  for (int j = a; j <= b; ++j) {
    const double term = std::exp(binom_logpmf(n, p, j));
    const double y = term - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return std::min(1.0, s);
}

}  // namespace

BinomTail binomial_point_and_tail(int n, double p, int k) {
  if (n < 0 || k < 0 || k > n || p < 0.0 || p > 1.0)
    fail(Errc::invalid_input, "binomial_point_and_tail: need 0 <= k <= n, p in [0,1]");
  BinomTail r;
  r.point = std::exp(binom_logpmf(n, p, k));
  // sum the shorter side exactly, complement the other
  r.lower = tail_sum(n, p, 0, k);
  r.upper = k == 0 ? 1.0 : 1.0 - tail_sum(n, p, 0, k - 1);
  if (k > n / 2) {
    r.upper = tail_sum(n, p, k, n);
    r.lower = k == n ? 1.0 : 1.0 - tail_sum(n, p, k + 1, n);
  }
  return r;
}

Interval clopper_pearson(int k, int n, double conf) {
  if (n <= 0 || k < 0 || k > n) fail(Errc::invalid_input, "clopper_pearson: need 0 <= k <= n");
  const double alpha = 1.0 - conf;
  Interval iv{0.0, 1.0};
  if (k > 0) {
    // lower bound solves P(X >= k | p) = alpha/2
    double lo = 0.0, hi = static_cast<double>(k) / n;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (binomial_point_and_tail(n, mid, k).upper < alpha / 2.0)
        lo = mid;
      else
        hi = mid;
    }
    iv.lo = 0.5 * (lo + hi);
  }
  if (k < n) {
    // upper bound solves P(X <= k | p) = alpha/2
    double lo = static_cast<double>(k) / n, hi = 1.0;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (binomial_point_and_tail(n, mid, k).lower > alpha / 2.0)
        lo = mid;
      else
        hi = mid;
    }
    iv.hi = 0.5 * (lo + hi);
  }
  return iv;
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_var(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double sample_sd(std::span<const double> v) { return std::sqrt(sample_var(v)); }

double quantile(std::vector<double> v, double q) {
  if (v.empty()) fail(Errc::invalid_input, "quantile of empty sample");
  std::sort(v.begin(), v.end());
  if (q <= 0.0) return v.front();
  if (q >= 1.0) return v.back();
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto i = static_cast<size_t>(h);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (h - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

SummaryStat summarize_draws(std::span<const double> v) {
  std::vector<double> tmp(v.begin(), v.end());
  std::sort(tmp.begin(), tmp.end());
  SummaryStat s;
  s.mean = mean(v);
  auto at = [&](double q) {
    const double h = (static_cast<double>(tmp.size()) - 1.0) * q;
    const auto i = static_cast<size_t>(h);
    if (i + 1 >= tmp.size()) return tmp.back();
    return tmp[i] + (h - static_cast<double>(i)) * (tmp[i + 1] - tmp[i]);
  };
  s.median = at(0.5);
  s.lo = at(0.025);
  s.hi = at(0.975);
  return s;
}

double nearest_rank_percentile(std::vector<double> v, double pct) {
  if (v.empty()) fail(Errc::invalid_input, "percentile of empty sample");
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  auto rank = static_cast<size_t>(std::ceil(pct / 100.0 * n));
  rank = std::min(std::max<size_t>(rank, 1), v.size());
  return v[rank - 1];
}

double ks_uniform(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  double d = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    const double u = std::clamp(v[i], 0.0, 1.0);
    d = std::max(d, std::fabs(u - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - u));
  }
  return d;
}

}  // namespace profiler::stats
