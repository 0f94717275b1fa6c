#include "profiler/hiermodel.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"
#include "profiler/stats.hpp"

namespace profiler {

using nlohmann::json;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
}
}  // namespace

PriorSpec PriorSpec::gamma_on_precision(double shape, double rate) {
  PriorSpec p;
  p.kind = Kind::gamma_on_precision;
  p.shape = shape;
  p.rate = rate;
  p.validate();
  return p;
}

PriorSpec PriorSpec::uniform_on_sd(double lo, double hi) {
  PriorSpec p;
  p.kind = Kind::uniform_on_sd;
  p.lo = lo;
  p.hi = hi;
  p.validate();
  return p;
}

PriorSpec PriorSpec::half_normal_on_sd(double variance) {
  PriorSpec p;
  p.kind = Kind::half_normal_on_sd;
  p.variance = variance;
  p.validate();
  return p;
}

PriorSpec PriorSpec::fixed_tau(double tau) {
  PriorSpec p;
  p.kind = Kind::fixed;
  p.tau = tau;
  p.validate();
  return p;
}

void PriorSpec::validate() const {
  switch (kind) {
    case Kind::gamma_on_precision:
      if (!(shape > 0.0 && rate > 0.0))
        fail(Errc::invalid_input, "gamma prior needs shape > 0 and rate > 0");
      break;
    case Kind::uniform_on_sd:
      if (!(lo >= 0.0 && lo < hi))
        fail(Errc::invalid_input, "uniform prior needs 0 <= lo < hi");
      break;
    case Kind::half_normal_on_sd:
      if (!(variance > 0.0)) fail(Errc::invalid_input, "half-normal prior needs variance > 0");
      break;
    case Kind::fixed:
      if (!(tau >= 0.0)) fail(Errc::invalid_input, "fixed tau must be >= 0");
      break;
  }
}

std::string PriorSpec::label() const {
  char buf[96];
  switch (kind) {
    case Kind::gamma_on_precision:
      std::snprintf(buf, sizeof buf, "gamma(%g,%g)", shape, rate);
      break;
    case Kind::uniform_on_sd:
      std::snprintf(buf, sizeof buf, "uniform(%g,%g)", lo, hi);
      break;
    case Kind::half_normal_on_sd:
      std::snprintf(buf, sizeof buf, "half_normal(%g)", variance);
      break;
    case Kind::fixed:
      std::snprintf(buf, sizeof buf, "fixed(%g)", tau);
      break;
  }
  return buf;
}

namespace {

json prior_to_json_obj(const PriorSpec& p) {
  json j;
  switch (p.kind) {
    case PriorSpec::Kind::gamma_on_precision:
      j["kind"] = "gamma_on_precision";
      j["shape"] = p.shape;
      j["rate"] = p.rate;
      break;
    case PriorSpec::Kind::uniform_on_sd:
      j["kind"] = "uniform_on_sd";
      j["lo"] = p.lo;
      j["hi"] = p.hi;
      break;
    case PriorSpec::Kind::half_normal_on_sd:
      j["kind"] = "half_normal_on_sd";
      j["variance"] = p.variance;
      break;
    case PriorSpec::Kind::fixed:
      j["kind"] = "fixed";
      j["tau"] = p.tau;
      break;
  }
  return j;
}

PriorSpec prior_from_json_obj(const json& j) {
  if (!j.contains("kind")) fail(Errc::invalid_input, "prior: missing 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  try {
    if (kind == "gamma_on_precision")
      return PriorSpec::gamma_on_precision(j.at("shape").get<double>(),
                                           j.at("rate").get<double>());
    if (kind == "uniform_on_sd")
      return PriorSpec::uniform_on_sd(j.at("lo").get<double>(), j.at("hi").get<double>());
    if (kind == "half_normal_on_sd")
      return PriorSpec::half_normal_on_sd(j.at("variance").get<double>());
    if (kind == "fixed") return PriorSpec::fixed_tau(j.at("tau").get<double>());
  } catch (const json::exception& e) {
    fail(Errc::invalid_input, std::string("prior: ") + e.what());
  }
  fail(Errc::invalid_input, "prior: unknown kind '" + kind + "'");
}

}  // namespace

std::string PriorSpec::to_json() const { return prior_to_json_obj(*this).dump(); }

PriorSpec PriorSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail(Errc::invalid_input, std::string("prior json: ") + e.what());
  }
  return prior_from_json_obj(j);
}

std::string HierSpec::to_json() const {
  json j;
  j["prior"] = prior_to_json_obj(tau_prior);
  j["mu_prior_var"] = mu_prior_var;
  j["beta_prior_var"] = beta_prior_var;
  j["standardize_age"] = standardize_age;
  j["seed"] = seed;
  return j.dump();
}

HierSpec HierSpec::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail(Errc::invalid_input, std::string("spec json: ") + e.what());
  }
  HierSpec s;
  if (j.contains("prior")) s.tau_prior = prior_from_json_obj(j.at("prior"));
  if (j.contains("mu_prior_var")) s.mu_prior_var = j.at("mu_prior_var").get<double>();
  if (j.contains("beta_prior_var")) s.beta_prior_var = j.at("beta_prior_var").get<double>();
  if (j.contains("standardize_age")) s.standardize_age = j.at("standardize_age").get<bool>();
  if (j.contains("seed")) s.seed = j.at("seed").get<uint64_t>();
  return s;
}

double log_prior_tau_sq(const PriorSpec& prior, double tau_sq) {
  switch (prior.kind) {
    case PriorSpec::Kind::gamma_on_precision: {
      if (!(tau_sq > 0.0)) return kNegInf;
      // tau^-2 ~ Gamma(a,b)  =>  p(tau^2) = b^a/G(a) (tau^2)^{-a-1} exp(-b/tau^2)
      return prior.shape * std::log(prior.rate) - std::lgamma(prior.shape) -
             (prior.shape + 1.0) * std::log(tau_sq) - prior.rate / tau_sq;
    }
    case PriorSpec::Kind::uniform_on_sd: {
      const double tau = std::sqrt(tau_sq);
      if (!(tau > prior.lo && tau < prior.hi)) return kNegInf;
      // p(tau^2) = p(tau) |dtau/dtau^2| = 1/((hi-lo) 2 tau)
      return -std::log(prior.hi - prior.lo) - std::log(2.0 * tau);
    }
    case PriorSpec::Kind::half_normal_on_sd: {
      if (!(tau_sq > 0.0)) return kNegInf;
      const double tau = std::sqrt(tau_sq);
      return 0.5 * std::log(2.0 / (3.14159265358979323846 * prior.variance)) -
             tau_sq / (2.0 * prior.variance) - std::log(2.0 * tau);
    }
    case PriorSpec::Kind::fixed:
      return 0.0;
  }
  return kNegInf;
}

double log_prior_tau_sd(const PriorSpec& prior, double tau) {
  if (!(tau > 0.0)) return kNegInf;
  // density of tau = density of tau^2 times |d tau^2 / d tau| = 2 tau
  return log_prior_tau_sq(prior, tau * tau) + std::log(2.0 * tau);
}

double log_posterior(const HierParams& params, const HierSpec& spec, const Cohort& cohort) {
  const int I = cohort.n_hospitals();
  if (static_cast<int>(params.beta0.size()) != I)
    fail(Errc::invalid_input, "beta0 length must match hospital count");

  const bool fixed = spec.tau_is_fixed();
  const double tau_sq = fixed ? spec.tau_prior.tau * spec.tau_prior.tau : params.tau_sq;
  const bool collapse = fixed && spec.tau_prior.tau == 0.0;

  double lp = 0.0;
  if (!fixed) {
    lp = log_prior_tau_sq(spec.tau_prior, tau_sq);
    if (lp == kNegInf) return kNegInf;
  }

  const int n = cohort.n_patients();
  for (int j = 0; j < n; ++j) {
    const double* x = cohort.design_row_ptr(j);
    double eta = collapse ? params.mu : params.beta0[cohort.hospital_of(j)];
    for (int k = 0; k < kDesignCols; ++k) eta += params.beta1[k] * x[k];
    lp += cohort.deaths()[j] * eta - stats::log1pexp(eta);
  }

  if (!collapse) {
    if (!(tau_sq > 0.0)) return kNegInf;
    for (int i = 0; i < I; ++i) lp += log_normal_pdf(params.beta0[i], params.mu, tau_sq);
  }
  lp += log_normal_pdf(params.mu, 0.0, spec.mu_prior_var);
  for (int k = 0; k < kDesignCols; ++k)
    lp += log_normal_pdf(params.beta1[k], 0.0, spec.beta_prior_var);
  return lp;
}

HierParams log_posterior_gradient(const HierParams& params, const HierSpec& spec,
                                  const Cohort& cohort) {
  const int I = cohort.n_hospitals();
  if (static_cast<int>(params.beta0.size()) != I)
    fail(Errc::invalid_input, "beta0 length must match hospital count");
  const bool fixed = spec.tau_is_fixed();
  const double tau_sq = fixed ? spec.tau_prior.tau * spec.tau_prior.tau : params.tau_sq;
  const bool collapse = fixed && spec.tau_prior.tau == 0.0;

  HierParams g;
  g.mu = 0.0;
  g.tau_sq = 0.0;
  g.beta0.assign(I, 0.0);

  const int n = cohort.n_patients();
  for (int j = 0; j < n; ++j) {
    const double* x = cohort.design_row_ptr(j);
    const int h = cohort.hospital_of(j);
    double eta = collapse ? params.mu : params.beta0[h];
    for (int k = 0; k < kDesignCols; ++k) eta += params.beta1[k] * x[k];
    const double resid = cohort.deaths()[j] - stats::expit(eta);
    if (collapse)
      g.mu += resid;
    else
      g.beta0[h] += resid;
    for (int k = 0; k < kDesignCols; ++k) g.beta1[k] += resid * x[k];
  }
  for (int k = 0; k < kDesignCols; ++k) g.beta1[k] -= params.beta1[k] / spec.beta_prior_var;

  if (!collapse) {
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < I; ++i) {
      const double d = params.beta0[i] - params.mu;
      g.beta0[i] -= d / tau_sq;
      s1 += d;
      s2 += d * d;
    }
    g.mu += s1 / tau_sq;
    if (!fixed) {
      g.tau_sq = -0.5 * I / tau_sq + s2 / (2.0 * tau_sq * tau_sq);
      switch (spec.tau_prior.kind) {
        case PriorSpec::Kind::gamma_on_precision:
          g.tau_sq += -(spec.tau_prior.shape + 1.0) / tau_sq +
                      spec.tau_prior.rate / (tau_sq * tau_sq);
          break;
        case PriorSpec::Kind::uniform_on_sd:
          g.tau_sq += -0.5 / tau_sq;
          break;
        case PriorSpec::Kind::half_normal_on_sd:
          g.tau_sq += -0.5 / spec.tau_prior.variance - 0.5 / tau_sq;
          break;
        case PriorSpec::Kind::fixed:
          break;
      }
    }
  }
  g.mu -= params.mu / spec.mu_prior_var;
  return g;
}

double elicit_tau_from_odds_range(double a) {
  if (!(a > 1.0)) fail(Errc::bad_range, "odds range must exceed 1");
  return std::log(a) / 3.92;
}

PriorSpec elicit_half_normal_from_upper(double tau95) {
  if (!(tau95 > 0.0)) fail(Errc::bad_range, "tau upper point must be > 0");
  const double z = stats::norm_quantile(0.975);
  return PriorSpec::half_normal_on_sd((tau95 / z) * (tau95 / z));
}

double half_normal_quantile(double variance, double q) {
  return std::sqrt(variance) * stats::norm_quantile(0.5 * (1.0 + q));
}

double half_normal_cdf(double variance, double x) {
  if (x <= 0.0) return 0.0;
  return 2.0 * stats::norm_cdf(x / std::sqrt(variance)) - 1.0;
}

double pairwise_diff_median(double tau, PairwiseMedianConvention conv) {
  if (!(tau >= 0.0)) fail(Errc::invalid_input, "tau must be >= 0");
  if (conv == PairwiseMedianConvention::paper) return 1.09 * tau;
  // |N(0, 2 tau^2)| has median sqrt(2) tau Phi^-1(0.75)
  return std::sqrt(2.0) * tau * stats::norm_quantile(0.75);
}

}  // namespace profiler
