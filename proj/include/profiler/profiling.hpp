#pragma once

#include <optional>
#include <string>
#include <vector>

#include "profiler/sampler.hpp"

namespace profiler {

// posterior draws unpacked into flat arrays, draw-major
struct DrawMatrix {
  int n_draws = 0;
  int n_hosp = 0;
  std::vector<double> mu, tau_sq;  // n_draws
  std::vector<double> beta1;       // n_draws x 18
  std::vector<double> beta0;       // n_draws x I

  static DrawMatrix from(const PosteriorDraws& draws, const Cohort& cohort);
};

// per-draw numerator and denominator of the standardization ratio, on the
// expected-death-count scale: num = sum_j expit(b0_i + b1'x), den with mu
struct HospitalDrawStats {
  int n_draws = 0;
  int n_hosp = 0;
  std::vector<double> num, den;  // n_draws x I

  double numerator(int d, int i) const { return num[static_cast<size_t>(d) * n_hosp + i]; }
  double denominator(int d, int i) const { return den[static_cast<size_t>(d) * n_hosp + i]; }
};

HospitalDrawStats hospital_draw_stats(const DrawMatrix& dm, const Cohort& cohort);

// per-hospital posterior summary of the case-mix expected rate (percent)
std::vector<stats::SummaryStat> expected_rate_hier(const PosteriorDraws& draws,
                                                   const Cohort& cohort);

struct RsmrSummary {
  stats::SummaryStat rate_pct;  // ratio times the anchor
  stats::SummaryStat ratio;
};

std::vector<RsmrSummary> risk_standardized_rate(const PosteriorDraws& draws, const Cohort& cohort,
                                                double anchor_pct);

// (posterior mean ratio - 1) times posterior mean expected deaths under
// state-level coefficients; negative values are additional survivors
std::vector<double> excess_deaths(const HospitalDrawStats& hds);

struct ReplicationOptions {
  bool redraw_beta0 = true;  // false reuses each hospital's sampled intercept
  uint64_t seed = 1;
};

struct ReplicationResult {
  std::vector<double> p;                        // P(replicated rate >= observed), ties exceed
  std::vector<double> mean_rep_rate_pct;        // mean replicated mortality rate
  std::vector<stats::SummaryStat> rep_rate_pct; // replicated-rate distribution
  std::vector<double> obs_rate_pct;
};

// replicates reuse the observed covariate rows and hospital sizes exactly
ReplicationResult replication_pvalues(const PosteriorDraws& draws, const Cohort& cohort,
                                      const ReplicationOptions& opts);

// convenience wrappers that run their own fit
ReplicationResult ppp_replication(const HierSpec& spec, const Cohort& cohort,
                                  const ChainConfig& cfg);
// spec must carry a fixed tau ("in-control" analysis; mu and beta1 estimated)
ReplicationResult ppp_fixed_tau(const HierSpec& spec, const Cohort& cohort,
                                const ChainConfig& cfg);

struct CrossvalResult {
  std::vector<double> p;
  std::vector<stats::SummaryStat> mu_loo;
  std::vector<stats::SummaryStat> tau_sq_loo;
};

// drop each hospital, refit (fold f reseeds at seed + f + 1), and predict the
// held-out hospital's mortality over its actual covariate rows
CrossvalResult ppp_crossval(const HierSpec& spec, const Cohort& cohort, const ChainConfig& cfg);

struct SensitivityRow {
  std::string prior_label;
  stats::SummaryStat tau_sq;
  stats::SummaryStat mu;
  bool converged = true;
};

// one fit per prior; prior p reseeds at seed + p so a single-prior list
// reproduces a direct run
std::vector<SensitivityRow> sensitivity_suite(const Cohort& cohort,
                                              const std::vector<PriorSpec>& priors,
                                              const ChainConfig& cfg);

struct ScatterPoint {
  double expected_pct, predicted_pct;
};

// per hospital, per draw: x = denominator/n_i, y = numerator/n_i (percent)
std::vector<std::vector<ScatterPoint>> scatter_data(const PosteriorDraws& draws,
                                                    const Cohort& cohort);

struct HospitalProfile {
  std::string id;
  int n = 0;
  double observed_pct = 0.0;
  stats::SummaryStat expected_pct;  // Eq. 6 posterior summary
  RsmrSummary rsmr;
  double excess = 0.0;
  std::optional<double> p_replication, p_fixed_tau, p_crossval;
  double rep_mean_rate_pct = 0.0, rep_diff_pp = 0.0;
  bool practical = false;  // replication difference at least the practical cut
  // 0 = in band, 1 = suspect, 2 = extreme
  int flag_replication = 0, flag_fixed_tau = 0, flag_crossval = 0;
  std::optional<stats::SummaryStat> mu_loo, tau_sq_loo;
};

struct ProfileReport {
  std::vector<HospitalProfile> hospitals;
  double anchor_pct = 0.0;
  double pooled_pct = 0.0;
  std::string prior_label;
  uint64_t seed = 0;
  bool converged = true;
  std::vector<std::string> notes;
  double extreme_cut = 0.01, suspect_cut = 0.05, practical_pp = 1.0;
  bool has_fixed_tau = false, has_crossval = false;
  double fixed_tau_value = 0.0;
};

struct ProfileOptions {
  double anchor_pct = 0.0;  // <= 0 means use the cohort's pooled rate
  bool crossval = false;
  std::optional<double> fixed_tau;
  double extreme_cut = 0.01;
  double suspect_cut = 0.05;
  double practical_pp = 1.0;
  bool redraw_beta0 = true;
};

ProfileReport build_profile_report(const Cohort& cohort, const HierSpec& spec,
                                   const ChainConfig& cfg, const ProfileOptions& opts,
                                   PosteriorDraws* out_draws = nullptr);

std::string report_json(const ProfileReport& report);
std::string report_csv(const ProfileReport& report);
std::string caterpillar_csv(const ProfileReport& report);
std::string scatter_csv(const PosteriorDraws& draws, const Cohort& cohort);
std::string sensitivity_csv(const std::vector<SensitivityRow>& rows);

}  // namespace profiler
