#include "profiler/profiling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>

#include "json.hpp"

namespace profiler {

using nlohmann::json;

namespace {
constexpr uint64_t kTagReplication = 0x100000001ull;
constexpr uint64_t kTagPrediction = 0x100000002ull;

// nonzero design entries per patient row
struct SparseRows {
  std::vector<int> offset;  // n+1
  std::vector<int> col;
  std::vector<double> val;

  explicit SparseRows(const Cohort& c) {
    const int n = c.n_patients();
    offset.assign(n + 1, 0);
    for (int j = 0; j < n; ++j) {
      const double* x = c.design_row_ptr(j);
      int cnt = 0;
      for (int k = 0; k < kDesignCols; ++k)
        if (x[k] != 0.0) ++cnt;
      offset[j + 1] = offset[j] + cnt;
    }
    col.resize(offset[n]);
    val.resize(offset[n]);
    for (int j = 0, q = 0; j < n; ++j) {
      const double* x = c.design_row_ptr(j);
      for (int k = 0; k < kDesignCols; ++k)
        if (x[k] != 0.0) {
          col[q] = k;
          val[q] = x[k];
          ++q;
        }
    }
  }

  double dot(int j, const double* beta) const {
    double s = 0.0;
    for (int q = offset[j]; q < offset[j + 1]; ++q) s += beta[col[q]] * val[q];
    return s;
  }
};

std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

DrawMatrix DrawMatrix::from(const PosteriorDraws& draws, const Cohort& cohort) {
  DrawMatrix dm;
  dm.n_draws = draws.n_draws();
  dm.n_hosp = cohort.n_hospitals();
  dm.mu = draws.series("mu");
  dm.tau_sq = draws.series("tau_sq");
  dm.beta1.resize(static_cast<size_t>(dm.n_draws) * kDesignCols);
  for (int k = 0; k < kDesignCols; ++k) {
    const auto& s = draws.series("beta1[" + std::string(kDesignNames[k]) + "]");
    for (int d = 0; d < dm.n_draws; ++d)
      dm.beta1[static_cast<size_t>(d) * kDesignCols + k] = s[d];
  }
  dm.beta0.resize(static_cast<size_t>(dm.n_draws) * dm.n_hosp);
  for (int i = 0; i < dm.n_hosp; ++i) {
    const auto& s = draws.series("beta0[" + cohort.hospital_ids()[i] + "]");
    for (int d = 0; d < dm.n_draws; ++d)
      dm.beta0[static_cast<size_t>(d) * dm.n_hosp + i] = s[d];
  }
  return dm;
}

HospitalDrawStats hospital_draw_stats(const DrawMatrix& dm, const Cohort& cohort) {
  HospitalDrawStats out;
  out.n_draws = dm.n_draws;
  out.n_hosp = dm.n_hosp;
  out.num.assign(static_cast<size_t>(dm.n_draws) * dm.n_hosp, 0.0);
  out.den.assign(static_cast<size_t>(dm.n_draws) * dm.n_hosp, 0.0);
  const SparseRows rows(cohort);
  const int n = cohort.n_patients();
#pragma omp parallel for schedule(static)
  for (int d = 0; d < dm.n_draws; ++d) {
    const double* b1 = dm.beta1.data() + static_cast<size_t>(d) * kDesignCols;
    const double* b0 = dm.beta0.data() + static_cast<size_t>(d) * dm.n_hosp;
    const double mu = dm.mu[d];
    double* num = out.num.data() + static_cast<size_t>(d) * dm.n_hosp;
    double* den = out.den.data() + static_cast<size_t>(d) * dm.n_hosp;
    for (int j = 0; j < n; ++j) {
      const int h = cohort.hospital_of(j);
      const double xb = rows.dot(j, b1);
      num[h] += stats::expit(b0[h] + xb);
      den[h] += stats::expit(mu + xb);
    }
  }
  return out;
}

std::vector<stats::SummaryStat> expected_rate_hier(const PosteriorDraws& draws,
                                                   const Cohort& cohort) {
  const auto dm = DrawMatrix::from(draws, cohort);
  const auto hds = hospital_draw_stats(dm, cohort);
  std::vector<stats::SummaryStat> out(hds.n_hosp);
  std::vector<double> v(hds.n_draws);
  for (int i = 0; i < hds.n_hosp; ++i) {
    const double ni = static_cast<double>(cohort.rows_of(i).size());
    for (int d = 0; d < hds.n_draws; ++d) v[d] = 100.0 * hds.denominator(d, i) / ni;
    out[i] = stats::summarize_draws(v);
  }
  return out;
}

std::vector<RsmrSummary> risk_standardized_rate(const PosteriorDraws& draws, const Cohort& cohort,
                                                double anchor_pct) {
  if (!(anchor_pct > 0.0)) fail(Errc::invalid_input, "anchor rate must be positive");
  const auto dm = DrawMatrix::from(draws, cohort);
  const auto hds = hospital_draw_stats(dm, cohort);
  std::vector<RsmrSummary> out(hds.n_hosp);
  std::vector<double> ratio(hds.n_draws), rate(hds.n_draws);
  for (int i = 0; i < hds.n_hosp; ++i) {
    for (int d = 0; d < hds.n_draws; ++d) {
      ratio[d] = hds.numerator(d, i) / hds.denominator(d, i);
      rate[d] = ratio[d] * anchor_pct;
    }
    out[i].ratio = stats::summarize_draws(ratio);
    out[i].rate_pct = stats::summarize_draws(rate);
  }
  return out;
}

std::vector<double> excess_deaths(const HospitalDrawStats& hds) {
  std::vector<double> out(hds.n_hosp);
  for (int i = 0; i < hds.n_hosp; ++i) {
    double mratio = 0.0, mden = 0.0;
    for (int d = 0; d < hds.n_draws; ++d) {
      mratio += hds.numerator(d, i) / hds.denominator(d, i);
      mden += hds.denominator(d, i);
    }
    mratio /= hds.n_draws;
    mden /= hds.n_draws;
    out[i] = (mratio - 1.0) * mden;
  }
  return out;
}

ReplicationResult replication_pvalues(const PosteriorDraws& draws, const Cohort& cohort,
                                      const ReplicationOptions& opts) {
  const auto dm = DrawMatrix::from(draws, cohort);
  const SparseRows rows(cohort);
  const int I = cohort.n_hospitals();
  const int n = cohort.n_patients();

  std::vector<double> obs(I, 0.0);
  std::vector<int> ni(I, 0);
  for (int j = 0; j < n; ++j) {
    obs[cohort.hospital_of(j)] += cohort.deaths()[j];
    ++ni[cohort.hospital_of(j)];
  }
  for (int i = 0; i < I; ++i) obs[i] /= ni[i];

  std::vector<long> exceed(I, 0);
  std::vector<double> rep_sum(I, 0.0);
  std::vector<double> rep_rates(static_cast<size_t>(dm.n_draws) * I);
  const Rng root = Rng(opts.seed).stream(kTagReplication);

#pragma omp parallel
  {
    std::vector<long> exceed_local(I, 0);
    std::vector<double> sum_local(I, 0.0);
#pragma omp for schedule(static)
    for (int d = 0; d < dm.n_draws; ++d) {
      Rng rng = root.stream(d);
      const double* b1 = dm.beta1.data() + static_cast<size_t>(d) * kDesignCols;
      const double* b0 = dm.beta0.data() + static_cast<size_t>(d) * dm.n_hosp;
      const double tau = std::sqrt(std::max(dm.tau_sq[d], 0.0));
      std::vector<double> b0r(I);
      for (int i = 0; i < I; ++i)
        b0r[i] = opts.redraw_beta0 ? dm.mu[d] + tau * rng.normal() : b0[i];
      std::vector<int> deaths(I, 0);
      for (int j = 0; j < n; ++j) {
        const int h = cohort.hospital_of(j);
        const double pr = stats::expit(b0r[h] + rows.dot(j, b1));
        deaths[h] += rng.uniform() < pr ? 1 : 0;
      }
      for (int i = 0; i < I; ++i) {
        const double rate = static_cast<double>(deaths[i]) / ni[i];
        rep_rates[static_cast<size_t>(d) * I + i] = 100.0 * rate;
        if (rate >= obs[i]) ++exceed_local[i];
        sum_local[i] += rate;
      }
    }
#pragma omp critical
    for (int i = 0; i < I; ++i) {
      exceed[i] += exceed_local[i];
      rep_sum[i] += sum_local[i];
    }
  }

  ReplicationResult res;
  res.p.resize(I);
  res.mean_rep_rate_pct.resize(I);
  res.obs_rate_pct.resize(I);
  res.rep_rate_pct.resize(I);
  std::vector<double> v(dm.n_draws);
  for (int i = 0; i < I; ++i) {
    res.p[i] = static_cast<double>(exceed[i]) / dm.n_draws;
    res.mean_rep_rate_pct[i] = 100.0 * rep_sum[i] / dm.n_draws;
    res.obs_rate_pct[i] = 100.0 * obs[i];
    for (int d = 0; d < dm.n_draws; ++d) v[d] = rep_rates[static_cast<size_t>(d) * I + i];
    res.rep_rate_pct[i] = stats::summarize_draws(v);
  }
  return res;
}

ReplicationResult ppp_replication(const HierSpec& spec, const Cohort& cohort,
                                  const ChainConfig& cfg) {
  const auto draws = sample_hier(spec, cohort, cfg);
  return replication_pvalues(draws, cohort, {true, cfg.seed});
}

ReplicationResult ppp_fixed_tau(const HierSpec& spec, const Cohort& cohort,
                                const ChainConfig& cfg) {
  if (!spec.tau_is_fixed())
    fail(Errc::invalid_input, "ppp_fixed_tau requires a fixed-tau prior");
  const auto draws = sample_hier(spec, cohort, cfg);
  return replication_pvalues(draws, cohort, {true, cfg.seed});
}

CrossvalResult ppp_crossval(const HierSpec& spec, const Cohort& cohort, const ChainConfig& cfg) {
  const int I = cohort.n_hospitals();
  if (I < 3) fail(Errc::invalid_input, "cross-validation needs at least 3 hospitals");
  CrossvalResult res;
  res.p.assign(I, 0.0);
  res.mu_loo.resize(I);
  res.tau_sq_loo.resize(I);

  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < I; ++i) {
    try {
      std::vector<PatientRecord> keep;
      for (int j = 0; j < cohort.n_patients(); ++j)
        if (cohort.hospital_of(j) != i) keep.push_back(cohort.records()[j]);
      const Cohort sub = Cohort::from_records(std::move(keep));
      ChainConfig fold_cfg = cfg;
      fold_cfg.seed = cfg.seed + static_cast<uint64_t>(i) + 1;
      const auto draws = sample_hier(spec, sub, fold_cfg);
      res.mu_loo[i] = draws.summary("mu");
      res.tau_sq_loo[i] = draws.summary("tau_sq");

      // predict hospital i over its actual covariate rows
      const auto& rows_i = cohort.rows_of(i);
      const int ni = static_cast<int>(rows_i.size());
      double obs = 0.0;
      for (int j : rows_i) obs += cohort.deaths()[j];
      obs /= ni;

      const auto& mu = draws.series("mu");
      const auto& tau_sq = draws.series("tau_sq");
      std::vector<const std::vector<double>*> b1(kDesignCols);
      for (int k = 0; k < kDesignCols; ++k)
        b1[k] = &draws.series("beta1[" + std::string(kDesignNames[k]) + "]");
      const Rng root = Rng(fold_cfg.seed).stream(kTagPrediction);
      long exceed = 0;
      const int nd = draws.n_draws();
      for (int d = 0; d < nd; ++d) {
        Rng rng = root.stream(d);
        const double b0 = mu[d] + std::sqrt(std::max(tau_sq[d], 0.0)) * rng.normal();
        int deaths = 0;
        for (int j : rows_i) {
          const double* x = cohort.design_row_ptr(j);
          double eta = b0;
          for (int k = 0; k < kDesignCols; ++k) eta += (*b1[k])[d] * x[k];
          deaths += rng.uniform() < stats::expit(eta) ? 1 : 0;
        }
        if (static_cast<double>(deaths) / ni >= obs) ++exceed;
      }
      res.p[i] = static_cast<double>(exceed) / nd;
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return res;
}

std::vector<SensitivityRow> sensitivity_suite(const Cohort& cohort,
                                              const std::vector<PriorSpec>& priors,
                                              const ChainConfig& cfg) {
  if (priors.empty()) fail(Errc::invalid_input, "sensitivity: empty prior list");
  std::vector<SensitivityRow> rows(priors.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 1)
  for (size_t p = 0; p < priors.size(); ++p) {
    try {
      HierSpec spec;
      spec.tau_prior = priors[p];
      ChainConfig c = cfg;
      c.seed = cfg.seed + p;
      const auto draws = sample_hier(spec, cohort, c);
      rows[p].prior_label = priors[p].label();
      rows[p].tau_sq = draws.summary("tau_sq");
      rows[p].mu = draws.summary("mu");
      rows[p].converged = draws.converged;
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return rows;
}

std::vector<std::vector<ScatterPoint>> scatter_data(const PosteriorDraws& draws,
                                                    const Cohort& cohort) {
  const auto dm = DrawMatrix::from(draws, cohort);
  const auto hds = hospital_draw_stats(dm, cohort);
  std::vector<std::vector<ScatterPoint>> out(hds.n_hosp);
  for (int i = 0; i < hds.n_hosp; ++i) {
    const double ni = static_cast<double>(cohort.rows_of(i).size());
    out[i].resize(hds.n_draws);
    for (int d = 0; d < hds.n_draws; ++d)
      out[i][d] = {100.0 * hds.denominator(d, i) / ni, 100.0 * hds.numerator(d, i) / ni};
  }
  return out;
}

namespace {

int band_flag(double p, double extreme, double suspect) {
  if (p <= extreme || p >= 1.0 - extreme) return 2;
  if (p <= suspect || p >= 1.0 - suspect) return 1;
  return 0;
}

}  // namespace

ProfileReport build_profile_report(const Cohort& cohort, const HierSpec& spec,
                                   const ChainConfig& cfg, const ProfileOptions& opts,
                                   PosteriorDraws* out_draws) {
  ProfileReport rep;
  rep.pooled_pct = 100.0 * cohort.pooled_rate();
  rep.anchor_pct = opts.anchor_pct > 0.0 ? opts.anchor_pct : rep.pooled_pct;
  rep.prior_label = spec.tau_prior.label();
  rep.seed = cfg.seed;
  rep.extreme_cut = opts.extreme_cut;
  rep.suspect_cut = opts.suspect_cut;
  rep.practical_pp = opts.practical_pp;

  PosteriorDraws draws = sample_hier(spec, cohort, cfg);
  rep.converged = draws.converged;
  rep.notes = draws.notes;

  const auto dm = DrawMatrix::from(draws, cohort);
  const auto hds = hospital_draw_stats(dm, cohort);
  const auto expected = expected_rate_hier(draws, cohort);
  const auto rsmr = risk_standardized_rate(draws, cohort, rep.anchor_pct);
  const auto excess = excess_deaths(hds);
  const auto repl = replication_pvalues(draws, cohort, {opts.redraw_beta0, cfg.seed});

  std::optional<ReplicationResult> fixed_repl;
  if (opts.fixed_tau) {
    rep.has_fixed_tau = true;
    rep.fixed_tau_value = *opts.fixed_tau;
    HierSpec fixed_spec = spec;
    fixed_spec.tau_prior = PriorSpec::fixed_tau(*opts.fixed_tau);
    fixed_repl = ppp_fixed_tau(fixed_spec, cohort, cfg);
  }
  std::optional<CrossvalResult> cv;
  if (opts.crossval) {
    rep.has_crossval = true;
    cv = ppp_crossval(spec, cohort, cfg);
  }

  const auto summary = summarize(cohort);
  for (int i = 0; i < cohort.n_hospitals(); ++i) {
    HospitalProfile h;
    h.id = cohort.hospital_ids()[i];
    h.n = summary.rows[i].n;
    h.observed_pct = summary.rows[i].rate_pct;
    h.expected_pct = expected[i];
    h.rsmr = rsmr[i];
    h.excess = excess[i];
    h.p_replication = repl.p[i];
    h.rep_mean_rate_pct = repl.mean_rep_rate_pct[i];
    h.rep_diff_pp = h.observed_pct - h.rep_mean_rate_pct;
    h.practical = std::fabs(h.rep_diff_pp) >= opts.practical_pp;
    h.flag_replication = band_flag(repl.p[i], opts.extreme_cut, opts.suspect_cut);
    if (fixed_repl) {
      h.p_fixed_tau = fixed_repl->p[i];
      h.flag_fixed_tau = band_flag(*h.p_fixed_tau, opts.extreme_cut, opts.suspect_cut);
    }
    if (cv) {
      h.p_crossval = cv->p[i];
      h.flag_crossval = band_flag(*h.p_crossval, opts.extreme_cut, opts.suspect_cut);
      h.mu_loo = cv->mu_loo[i];
      h.tau_sq_loo = cv->tau_sq_loo[i];
    }
    rep.hospitals.push_back(std::move(h));
  }
  if (out_draws) *out_draws = std::move(draws);
  return rep;
}

namespace {

json summary_json(const stats::SummaryStat& s) {
  return json{{"mean", s.mean}, {"median", s.median}, {"p2.5", s.lo}, {"p97.5", s.hi}};
}

}  // namespace

std::string report_json(const ProfileReport& rep) {
  json j;
  j["anchor_pct"] = rep.anchor_pct;
  j["pooled_pct"] = rep.pooled_pct;
  j["prior"] = rep.prior_label;
  j["seed"] = rep.seed;
  j["converged"] = rep.converged;
  j["notes"] = rep.notes;
  j["cuts"] = {{"extreme", rep.extreme_cut},
               {"suspect", rep.suspect_cut},
               {"practical_pp", rep.practical_pp}};
  if (rep.has_fixed_tau) j["fixed_tau"] = rep.fixed_tau_value;
  json hs = json::array();
  for (const auto& h : rep.hospitals) {
    json e;
    e["id"] = h.id;
    e["n"] = h.n;
    e["observed_pct"] = h.observed_pct;
    e["expected_pct"] = summary_json(h.expected_pct);
    e["rsmr_pct"] = summary_json(h.rsmr.rate_pct);
    e["ratio"] = summary_json(h.rsmr.ratio);
    e["excess_deaths"] = h.excess;
    e["p_replication"] = *h.p_replication;
    e["rep_mean_rate_pct"] = h.rep_mean_rate_pct;
    e["rep_diff_pp"] = h.rep_diff_pp;
    e["practical"] = h.practical;
    e["flag_replication"] = h.flag_replication;
    if (h.p_fixed_tau) {
      e["p_fixed_tau"] = *h.p_fixed_tau;
      e["flag_fixed_tau"] = h.flag_fixed_tau;
    }
    if (h.p_crossval) {
      e["p_crossval"] = *h.p_crossval;
      e["flag_crossval"] = h.flag_crossval;
      e["mu_loo"] = summary_json(*h.mu_loo);
      e["tau_sq_loo"] = summary_json(*h.tau_sq_loo);
    }
    hs.push_back(std::move(e));
  }
  j["hospitals"] = hs;
  return j.dump(2) + "\n";
}

std::string report_csv(const ProfileReport& rep) {
  std::string out =
      "hospital_id,n,observed_pct,expected_pct,rsmr_mean,rsmr_median,rsmr_lo,rsmr_hi,"
      "excess_deaths,p_replication,p_fixed_tau,p_crossval,mu_loo_mean,tau_sq_loo_mean,"
      "flag_replication,flag_fixed_tau,flag_crossval\n";
  for (const auto& h : rep.hospitals) {
    out += h.id + ',' + std::to_string(h.n) + ',' + fmt(h.observed_pct) + ',' +
           fmt(h.expected_pct.mean) + ',' + fmt(h.rsmr.rate_pct.mean) + ',' +
           fmt(h.rsmr.rate_pct.median) + ',' + fmt(h.rsmr.rate_pct.lo) + ',' +
           fmt(h.rsmr.rate_pct.hi) + ',' + fmt(h.excess) + ',' + fmt(*h.p_replication) + ',';
    out += h.p_fixed_tau ? fmt(*h.p_fixed_tau) : "";
    out += ',';
    out += h.p_crossval ? fmt(*h.p_crossval) : "";
    out += ',';
    out += h.mu_loo ? fmt(h.mu_loo->mean) : "";
    out += ',';
    out += h.tau_sq_loo ? fmt(h.tau_sq_loo->mean) : "";
    out += ',' + std::to_string(h.flag_replication) + ',' +
           std::to_string(h.flag_fixed_tau) + ',' + std::to_string(h.flag_crossval) + '\n';
  }
  return out;
}

std::string caterpillar_csv(const ProfileReport& rep) {
  std::string out = "hospital_id,n,rsmr_mean,rsmr_median,rsmr_lo,rsmr_hi,anchor_pct\n";
  for (const auto& h : rep.hospitals)
    out += h.id + ',' + std::to_string(h.n) + ',' + fmt(h.rsmr.rate_pct.mean) + ',' +
           fmt(h.rsmr.rate_pct.median) + ',' + fmt(h.rsmr.rate_pct.lo) + ',' +
           fmt(h.rsmr.rate_pct.hi) + ',' + fmt(rep.anchor_pct) + '\n';
  return out;
}

std::string scatter_csv(const PosteriorDraws& draws, const Cohort& cohort) {
  const auto pts = scatter_data(draws, cohort);
  std::string out = "hospital_id,draw,expected_pct,predicted_pct\n";
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t d = 0; d < pts[i].size(); ++d)
      out += cohort.hospital_ids()[i] + ',' + std::to_string(d + 1) + ',' +
             fmt(pts[i][d].expected_pct) + ',' + fmt(pts[i][d].predicted_pct) + '\n';
  return out;
}

std::string sensitivity_csv(const std::vector<SensitivityRow>& rows) {
  std::string out =
      "prior,tau_sq_mean,tau_sq_median,tau_sq_lo,tau_sq_hi,mu_mean,mu_median,mu_lo,mu_hi\n";
  for (const auto& r : rows)
    out += r.prior_label + ',' + fmt(r.tau_sq.mean) + ',' + fmt(r.tau_sq.median) + ',' +
           fmt(r.tau_sq.lo) + ',' + fmt(r.tau_sq.hi) + ',' + fmt(r.mu.mean) + ',' +
           fmt(r.mu.median) + ',' + fmt(r.mu.lo) + ',' + fmt(r.mu.hi) + '\n';
  return out;
}

}  // namespace profiler
