#include "profiler/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"
#include "profiler/classical.hpp"
#include "profiler/composite.hpp"
#include "profiler/profiling.hpp"
#include "profiler/registry.hpp"

namespace profiler::cli {

namespace fs = std::filesystem;
using nlohmann::json;

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::invalid_input, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// collects inputs/outputs and writes manifest.json last
class Manifest {
 public:
  Manifest(std::string command, fs::path out_dir)
      : command_(std::move(command)), out_dir_(std::move(out_dir)) {
    fs::create_directories(out_dir_);
  }

  void input(const std::string& path) {
    inputs_.push_back({{"path", path}, {"fnv1a64", hex64(fnv1a64(read_file(path)))}});
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = out_dir_ / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(Errc::invalid_input, "cannot write " + p.string());
    out << content;
    outputs_.push_back({{"path", name}, {"fnv1a64", hex64(fnv1a64(content))}});
  }

  void finish(const json& config) {
    json m;
    m["command"] = command_;
    m["config"] = config;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    std::ofstream out(out_dir_ / "manifest.json", std::ios::binary);
    out << m.dump(2) << "\n";
  }

 private:
  std::string command_;
  fs::path out_dir_;
  json inputs_ = json::array();
  json outputs_ = json::array();
};

void apply_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

struct RunSettings {
  ChainConfig chain;
  HierSpec spec;
  ProfileOptions prof;
};

// config-file fields, overridden by explicit CLI flags where those exist
RunSettings load_settings(const CommonOpts& opts) {
  RunSettings s;
  if (!opts.config_path.empty()) {
    json j;
    try {
      j = json::parse(read_file(opts.config_path));
    } catch (const json::exception& e) {
      fail(Errc::invalid_input, opts.config_path + ": " + e.what());
    }
    if (j.contains("burn_in")) s.chain.burn_in = j.at("burn_in").get<int>();
    if (j.contains("keep")) s.chain.keep = j.at("keep").get<int>();
    if (j.contains("thin")) s.chain.thin = j.at("thin").get<int>();
    if (j.contains("chains")) s.chain.chains = j.at("chains").get<int>();
    if (j.contains("adapt_window")) s.chain.adapt_window = j.at("adapt_window").get<int>();
    if (j.contains("target_accept")) s.chain.target_accept = j.at("target_accept").get<double>();
    if (j.contains("joint_beta1")) s.chain.joint_beta1 = j.at("joint_beta1").get<bool>();
    if (j.contains("seed")) s.chain.seed = j.at("seed").get<uint64_t>();
    if (j.contains("prior")) s.spec = HierSpec::from_json(json{{"prior", j.at("prior")}}.dump());
    if (j.contains("standardize_age")) s.spec.standardize_age = j.at("standardize_age").get<bool>();
    if (j.contains("extreme_cut")) s.prof.extreme_cut = j.at("extreme_cut").get<double>();
    if (j.contains("suspect_cut")) s.prof.suspect_cut = j.at("suspect_cut").get<double>();
    if (j.contains("practical_pp")) s.prof.practical_pp = j.at("practical_pp").get<double>();
    if (j.contains("redraw_beta0")) s.prof.redraw_beta0 = j.at("redraw_beta0").get<bool>();
  }
  if (opts.seed_given || opts.config_path.empty()) s.chain.seed = opts.seed;
  s.spec.seed = s.chain.seed;
  return s;
}

json chain_json(const ChainConfig& c) {
  return json{{"burn_in", c.burn_in},       {"keep", c.keep},
              {"thin", c.thin},             {"chains", c.chains},
              {"seed", c.seed},             {"adapt_window", c.adapt_window},
              {"target_accept", c.target_accept}, {"joint_beta1", c.joint_beta1}};
}

std::string zscore_csv(const ZReport& z) {
  std::string out = "hospital_id,n,observed,expected,statistic,lower,upper,flag\n";
  for (const auto& r : z.rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%d,%.10g,%.10g,%.10g,,,%d\n", r.id.c_str(), r.n,
                  r.observed, r.expected, r.z, r.flag ? 1 : 0);
    out += buf;
  }
  return out;
}

std::string oe_csv(const std::vector<OeRow>& rows, const std::vector<double>& expected) {
  std::string out = "hospital_id,n,observed,expected,statistic,lower,upper,flag\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n", r.id.c_str(), r.n,
                  static_cast<double>(r.observed_deaths) / r.n, expected[i], r.rate_pct, r.lo_pct,
                  r.hi_pct, r.flag ? 1 : 0);
    out += buf;
  }
  return out;
}

int input_error(const std::exception& e) {
  std::cerr << "error: " << e.what() << "\n";
  return kInputError;
}

}  // namespace

int cmd_simulate(const SimulateOpts& opts) {
  try {
    apply_threads(opts.threads);
    auto targets = CalibrationTargets::load_json(opts.targets_path);
    const auto coef = Coefficients::load_json(opts.coef_path);
    if (opts.volume_override > 0)
      for (auto& h : targets.hospitals) {
        const double scale = static_cast<double>(opts.volume_override) / h.volume;
        h.deaths = std::min(opts.volume_override,
                            static_cast<int>(std::lround(h.deaths * scale)));
        h.volume = opts.volume_override;
      }
    auto [cohort, meta] = synthesize_cohort(targets, coef, opts.seed);

    Manifest man("simulate", opts.out_dir);
    man.input(opts.targets_path);
    man.input(opts.coef_path);
    man.write("cohort.csv", to_csv(cohort));
    man.write("generator_meta.json", meta.to_json());
    json cfg{{"seed", opts.seed},
             {"targets", opts.targets_path},
             {"coefficients", opts.coef_path},
             {"volume_override", opts.volume_override}};
    man.finish(cfg);
    return kOk;
  } catch (const Error& e) {
    return input_error(e);
  } catch (const std::exception& e) {
    return input_error(e);
  }
}

int cmd_profile(const ProfileOpts& opts) {
  try {
    apply_threads(opts.threads);
    const Cohort cohort = ingest_csv(opts.cohort_path);
    RunSettings s = load_settings(opts);
    if (opts.tau_fixed) s.prof.fixed_tau = opts.tau_fixed;
    s.prof.anchor_pct = opts.anchor_pct;
    s.prof.crossval = opts.crossval;

    PosteriorDraws draws;
    const ProfileReport rep = build_profile_report(cohort, s.spec, s.chain, s.prof, &draws);

    const FixedFit fit = fit_logistic_mle(cohort);
    const auto z = z_outliers(fit, cohort);
    const auto oe = oe_standardized(fit, cohort);
    const auto expected = expected_rate_fixed(fit, cohort);

    Manifest man("profile", opts.out_dir);
    man.input(opts.cohort_path);
    if (!opts.config_path.empty()) man.input(opts.config_path);
    man.write("report.json", report_json(rep));
    man.write("report.csv", report_csv(rep));
    man.write("caterpillar.csv", caterpillar_csv(rep));
    man.write("scatter.csv", scatter_csv(draws, cohort));
    man.write("zscore.csv", zscore_csv(z));
    man.write("oe.csv", oe_csv(oe, expected));
    man.write("sampler_summary.json", draws_summary_json(draws));
    if (opts.emit_draws) {
      const std::string draws_path = (fs::path(opts.out_dir) / "draws.csv").string();
      export_draws_csv(draws, draws_path);
      man.write("draws.csv", read_file(draws_path));
    }
    json cfg = chain_json(s.chain);
    cfg["prior"] = json::parse(s.spec.tau_prior.to_json());
    cfg["anchor_pct"] = rep.anchor_pct;
    cfg["crossval"] = opts.crossval;
    if (s.prof.fixed_tau) cfg["tau_fixed"] = *s.prof.fixed_tau;
    cfg["extreme_cut"] = s.prof.extreme_cut;
    cfg["suspect_cut"] = s.prof.suspect_cut;
    cfg["practical_pp"] = s.prof.practical_pp;
    cfg["redraw_beta0"] = s.prof.redraw_beta0;
    cfg["converged"] = rep.converged;
    man.finish(cfg);
    if (!rep.converged) {
      std::cerr << "warning: sampler did not converge; outputs are marked accordingly\n";
      return kNonConverged;
    }
    return kOk;
  } catch (const Error& e) {
    return input_error(e);
  } catch (const std::exception& e) {
    return input_error(e);
  }
}

int cmd_sensitivity(const SensitivityOpts& opts) {
  try {
    apply_threads(opts.threads);
    const Cohort cohort = ingest_csv(opts.cohort_path);
    RunSettings s = load_settings(opts);

    json pj;
    try {
      pj = json::parse(read_file(opts.priors_path));
    } catch (const json::exception& e) {
      fail(Errc::invalid_input, opts.priors_path + ": " + e.what());
    }
    if (pj.is_object() && pj.contains("priors")) pj = pj.at("priors");
    if (!pj.is_array() || pj.empty())
      fail(Errc::invalid_input, opts.priors_path + ": expected a non-empty prior list");
    std::vector<PriorSpec> priors;
    for (const auto& p : pj) priors.push_back(PriorSpec::from_json(p.dump()));

    const auto rows = sensitivity_suite(cohort, priors, s.chain);

    Manifest man("sensitivity", opts.out_dir);
    man.input(opts.cohort_path);
    man.input(opts.priors_path);
    if (!opts.config_path.empty()) man.input(opts.config_path);
    man.write("sensitivity.csv", sensitivity_csv(rows));
    json cfg = chain_json(s.chain);
    cfg["priors"] = pj;
    bool ok = true;
    for (const auto& r : rows) ok = ok && r.converged;
    cfg["converged"] = ok;
    man.finish(cfg);
    if (!ok) {
      std::cerr << "warning: at least one sensitivity fit did not converge\n";
      return kNonConverged;
    }
    return kOk;
  } catch (const Error& e) {
    return input_error(e);
  } catch (const std::exception& e) {
    return input_error(e);
  }
}

int cmd_composite(const CompositeOpts& opts) {
  try {
    apply_threads(opts.threads);
    RunSettings s = load_settings(opts);
    Manifest man("composite", opts.out_dir);
    json cfg{{"model", opts.model}, {"seed", s.chain.seed}};

    if (opts.model == "pooled") {
      MeasurePanel panel;
      if (!opts.panel_path.empty()) {
        panel = MeasurePanel::from_csv(opts.panel_path);
        man.input(opts.panel_path);
      } else if (!opts.patient_path.empty()) {
        panel = panel_from_patients(PatientMeasures::from_csv(opts.patient_path));
        man.input(opts.patient_path);
      } else {
        fail(Errc::invalid_input, "pooled composite needs --panel or --patients");
      }
      man.write("composite.json", composite_report_json(panel, pooled_composite(panel)));
      man.finish(cfg);
      return kOk;
    }
    if (opts.model == "allornone") {
      if (opts.patient_path.empty())
        fail(Errc::invalid_input, "all-or-none scoring needs --patients");
      const auto pm = PatientMeasures::from_csv(opts.patient_path);
      man.input(opts.patient_path);
      const auto res = all_or_none(pm);
      json j;
      j["kind"] = "all_or_none";
      json hs = json::array();
      for (size_t i = 0; i < pm.hospitals.size(); ++i) {
        json e{{"id", pm.hospitals[i]}, {"n_scored", res.n_scored[i]}};
        e["rate"] = res.rate[i] ? json(*res.rate[i]) : json();
        hs.push_back(std::move(e));
      }
      j["hospitals"] = hs;
      man.write("composite.json", j.dump(2) + "\n");
      man.finish(cfg);
      return kOk;
    }
    if (opts.model == "rasch" || opts.model == "2pl") {
      if (opts.panel_path.empty()) fail(Errc::invalid_input, "IRT fits need --panel");
      const auto panel = MeasurePanel::from_csv(opts.panel_path);
      man.input(opts.panel_path);
      const IrtKind kind = opts.model == "rasch" ? IrtKind::rasch : IrtKind::two_pl;
      const IrtFit fit = fit_irt(panel, kind, s.chain);
      man.write("composite.json", irt_report_json(fit, panel));
      std::vector<double> grid;
      for (double t = -3.0; t <= 3.0001; t += 0.1) grid.push_back(t);
      man.write("icc.csv", icc_csv(fit, grid));
      cfg["chain"] = chain_json(s.chain);
      cfg["converged"] = fit.draws.converged;
      man.finish(cfg);
      if (!fit.draws.converged) {
        std::cerr << "warning: IRT sampler did not converge\n";
        return kNonConverged;
      }
      return kOk;
    }
    fail(Errc::invalid_input, "unknown composite model '" + opts.model + "'");
  } catch (const Error& e) {
    return input_error(e);
  } catch (const std::exception& e) {
    return input_error(e);
  }
}

int cmd_classical(const ClassicalOpts& opts) {
  try {
    apply_threads(opts.threads);
    const Cohort cohort = ingest_csv(opts.cohort_path);
    const FixedFit fit = fit_logistic_mle(cohort);
    const auto z = z_outliers(fit, cohort, opts.threshold);
    const auto oe = oe_standardized(fit, cohort);
    const auto expected = expected_rate_fixed(fit, cohort);
    const auto summary = summarize(cohort);

    std::vector<double> rates;
    std::vector<int> volumes;
    for (const auto& r : summary.rows) {
      rates.push_back(r.rate_pct / 100.0);
      volumes.push_back(r.n);
    }
    const auto vi = variation_indices(rates, volumes);

    Manifest man("classical", opts.out_dir);
    man.input(opts.cohort_path);
    std::string sc = "hospital_id,n,deaths,rate_pct\n";
    for (const auto& r : summary.rows) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%s,%d,%d,%.10g\n", r.id.c_str(), r.n, r.deaths, r.rate_pct);
      sc += buf;
    }
    {
      char buf[96];
      std::snprintf(buf, sizeof buf, "all,%d,%d,%.10g\n", summary.total.n, summary.total.deaths,
                    summary.total.rate_pct);
      sc += buf;
    }
    man.write("summary.csv", sc);
    man.write("zscore.csv", zscore_csv(z));
    man.write("oe.csv", oe_csv(oe, expected));
    json vj{{"extremal_quotient", vi.eq_infinite ? json() : json(vi.extremal_quotient)},
            {"eq_infinite", vi.eq_infinite},
            {"cv", vi.cv},
            {"scv", vi.scv}};
    man.write("variation.json", vj.dump(2) + "\n");
    json cfg{{"seed", opts.seed}, {"threshold", opts.threshold}};
    man.finish(cfg);
    return kOk;
  } catch (const Error& e) {
    return input_error(e);
  } catch (const std::exception& e) {
    return input_error(e);
  }
}

}  // namespace profiler::cli
