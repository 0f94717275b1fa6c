#include "profiler/composite.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace profiler {

using nlohmann::json;

void MeasurePanel::validate() const {
  if (hospitals.empty() || measures.empty())
    fail(Errc::invalid_input, "panel: needs at least one hospital and one measure");
  if (y.size() != hospitals.size() * measures.size() || n.size() != y.size())
    fail(Errc::invalid_input, "panel: count matrices do not match dimensions");
  for (int i = 0; i < I(); ++i)
    for (int k = 0; k < K(); ++k) {
      if (nn(i, k) < 0 || yy(i, k) < 0 || yy(i, k) > nn(i, k))
        fail(Errc::invalid_input, "panel: need 0 <= Y <= N at hospital " + hospitals[i] +
                                      ", measure " + measures[k]);
    }
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  for (size_t i = 0; i <= line.size(); ++i)
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  return out;
}

int parse_int(std::string_view f, const std::string& what) {
  int v = 0;
  auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || p != f.data() + f.size())
    fail(Errc::invalid_input, what + ": not an integer: '" + std::string(f) + "'");
  return v;
}

std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
int index_of(std::vector<std::string>& names, const T& name) {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  names.push_back(std::string(name));
  return static_cast<int>(names.size()) - 1;
}

}  // namespace

MeasurePanel MeasurePanel::parse_csv(std::string_view text) {
  MeasurePanel panel;
  std::map<std::pair<int, int>, std::pair<int, int>> cells;
  size_t pos = 0;
  int lineno = 0;
  bool header = false;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++lineno;
    if (!header) {
      if (line != "hospital_id,measure_id,numerator,denominator")
        fail(Errc::invalid_input, "panel csv: bad header");
      header = true;
      continue;
    }
    if (line.empty()) {
      if (pos > text.size()) break;
      continue;
    }
    auto f = split(line);
    if (f.size() != 4)
      fail(Errc::invalid_input, "panel csv row " + std::to_string(lineno - 1) + ": need 4 fields");
    const int i = index_of(panel.hospitals, f[0]);
    const int k = index_of(panel.measures, f[1]);
    const int num = parse_int(f[2], "numerator");
    const int den = parse_int(f[3], "denominator");
    cells[{i, k}] = {num, den};
  }
  if (panel.hospitals.empty()) fail(Errc::invalid_input, "panel csv: no rows");
  panel.y.assign(panel.hospitals.size() * panel.measures.size(), 0);
  panel.n.assign(panel.hospitals.size() * panel.measures.size(), 0);
  for (const auto& [key, val] : cells) {
    panel.y[static_cast<size_t>(key.first) * panel.measures.size() + key.second] = val.first;
    panel.n[static_cast<size_t>(key.first) * panel.measures.size() + key.second] = val.second;
  }
  panel.validate();
  return panel;
}

MeasurePanel MeasurePanel::from_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::invalid_input, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

PooledComposite pooled_composite(const MeasurePanel& panel) {
  panel.validate();
  PooledComposite out;
  for (int i = 0; i < panel.I(); ++i) {
    long ysum = 0, nsum = 0;
    for (int k = 0; k < panel.K(); ++k) {
      ysum += panel.yy(i, k);
      nsum += panel.nn(i, k);
    }
    if (nsum == 0)
      fail(Errc::all_eligible_zero,
           "hospital " + panel.hospitals[i] + ": no eligible patients on any measure");
    out.rate.push_back(static_cast<double>(ysum) / static_cast<double>(nsum));
  }
  out.threshold = stats::nearest_rank_percentile(out.rate, 90.0);
  for (double r : out.rate) out.flag.push_back(r >= out.threshold ? 1 : 0);
  return out;
}

PatientMeasures PatientMeasures::parse_csv(std::string_view text) {
  PatientMeasures pm;
  std::map<std::pair<std::string, std::string>, size_t> index;  // (hospital, patient) -> slot
  size_t pos = 0;
  int lineno = 0;
  bool header = false;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++lineno;
    if (!header) {
      if (line != "hospital_id,patient_id,measure_id,eligible,received")
        fail(Errc::invalid_input, "patient csv: bad header");
      header = true;
      continue;
    }
    if (line.empty()) {
      if (pos > text.size()) break;
      continue;
    }
    auto f = split(line);
    if (f.size() != 5)
      fail(Errc::invalid_input,
           "patient csv row " + std::to_string(lineno - 1) + ": need 5 fields");
    index_of(pm.hospitals, f[0]);
    const int k = index_of(pm.measures, f[2]);
    const int eligible = parse_int(f[3], "eligible");
    const int received = parse_int(f[4], "received");
    if (eligible != 0 && eligible != 1)
      fail(Errc::invalid_input, "patient csv row " + std::to_string(lineno - 1) +
                                    ": eligible must be 0 or 1");
    if (received != 0 && received != 1)
      fail(Errc::invalid_input, "patient csv row " + std::to_string(lineno - 1) +
                                    ": received must be 0 or 1");
    if (received == 1 && eligible == 0)
      fail(Errc::invalid_input, "patient csv row " + std::to_string(lineno - 1) +
                                    ": received therapy without eligibility");
    auto key = std::make_pair(std::string(f[0]), std::string(f[1]));
    auto it = index.find(key);
    if (it == index.end()) {
      Patient p;
      p.hospital_id = key.first;
      p.patient_id = key.second;
      pm.patients.push_back(std::move(p));
      it = index.emplace(key, pm.patients.size() - 1).first;
    }
    auto& p = pm.patients[it->second];
    if (eligible) p.eligible.push_back(k);
    if (received) p.received.push_back(k);
  }
  if (pm.patients.empty()) fail(Errc::invalid_input, "patient csv: no rows");
  return pm;
}

PatientMeasures PatientMeasures::from_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::invalid_input, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

AllOrNoneResult all_or_none(const PatientMeasures& pm) {
  const int I = static_cast<int>(pm.hospitals.size());
  std::vector<int> scored(I, 0), success(I, 0);
  for (const auto& p : pm.patients) {
    for (int k : p.received)
      if (std::find(p.eligible.begin(), p.eligible.end(), k) == p.eligible.end())
        fail(Errc::invalid_input,
             "patient " + p.patient_id + ": received set is not inside the eligible set");
    if (p.eligible.empty()) continue;  // nothing applicable: excluded from the denominator
    int h = 0;
    for (int i = 0; i < I; ++i)
      if (pm.hospitals[i] == p.hospital_id) {
        h = i;
        break;
      }
    ++scored[h];
    if (p.received.size() == p.eligible.size()) ++success[h];
  }
  AllOrNoneResult res;
  res.n_scored = scored;
  for (int i = 0; i < I; ++i)
    res.rate.push_back(scored[i] > 0
                           ? std::optional<double>(static_cast<double>(success[i]) / scored[i])
                           : std::nullopt);
  return res;
}

MeasurePanel panel_from_patients(const PatientMeasures& pm) {
  MeasurePanel panel;
  panel.hospitals = pm.hospitals;
  panel.measures = pm.measures;
  panel.y.assign(panel.hospitals.size() * panel.measures.size(), 0);
  panel.n.assign(panel.y.size(), 0);
  for (const auto& p : pm.patients) {
    int h = 0;
    for (size_t i = 0; i < pm.hospitals.size(); ++i)
      if (pm.hospitals[i] == p.hospital_id) h = static_cast<int>(i);
    for (int k : p.eligible) ++panel.n[static_cast<size_t>(h) * panel.measures.size() + k];
    for (int k : p.received) ++panel.y[static_cast<size_t>(h) * panel.measures.size() + k];
  }
  panel.validate();
  return panel;
}

// ---- item response fits -------------------------------------------------------

double irt_log_posterior(std::span<const double> theta, std::span<const double> diff,
                         std::span<const double> disc, const MeasurePanel& panel, IrtKind kind) {
  const int I = panel.I(), K = panel.K();
  if (static_cast<int>(theta.size()) != I || static_cast<int>(diff.size()) != K)
    fail(Errc::invalid_input, "irt_log_posterior: dimension mismatch");
  const int nd = kind == IrtKind::rasch ? 1 : K;
  if (static_cast<int>(disc.size()) != nd)
    fail(Errc::invalid_input, "irt_log_posterior: discrimination size mismatch");
  constexpr double kLog2Pi = 1.8378770664093454836;
  double lp = 0.0;
  for (int i = 0; i < I; ++i)
    for (int k = 0; k < K; ++k) {
      const double a = kind == IrtKind::rasch ? disc[0] : disc[k];
      const double eta = diff[k] + a * theta[i];
      lp += stats::lchoose(panel.nn(i, k), panel.yy(i, k)) + panel.yy(i, k) * eta -
            panel.nn(i, k) * stats::log1pexp(eta);
    }
  for (int i = 0; i < I; ++i) lp += -0.5 * (kLog2Pi + theta[i] * theta[i]);
  for (int k = 0; k < K; ++k)
    lp += -0.5 * (kLog2Pi + std::log(100.0)) - diff[k] * diff[k] / 200.0;
  for (double a : disc) {
    if (!(a > 0.0)) return -std::numeric_limits<double>::infinity();
    lp += std::log(2.0) - 0.5 * (kLog2Pi + a * a);  // half-Normal(1)
  }
  return lp;
}

namespace {

struct IrtShared {
  MeasurePanel panel;
  IrtKind kind = IrtKind::rasch;
  std::vector<double> theta0, diff0, disc0;
};

class IrtChainModel final : public MwgModel {
 public:
  explicit IrtChainModel(const IrtShared* sh) : sh_(sh) {
    theta_ = sh->theta0;
    diff_ = sh->diff0;
    disc_ = sh->disc0;
    eta_.resize(static_cast<size_t>(I()) * K());
    rebuild();
    const int nd = static_cast<int>(disc_.size());
    blocks_.push_back({"theta", BlockKind::scalar, I(), std::vector<double>(I(), 0.3)});
    blocks_.push_back({"diff", BlockKind::scalar, K(), std::vector<double>(K(), 0.2)});
    blocks_.push_back({"disc", BlockKind::scalar_positive, nd, std::vector<double>(nd, 0.3)});
    names_.reserve(I() + K() + nd);
    for (int i = 0; i < I(); ++i) names_.push_back("theta[" + sh_->panel.hospitals[i] + "]");
    for (int k = 0; k < K(); ++k) names_.push_back("diff[" + sh_->panel.measures[k] + "]");
    if (sh_->kind == IrtKind::rasch)
      names_.push_back("disc");
    else
      for (int k = 0; k < K(); ++k) names_.push_back("disc[" + sh_->panel.measures[k] + "]");
  }

  const std::vector<Block>& blocks() const override { return blocks_; }
  const std::vector<std::string>& param_names() const override { return names_; }

  double value(int b, int i) const override {
    if (b == 0) return theta_[i];
    if (b == 1) return diff_[i];
    return disc_[i];
  }

  double log_ratio(int b, int i, double prop) override {
    const auto& p = sh_->panel;
    double lr = 0.0;
    if (b == 0) {  // theta_i: row i
      const double d = prop - theta_[i];
      for (int k = 0; k < K(); ++k) {
        const double a = disc_for(k);
        lr += cell_delta(i, k, a * d);
      }
      lr += 0.5 * (theta_[i] * theta_[i] - prop * prop);
      return lr;
    }
    if (b == 1) {  // diff_k: column k
      const double d = prop - diff_[i];
      for (int r = 0; r < I(); ++r) lr += cell_delta(r, i, d);
      lr += (diff_[i] * diff_[i] - prop * prop) / 200.0;
      return lr;
    }
    // discrimination (positive): eta shift a' theta - a theta per cell
    if (!(prop > 0.0)) return -std::numeric_limits<double>::infinity();
    if (sh_->kind == IrtKind::rasch) {
      const double d = prop - disc_[0];
      for (int r = 0; r < I(); ++r)
        for (int k = 0; k < K(); ++k) lr += cell_delta(r, k, d * theta_[r]);
    } else {
      const double d = prop - disc_[i];
      for (int r = 0; r < I(); ++r) lr += cell_delta(r, i, d * theta_[r]);
    }
    lr += 0.5 * (disc_[i] * disc_[i] - prop * prop);  // half-Normal(1)
    return lr;
  }

  void commit(int b, int i, double v) override {
    if (b == 0) {
      const double d = v - theta_[i];
      for (int k = 0; k < K(); ++k) eta_at(i, k) += disc_for(k) * d;
      theta_[i] = v;
    } else if (b == 1) {
      const double d = v - diff_[i];
      for (int r = 0; r < I(); ++r) eta_at(r, i) += d;
      diff_[i] = v;
    } else {
      if (sh_->kind == IrtKind::rasch) {
        const double d = v - disc_[0];
        for (int r = 0; r < I(); ++r)
          for (int k = 0; k < K(); ++k) eta_at(r, k) += d * theta_[r];
        disc_[0] = v;
      } else {
        const double d = v - disc_[i];
        for (int r = 0; r < I(); ++r) eta_at(r, i) += d * theta_[r];
        disc_[i] = v;
      }
    }
  }

  void custom_update(int, Rng&, bool, bool* accepted) override { *accepted = true; }
  void refresh() override { rebuild(); }

  void record(std::vector<double>& out) const override {
    out.insert(out.end(), theta_.begin(), theta_.end());
    out.insert(out.end(), diff_.begin(), diff_.end());
    out.insert(out.end(), disc_.begin(), disc_.end());
  }

 private:
  int I() const { return sh_->panel.I(); }
  int K() const { return sh_->panel.K(); }
  double disc_for(int k) const { return sh_->kind == IrtKind::rasch ? disc_[0] : disc_[k]; }
  double& eta_at(int i, int k) { return eta_[static_cast<size_t>(i) * K() + k]; }
  double eta_at(int i, int k) const { return eta_[static_cast<size_t>(i) * K() + k]; }

  double cell_delta(int i, int k, double d) const {
    const auto& p = sh_->panel;
    const double e = eta_at(i, k);
    return p.yy(i, k) * d - p.nn(i, k) * (stats::log1pexp(e + d) - stats::log1pexp(e));
  }

  void rebuild() {
    for (int i = 0; i < I(); ++i)
      for (int k = 0; k < K(); ++k) eta_at(i, k) = diff_[k] + disc_for(k) * theta_[i];
  }

  const IrtShared* sh_;
  std::vector<double> theta_, diff_, disc_;
  std::vector<double> eta_;
  std::vector<Block> blocks_;
  std::vector<std::string> names_;
};

}  // namespace

IrtFit fit_irt(const MeasurePanel& input, IrtKind kind, const ChainConfig& cfg) {
  input.validate();
  if (input.K() < 2) fail(Errc::invalid_input, "fit_irt: need at least 2 measures");
  if (input.I() < 3) fail(Errc::invalid_input, "fit_irt: need at least 3 hospitals");

  IrtFit fit;
  fit.kind = kind;

  // drop measures that carry no information about theta
  MeasurePanel panel;
  panel.hospitals = input.hospitals;
  std::vector<int> kept_cols;
  for (int k = 0; k < input.K(); ++k) {
    long ysum = 0, nsum = 0;
    for (int i = 0; i < input.I(); ++i) {
      ysum += input.yy(i, k);
      nsum += input.nn(i, k);
    }
    if (ysum == 0 || ysum == nsum) {
      fit.dropped.push_back(input.measures[k]);
      fit.warnings.push_back("measure " + input.measures[k] +
                             " dropped: all cells zero or all full");
      continue;
    }
    kept_cols.push_back(k);
    panel.measures.push_back(input.measures[k]);
  }
  if (panel.measures.size() < 2)
    fail(Errc::degenerate_panel, "fewer than 2 informative measures remain");
  panel.y.resize(panel.hospitals.size() * panel.measures.size());
  panel.n.resize(panel.y.size());
  for (int i = 0; i < panel.I(); ++i)
    for (size_t k = 0; k < kept_cols.size(); ++k) {
      panel.y[static_cast<size_t>(i) * panel.measures.size() + k] = input.yy(i, kept_cols[k]);
      panel.n[static_cast<size_t>(i) * panel.measures.size() + k] = input.nn(i, kept_cols[k]);
    }

  IrtShared sh;
  sh.panel = panel;
  sh.kind = kind;
  sh.theta0.assign(panel.I(), 0.0);
  sh.diff0.resize(panel.K());
  for (int k = 0; k < panel.K(); ++k) {
    long ysum = 0, nsum = 0;
    for (int i = 0; i < panel.I(); ++i) {
      ysum += panel.yy(i, k);
      nsum += panel.nn(i, k);
    }
    const double r = std::clamp(static_cast<double>(ysum) / nsum, 1e-3, 1.0 - 1e-3);
    sh.diff0[k] = stats::logit(r);
  }
  sh.disc0.assign(kind == IrtKind::rasch ? 1 : panel.K(), 1.0);

  fit.measures = panel.measures;
  fit.draws = run_chains(cfg, [&sh](int) { return std::make_unique<IrtChainModel>(&sh); });
  if (cfg.chains >= 2 && cfg.keep >= 10) {
    fit.draws.diags = diagnostics(fit.draws);
    for (size_t p = 0; p < fit.draws.names.size(); ++p)
      if (!(fit.draws.diags[p].rhat <= 1.05)) {
        fit.draws.converged = false;
        fit.draws.notes.push_back("rhat above 1.05 for " + fit.draws.names[p]);
      }
  }

  for (int i = 0; i < panel.I(); ++i)
    fit.theta.push_back(fit.draws.summary("theta[" + panel.hospitals[i] + "]"));
  for (int k = 0; k < panel.K(); ++k)
    fit.difficulty.push_back(fit.draws.summary("diff[" + panel.measures[k] + "]").mean);
  if (kind == IrtKind::rasch) {
    fit.discrimination.push_back(fit.draws.summary("disc").mean);
  } else {
    for (int k = 0; k < panel.K(); ++k)
      fit.discrimination.push_back(fit.draws.summary("disc[" + panel.measures[k] + "]").mean);
  }
  return fit;
}

std::vector<IccCurve> icc_data(const IrtFit& fit, std::span<const double> theta_grid) {
  std::vector<IccCurve> out;
  for (size_t k = 0; k < fit.measures.size(); ++k) {
    IccCurve c;
    c.measure = fit.measures[k];
    const double a = fit.kind == IrtKind::rasch ? fit.discrimination[0] : fit.discrimination[k];
    for (double t : theta_grid) c.p.push_back(stats::expit(fit.difficulty[k] + a * t));
    out.push_back(std::move(c));
  }
  return out;
}

std::string composite_report_json(const MeasurePanel& panel, const PooledComposite& pooled) {
  json j;
  j["kind"] = "pooled";
  j["threshold"] = pooled.threshold;
  json hs = json::array();
  for (int i = 0; i < panel.I(); ++i)
    hs.push_back(json{{"id", panel.hospitals[i]},
                      {"rate", pooled.rate[i]},
                      {"top_decile", pooled.flag[i] != 0}});
  j["hospitals"] = hs;
  return j.dump(2) + "\n";
}

std::string irt_report_json(const IrtFit& fit, const MeasurePanel& panel) {
  json j;
  j["kind"] = fit.kind == IrtKind::rasch ? "rasch" : "2pl";
  j["converged"] = fit.draws.converged;
  j["dropped_measures"] = fit.dropped;
  j["warnings"] = fit.warnings;
  json ms = json::array();
  for (size_t k = 0; k < fit.measures.size(); ++k)
    ms.push_back(json{{"id", fit.measures[k]},
                      {"difficulty", fit.difficulty[k]},
                      {"discrimination",
                       fit.kind == IrtKind::rasch ? fit.discrimination[0] : fit.discrimination[k]}});
  j["measures"] = ms;
  json hs = json::array();
  for (size_t i = 0; i < fit.theta.size(); ++i)
    hs.push_back(json{{"id", panel.hospitals[i]},
                      {"theta_mean", fit.theta[i].mean},
                      {"theta_median", fit.theta[i].median},
                      {"theta_lo", fit.theta[i].lo},
                      {"theta_hi", fit.theta[i].hi}});
  j["hospitals"] = hs;
  return j.dump(2) + "\n";
}

std::string icc_csv(const IrtFit& fit, std::span<const double> grid) {
  const auto curves = icc_data(fit, grid);
  std::string out = "measure_id,theta,p\n";
  for (const auto& c : curves)
    for (size_t g = 0; g < grid.size(); ++g)
      out += c.measure + ',' + fmt(grid[g]) + ',' + fmt(c.p[g]) + '\n';
  return out;
}

}  // namespace profiler
