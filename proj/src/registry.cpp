#include "profiler/registry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "profiler/rng.hpp"
#include "profiler/stats.hpp"

namespace profiler {

using nlohmann::json;

const std::array<std::string_view, kDesignCols> kDesignNames = {
    "yrs_over_65",  "male",        "renal_failure", "diabetes",  "hypertension",
    "pvd",          "prior_pci",   "shock",         "iabp",      "ef_lt30_or_missing",
    "ef_b30to39",   "mi_le6h",     "mi_h7to24",     "mi_d1to7",  "mi_d8to21",
    "mi_gt21d",     "status_urgent", "status_emergent"};

std::array<double, kDesignCols> design_row(const PatientRecord& r) {
  std::array<double, kDesignCols> x{};
  x[0] = r.yrs_over_65;
  x[1] = r.male;
  x[2] = r.renal_failure;
  x[3] = r.diabetes;
  x[4] = r.hypertension;
  x[5] = r.pvd;
  x[6] = r.prior_pci;
  x[7] = r.shock;
  x[8] = r.iabp;
  x[9] = r.ef_cat == EfCat::lt30_or_missing ? 1.0 : 0.0;
  x[10] = r.ef_cat == EfCat::b30to39 ? 1.0 : 0.0;
  x[11] = r.mi_cat == MiCat::le6h ? 1.0 : 0.0;
  x[12] = r.mi_cat == MiCat::h7to24 ? 1.0 : 0.0;
  x[13] = r.mi_cat == MiCat::d1to7 ? 1.0 : 0.0;
  x[14] = r.mi_cat == MiCat::d8to21 ? 1.0 : 0.0;
  x[15] = r.mi_cat == MiCat::gt21d ? 1.0 : 0.0;
  x[16] = r.status == StatusCat::urgent ? 1.0 : 0.0;
  x[17] = r.status == StatusCat::emergent ? 1.0 : 0.0;
  return x;
}

Cohort Cohort::from_records(std::vector<PatientRecord> recs) {
  if (recs.empty()) fail(Errc::empty_cohort, "cohort has no records");
  Cohort c;
  c.records_ = std::move(recs);
  std::unordered_map<std::string, int> seen;
  c.hospital_index_.reserve(c.records_.size());
  for (size_t j = 0; j < c.records_.size(); ++j) {
    const auto& r = c.records_[j];
    if (!(r.yrs_over_65 >= 0.0) || !std::isfinite(r.yrs_over_65))
      fail(Errc::negative_age, "row " + std::to_string(j + 1) + ": yrs_over_65 must be >= 0");
    for (uint8_t f : {r.death30, r.male, r.renal_failure, r.diabetes, r.hypertension, r.pvd,
                      r.prior_pci, r.shock, r.iabp})
      if (f > 1) fail(Errc::bad_enum_value, "row " + std::to_string(j + 1) + ": flag not in {0,1}");
    auto [it, inserted] = seen.try_emplace(r.hospital_id, static_cast<int>(c.hospital_ids_.size()));
    if (inserted) {
      c.hospital_ids_.push_back(r.hospital_id);
      c.rows_by_hospital_.emplace_back();
    }
    c.hospital_index_.push_back(it->second);
    c.rows_by_hospital_[it->second].push_back(static_cast<int>(j));
  }
  c.design_.resize(c.records_.size() * kDesignCols);
  c.deaths_.resize(c.records_.size());
  for (size_t j = 0; j < c.records_.size(); ++j) {
    const auto row = design_row(c.records_[j]);
    std::copy(row.begin(), row.end(), c.design_.begin() + j * kDesignCols);
    c.deaths_[j] = c.records_[j].death30;
    for (int k = 0; k < kDesignCols; ++k)
      if (row[k] != 0.0) c.columns_[k].emplace_back(static_cast<int>(j), row[k]);
  }
  return c;
}

int Cohort::total_deaths() const {
  int d = 0;
  for (uint8_t y : deaths_) d += y;
  return d;
}

double Cohort::pooled_rate() const {
  return static_cast<double>(total_deaths()) / static_cast<double>(n_patients());
}

CohortSummary summarize(const Cohort& cohort) {
  CohortSummary s;
  for (int i = 0; i < cohort.n_hospitals(); ++i) {
    HospitalSummary h;
    h.id = cohort.hospital_ids()[i];
    h.n = static_cast<int>(cohort.rows_of(i).size());
    for (int j : cohort.rows_of(i)) h.deaths += cohort.deaths()[j];
    h.rate_pct = 100.0 * h.deaths / h.n;
    s.rows.push_back(std::move(h));
  }
  s.total.id = "all";
  for (const auto& h : s.rows) {
    s.total.n += h.n;
    s.total.deaths += h.deaths;
  }
  s.total.rate_pct = 100.0 * s.total.deaths / s.total.n;
  return s;
}

// ---- CSV ------------------------------------------------------------------

const std::string kCsvHeader =
    "hospital_id,death30,yrs_over_65,male,renal_failure,diabetes,hypertension,pvd,prior_pci,"
    "shock,iabp,ef_cat,mi_cat,status";

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  for (size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

const std::array<std::string_view, 14> kColumnNames = {
    "hospital_id", "death30", "yrs_over_65", "male",   "renal_failure",
    "diabetes",    "hypertension", "pvd",    "prior_pci", "shock",
    "iabp",        "ef_cat",  "mi_cat",      "status"};

uint8_t parse_flag(std::string_view f, int row, int col) {
  if (f == "0") return 0;
  if (f == "1") return 1;
  fail(Errc::bad_enum_value, "row " + std::to_string(row) + ", column " +
                                 std::string(kColumnNames[col]) + ": expected 0 or 1, got '" +
                                 std::string(f) + "'");
}

EfCat parse_ef(std::string_view f, int row) {
  if (f == "ge40") return EfCat::ge40;
  if (f == "lt30_or_missing") return EfCat::lt30_or_missing;
  if (f == "b30to39") return EfCat::b30to39;
  fail(Errc::bad_enum_value,
       "row " + std::to_string(row) + ", column ef_cat: bad value '" + std::string(f) + "'");
}

MiCat parse_mi(std::string_view f, int row) {
  if (f == "none") return MiCat::none;
  if (f == "le6h") return MiCat::le6h;
  if (f == "h7to24") return MiCat::h7to24;
  if (f == "d1to7") return MiCat::d1to7;
  if (f == "d8to21") return MiCat::d8to21;
  if (f == "gt21d") return MiCat::gt21d;
  fail(Errc::bad_enum_value,
       "row " + std::to_string(row) + ", column mi_cat: bad value '" + std::string(f) + "'");
}

StatusCat parse_status(std::string_view f, int row) {
  if (f == "elective") return StatusCat::elective;
  if (f == "urgent") return StatusCat::urgent;
  if (f == "emergent") return StatusCat::emergent;
  fail(Errc::bad_enum_value,
       "row " + std::to_string(row) + ", column status: bad value '" + std::string(f) + "'");
}

std::string_view ef_name(EfCat c) {
  switch (c) {
    case EfCat::ge40: return "ge40";
    case EfCat::lt30_or_missing: return "lt30_or_missing";
    default: return "b30to39";
  }
}

std::string_view mi_name(MiCat c) {
  switch (c) {
    case MiCat::none: return "none";
    case MiCat::le6h: return "le6h";
    case MiCat::h7to24: return "h7to24";
    case MiCat::d1to7: return "d1to7";
    case MiCat::d8to21: return "d8to21";
    default: return "gt21d";
  }
}

std::string_view status_name(StatusCat c) {
  switch (c) {
    case StatusCat::elective: return "elective";
    case StatusCat::urgent: return "urgent";
    default: return "emergent";
  }
}

}  // namespace

Cohort parse_csv(std::string_view text, std::string_view where) {
  size_t pos = 0;
  int lineno = 0;
  std::vector<PatientRecord> recs;
  bool saw_header = false;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++lineno;
    if (!saw_header) {
      if (line != kCsvHeader)
        fail(Errc::missing_column,
             std::string(where) + ": header does not match the required schema");
      saw_header = true;
      continue;
    }
    if (line.empty()) {
      if (pos > text.size()) break;
      continue;
    }
    const int row = lineno - 1;
    auto f = split_fields(line);
    if (f.size() != kColumnNames.size())
      fail(Errc::missing_column, "row " + std::to_string(row) + ": expected " +
                                     std::to_string(kColumnNames.size()) + " fields, got " +
                                     std::to_string(f.size()));
    PatientRecord r;
    if (f[0].empty())
      fail(Errc::bad_enum_value, "row " + std::to_string(row) + ", column hospital_id: empty");
    r.hospital_id = std::string(f[0]);
    r.death30 = parse_flag(f[1], row, 1);
    double yrs = 0.0;
    auto [p, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), yrs);
    if (ec != std::errc() || p != f[2].data() + f[2].size() || !std::isfinite(yrs))
      fail(Errc::bad_enum_value, "row " + std::to_string(row) +
                                     ", column yrs_over_65: not a number: '" + std::string(f[2]) +
                                     "'");
    if (yrs < 0.0) fail(Errc::negative_age, "row " + std::to_string(row) + ": negative age");
    r.yrs_over_65 = yrs;
    r.male = parse_flag(f[3], row, 3);
    r.renal_failure = parse_flag(f[4], row, 4);
    r.diabetes = parse_flag(f[5], row, 5);
    r.hypertension = parse_flag(f[6], row, 6);
    r.pvd = parse_flag(f[7], row, 7);
    r.prior_pci = parse_flag(f[8], row, 8);
    r.shock = parse_flag(f[9], row, 9);
    r.iabp = parse_flag(f[10], row, 10);
    r.ef_cat = parse_ef(f[11], row);
    r.mi_cat = parse_mi(f[12], row);
    r.status = parse_status(f[13], row);
    recs.push_back(std::move(r));
  }
  if (!saw_header) fail(Errc::missing_column, std::string(where) + ": empty file");
  if (recs.empty()) fail(Errc::empty_cohort, std::string(where) + ": no data rows");
  return Cohort::from_records(std::move(recs));
}

Cohort ingest_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::invalid_input, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path);
}

std::string to_csv(const Cohort& cohort) {
  std::string out = kCsvHeader + "\n";
  for (const auto& r : cohort.records()) {
    out += r.hospital_id;
    out += ',';
    out += r.death30 ? '1' : '0';
    out += ',';
    out += fmt_double(r.yrs_over_65);
    for (uint8_t f : {r.male, r.renal_failure, r.diabetes, r.hypertension, r.pvd, r.prior_pci,
                      r.shock, r.iabp}) {
      out += ',';
      out += f ? '1' : '0';
    }
    out += ',';
    out += ef_name(r.ef_cat);
    out += ',';
    out += mi_name(r.mi_cat);
    out += ',';
    out += status_name(r.status);
    out += '\n';
  }
  return out;
}

void emit_csv(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::invalid_input, "cannot write " + path);
  out << to_csv(cohort);
}

// ---- calibration targets ----------------------------------------------------

namespace {

double pct_field(const json& j, const std::string& key) {
  if (!j.contains(key)) fail(Errc::invalid_input, "targets: missing field '" + key + "'");
  const double v = j.at(key).get<double>();
  if (!(v >= 0.0 && v <= 100.0))
    fail(Errc::invalid_input, "targets: field '" + key + "' outside [0,100]");
  return v / 100.0;
}

template <size_t N>
std::array<double, N> cat_field(const json& j, const std::string& key,
                                const std::array<std::string_view, N>& levels) {
  if (!j.contains(key)) fail(Errc::invalid_input, "targets: missing field '" + key + "'");
  std::array<double, N> q{};
  double total = 0.0;
  for (size_t i = 0; i < N; ++i) {
    q[i] = pct_field(j.at(key), std::string(levels[i]));
    total += q[i];
  }
  if (total <= 0.0) fail(Errc::invalid_input, "targets: category '" + key + "' sums to zero");
  for (auto& v : q) v /= total;  // published marginals round; renormalize
  return q;
}

}  // namespace

CalibrationTargets CalibrationTargets::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::invalid_input, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(Errc::invalid_input, path + ": " + e.what());
  }
  CalibrationTargets t;
  if (!j.contains("hospitals") || !j.at("hospitals").is_array() || j.at("hospitals").empty())
    fail(Errc::invalid_input, "targets: missing field 'hospitals'");
  for (const auto& h : j.at("hospitals")) {
    HospitalTarget ht;
    if (!h.contains("id")) fail(Errc::invalid_input, "targets: hospital entry missing 'id'");
    ht.id = h.at("id").is_string() ? h.at("id").get<std::string>() : h.at("id").dump();
    if (!h.contains("volume")) fail(Errc::invalid_input, "targets: hospital missing 'volume'");
    ht.volume = h.at("volume").get<int>();
    if (!h.contains("deaths")) fail(Errc::invalid_input, "targets: hospital missing 'deaths'");
    ht.deaths = h.at("deaths").get<int>();
    if (!h.contains("expected_pct"))
      fail(Errc::invalid_input, "targets: hospital missing 'expected_pct'");
    ht.expected_pct = h.at("expected_pct").get<double>();
    t.hospitals.push_back(std::move(ht));
  }
  if (!j.contains("prevalence_pct"))
    fail(Errc::invalid_input, "targets: missing field 'prevalence_pct'");
  const json& p = j.at("prevalence_pct");
  t.male = pct_field(p, "male");
  t.renal_failure = pct_field(p, "renal_failure");
  t.diabetes = pct_field(p, "diabetes");
  t.hypertension = pct_field(p, "hypertension");
  t.pvd = pct_field(p, "pvd");
  t.prior_pci = pct_field(p, "prior_pci");
  t.shock = pct_field(p, "shock");
  t.iabp = pct_field(p, "iabp");
  t.ef = cat_field<3>(p, "ef_cat", {"ge40", "lt30_or_missing", "b30to39"});
  t.mi = cat_field<6>(p, "mi_cat", {"none", "le6h", "h7to24", "d1to7", "d8to21", "gt21d"});
  t.status = cat_field<3>(p, "status", {"elective", "urgent", "emergent"});
  if (!j.contains("yrs_over_65_mean"))
    fail(Errc::invalid_input, "targets: missing field 'yrs_over_65_mean'");
  t.yrs_mean = j.at("yrs_over_65_mean").get<double>();
  if (!j.contains("odds_ratios")) fail(Errc::invalid_input, "targets: missing field 'odds_ratios'");
  for (int k = 0; k < kDesignCols; ++k) {
    const std::string name(kDesignNames[k]);
    if (!j.at("odds_ratios").contains(name))
      fail(Errc::invalid_input, "targets: odds_ratios missing '" + name + "'");
    t.odds_ratios[k] = j.at("odds_ratios").at(name).get<double>();
  }
  t.validate();
  return t;
}

void CalibrationTargets::validate() const {
  if (hospitals.empty()) fail(Errc::invalid_input, "targets: no hospitals");
  for (const auto& h : hospitals) {
    if (h.volume < 1) fail(Errc::invalid_input, "targets: hospital " + h.id + ": volume < 1");
    if (h.deaths < 0 || h.deaths > h.volume)
      fail(Errc::invalid_input, "targets: hospital " + h.id + ": deaths outside [0, volume]");
    if (!(h.expected_pct >= 0.0 && h.expected_pct <= 100.0))
      fail(Errc::invalid_input, "targets: hospital " + h.id + ": expected_pct outside [0,100]");
  }
  for (double v : odds_ratios)
    if (!(v > 0.0)) fail(Errc::invalid_input, "targets: odds ratio must be > 0");
  if (!(yrs_mean >= 0.0 && yrs_mean <= kYrsMax))
    fail(Errc::invalid_input, "targets: yrs_over_65_mean outside [0,30]");
}

std::array<double, kDesignCols> CalibrationTargets::column_prevalence() const {
  std::array<double, kDesignCols> q{};
  q[0] = stats::norm_cdf(yrs_mean / kYrsSd);  // P(yrs_over_65 > 0)
  q[1] = male;
  q[2] = renal_failure;
  q[3] = diabetes;
  q[4] = hypertension;
  q[5] = pvd;
  q[6] = prior_pci;
  q[7] = shock;
  q[8] = iabp;
  q[9] = ef[1];
  q[10] = ef[2];
  q[11] = mi[1];
  q[12] = mi[2];
  q[13] = mi[3];
  q[14] = mi[4];
  q[15] = mi[5];
  q[16] = status[1];
  q[17] = status[2];
  return q;
}

Coefficients Coefficients::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::invalid_input, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(Errc::invalid_input, path + ": " + e.what());
  }
  Coefficients c;
  if (!j.contains("intercept")) fail(Errc::invalid_input, "coefficients: missing 'intercept'");
  c.intercept = j.at("intercept").get<double>();
  if (!std::isfinite(c.intercept))
    fail(Errc::invalid_input, "coefficients: intercept not finite");
  if (!j.contains("slopes")) fail(Errc::invalid_input, "coefficients: missing 'slopes'");
  for (int k = 0; k < kDesignCols; ++k) {
    const std::string name(kDesignNames[k]);
    if (!j.at("slopes").contains(name))
      fail(Errc::invalid_input, "coefficients: slopes missing '" + name + "'");
    c.slopes[k] = j.at("slopes").at(name).get<double>();
    if (!std::isfinite(c.slopes[k]))
      fail(Errc::invalid_input, "coefficients: slope '" + name + "' not finite");
  }
  return c;
}

std::string GeneratorMeta::to_json() const {
  json j;
  j["seed"] = seed;
  j["tilt_shift"] = tilt_shift;
  j["tilt_attempts"] = tilt_attempts;
  j["realized_expected_pct"] = realized_expected_pct;
  j["intercept"] = intercept;
  json s;
  for (int k = 0; k < kDesignCols; ++k) s[std::string(kDesignNames[k])] = slopes[k];
  j["slopes"] = s;
  j["yrs_over_65"] = {{"mean_param", "from targets"}, {"sd", kYrsSd}, {"max", kYrsMax}};
  return j.dump(2) + "\n";
}

// ---- synthetic cohort generator --------------------------------------------

namespace {

struct PatientUniforms {
  double z_yrs = 0.0;
  std::array<double, 8> u_bin{};
  double u_ef = 0.0, u_mi = 0.0, u_status = 0.0;
};

PatientUniforms draw_uniforms(Rng& r) {
  PatientUniforms u;
  u.z_yrs = r.normal();
  for (auto& v : u.u_bin) v = r.uniform();
  u.u_ef = r.uniform();
  u.u_mi = r.uniform();
  u.u_status = r.uniform();
  return u;
}

// tilted Bernoulli threshold: prevalence logit shifted by s
double tilted_prob(double q, double s) {
  if (q <= 0.0) return 0.0;
  if (q >= 1.0) return 1.0;
  return stats::expit(stats::logit(q) + s);
}

// tilted categorical: reference level keeps base weight, the rest scaled by e^s
template <size_t N>
int pick_cat(const std::array<double, N>& q, double s, double u) {
  std::array<double, N> w;
  w[0] = q[0];
  double total = q[0];
  const double es = std::exp(s);
  for (size_t i = 1; i < N; ++i) {
    w[i] = q[i] * es;
    total += w[i];
  }
  double cum = 0.0;
  for (size_t i = 0; i < N; ++i) {
    cum += w[i] / total;
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(N - 1);
}

struct BuiltRow {
  std::array<double, kDesignCols> x;
  int ef, mi, status;
};

BuiltRow build_row(const CalibrationTargets& t, const PatientUniforms& u, double s) {
  BuiltRow r{};
  r.x[0] = std::clamp(t.yrs_mean + kYrsSd * u.z_yrs, 0.0, kYrsMax);
  const std::array<double, 8> base = {t.male,      t.renal_failure, t.diabetes, t.hypertension,
                                      t.pvd,       t.prior_pci,     t.shock,    t.iabp};
  for (int k = 0; k < 8; ++k) r.x[1 + k] = u.u_bin[k] < tilted_prob(base[k], s) ? 1.0 : 0.0;
  r.ef = pick_cat(t.ef, s, u.u_ef);
  r.mi = pick_cat(t.mi, s, u.u_mi);
  r.status = pick_cat(t.status, s, u.u_status);
  if (r.ef >= 1) r.x[9 + (r.ef - 1)] = 1.0;
  if (r.mi >= 1) r.x[11 + (r.mi - 1)] = 1.0;
  if (r.status >= 1) r.x[16 + (r.status - 1)] = 1.0;
  return r;
}

double row_eta(const Coefficients& c, const std::array<double, kDesignCols>& x) {
  double eta = c.intercept;
  for (int k = 0; k < kDesignCols; ++k) eta += c.slopes[k] * x[k];
  return eta;
}

double mean_risk(const CalibrationTargets& t, const Coefficients& c,
                 const std::vector<PatientUniforms>& us, double s) {
  double sum = 0.0;
  for (const auto& u : us) sum += stats::expit(row_eta(c, build_row(t, u, s).x));
  return sum / static_cast<double>(us.size());
}

// Exact conditional-Bernoulli draw of which patients die, given the death
// count. Probabilities are exponentially tilted to center the total at d (the
// conditional law is invariant to a uniform log-odds shift), then independent
// Bernoulli vectors are drawn until one has the required total.
std::vector<uint8_t> assign_deaths(std::span<const double> eta, int d, Rng& rng) {
  const int n = static_cast<int>(eta.size());
  std::vector<uint8_t> y(n, 0);
  if (d <= 0) return y;
  if (d >= n) {
    std::fill(y.begin(), y.end(), 1);
    return y;
  }
  double lo = -30.0, hi = 30.0;
  auto mean_at = [&](double c) {
    double s = 0.0;
    for (double e : eta) s += stats::expit(e + c);
    return s;
  };
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mean_at(mid) < d)
      lo = mid;
    else
      hi = mid;
  }
  const double c = 0.5 * (lo + hi);
  std::vector<double> p(n);
  for (int j = 0; j < n; ++j) p[j] = stats::expit(eta[j] + c);
  for (long attempt = 0; attempt < 2000000; ++attempt) {
    int total = 0;
    for (int j = 0; j < n; ++j) {
      y[j] = rng.uniform() < p[j] ? 1 : 0;
      total += y[j];
    }
    if (total == d) return y;
  }
  fail(Errc::unattainable_target, "death-count conditioning did not terminate");
}

}  // namespace

std::pair<Cohort, GeneratorMeta> synthesize_cohort(const CalibrationTargets& targets,
                                                   const Coefficients& coef, uint64_t seed) {
  targets.validate();
  if (!std::isfinite(coef.intercept)) fail(Errc::invalid_input, "intercept not finite");

  constexpr int kMaxAttempts = 8;
  constexpr int kBisectIters = 60;
  constexpr double kAcceptTol = 1e-3;  // 0.1 percentage points on the rate

  GeneratorMeta meta;
  meta.seed = seed;
  meta.intercept = coef.intercept;
  meta.slopes = coef.slopes;

  Rng root(seed);
  std::vector<PatientRecord> recs;
  for (size_t i = 0; i < targets.hospitals.size(); ++i) {
    const auto& ht = targets.hospitals[i];
    const double target = ht.expected_pct / 100.0;
    Rng hosp = root.stream(i);

    double best_s = 0.0, best_err = std::numeric_limits<double>::infinity();
    std::vector<PatientUniforms> us(ht.volume);
    int attempt = 0;
    for (; attempt < kMaxAttempts; ++attempt) {
      Rng draw = hosp.stream(attempt);
      for (auto& u : us) u = draw_uniforms(draw);
      double lo = -10.0, hi = 10.0;
      best_err = std::numeric_limits<double>::infinity();
      for (int it = 0; it < kBisectIters; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double f = mean_risk(targets, coef, us, mid);
        const double err = std::fabs(f - target);
        if (err < best_err) {
          best_err = err;
          best_s = mid;
        }
        if (err <= kAcceptTol) break;
        if (f < target)
          lo = mid;
        else
          hi = mid;
      }
      if (best_err <= kAcceptTol) break;
    }
    if (best_err > kAcceptTol)
      fail(Errc::unattainable_target,
           "hospital " + ht.id + ": bisection cannot reach expected rate " +
               std::to_string(ht.expected_pct) + "% (best error " +
               std::to_string(best_err * 100.0) + " pp)");

    std::vector<double> eta(ht.volume);
    std::vector<BuiltRow> rows(ht.volume);
    double realized = 0.0;
    for (int j = 0; j < ht.volume; ++j) {
      rows[j] = build_row(targets, us[j], best_s);
      eta[j] = row_eta(coef, rows[j].x);
      realized += stats::expit(eta[j]);
    }
    realized /= ht.volume;

    Rng outcome = hosp.stream(0xDEAD);
    const auto deaths = assign_deaths(eta, ht.deaths, outcome);

    for (int j = 0; j < ht.volume; ++j) {
      PatientRecord r;
      r.hospital_id = ht.id;
      r.death30 = deaths[j];
      r.yrs_over_65 = rows[j].x[0];
      r.male = rows[j].x[1] != 0.0;
      r.renal_failure = rows[j].x[2] != 0.0;
      r.diabetes = rows[j].x[3] != 0.0;
      r.hypertension = rows[j].x[4] != 0.0;
      r.pvd = rows[j].x[5] != 0.0;
      r.prior_pci = rows[j].x[6] != 0.0;
      r.shock = rows[j].x[7] != 0.0;
      r.iabp = rows[j].x[8] != 0.0;
      r.ef_cat = static_cast<EfCat>(rows[j].ef);
      r.mi_cat = static_cast<MiCat>(rows[j].mi);
      r.status = static_cast<StatusCat>(rows[j].status);
      recs.push_back(std::move(r));
    }
    meta.tilt_shift.push_back(best_s);
    meta.tilt_attempts.push_back(attempt + 1);
    meta.realized_expected_pct.push_back(100.0 * realized);
  }
  return {Cohort::from_records(std::move(recs)), std::move(meta)};
}

double model_rate_untilted(const CalibrationTargets& targets, const Coefficients& coef,
                           int n_draws, uint64_t seed) {
  Rng rng(seed);
  double sum = 0.0;
  for (int j = 0; j < n_draws; ++j) {
    const auto u = draw_uniforms(rng);
    sum += stats::expit(row_eta(coef, build_row(targets, u, 0.0).x));
  }
  return sum / n_draws;
}

}  // namespace profiler
