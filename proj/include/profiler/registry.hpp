#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "profiler/errors.hpp"

namespace profiler {

enum class EfCat : uint8_t { ge40, lt30_or_missing, b30to39 };
enum class MiCat : uint8_t { none, le6h, h7to24, d1to7, d8to21, gt21d };
enum class StatusCat : uint8_t { elective, urgent, emergent };

// one isolated-CABG admission
struct PatientRecord {
  std::string hospital_id;
  uint8_t death30 = 0;
  double yrs_over_65 = 0.0;
  uint8_t male = 0, renal_failure = 0, diabetes = 0, hypertension = 0, pvd = 0, prior_pci = 0,
          shock = 0, iabp = 0;
  EfCat ef_cat = EfCat::ge40;
  MiCat mi_cat = MiCat::none;
  StatusCat status = StatusCat::elective;

  bool operator==(const PatientRecord&) const = default;
};

inline constexpr int kDesignCols = 18;

// fixed covariate layout: age years over 65, eight binary flags, ef dummies,
// mi dummies, status dummies; reference levels contribute nothing
extern const std::array<std::string_view, kDesignCols> kDesignNames;

std::array<double, kDesignCols> design_row(const PatientRecord& r);

class Cohort {
 public:
  static Cohort from_records(std::vector<PatientRecord> recs);

  const std::vector<PatientRecord>& records() const { return records_; }
  const std::vector<std::string>& hospital_ids() const { return hospital_ids_; }
  int n_patients() const { return static_cast<int>(records_.size()); }
  int n_hospitals() const { return static_cast<int>(hospital_ids_.size()); }
  int hospital_of(int row) const { return hospital_index_[row]; }
  const std::vector<int>& rows_of(int hosp) const { return rows_by_hospital_[hosp]; }

  // n x 18 row-major design matrix
  std::span<const double> design() const { return design_; }
  const double* design_row_ptr(int row) const { return design_.data() + row * kDesignCols; }
  std::span<const uint8_t> deaths() const { return deaths_; }

  // rows (and their covariate values) with a nonzero entry in a design column
  const std::vector<std::pair<int, double>>& column_entries(int col) const {
    return columns_[col];
  }

  int total_deaths() const;
  double pooled_rate() const;  // fraction

 private:
  std::vector<PatientRecord> records_;
  std::vector<std::string> hospital_ids_;
  std::vector<int> hospital_index_;
  std::vector<std::vector<int>> rows_by_hospital_;
  std::vector<double> design_;
  std::vector<uint8_t> deaths_;
  std::array<std::vector<std::pair<int, double>>, kDesignCols> columns_;
};

struct HospitalSummary {
  std::string id;
  int n = 0;
  int deaths = 0;
  double rate_pct = 0.0;
};

struct CohortSummary {
  std::vector<HospitalSummary> rows;
  HospitalSummary total;
};

CohortSummary summarize(const Cohort& cohort);

// exact header: hospital_id,death30,yrs_over_65,male,renal_failure,diabetes,
// hypertension,pvd,prior_pci,shock,iabp,ef_cat,mi_cat,status
extern const std::string kCsvHeader;

Cohort ingest_csv(const std::string& path);
Cohort parse_csv(std::string_view text, std::string_view where = "<string>");
std::string to_csv(const Cohort& cohort);
void emit_csv(const Cohort& cohort, const std::string& path);

// published per-hospital counts plus risk-factor marginals the generator is
// calibrated against
struct HospitalTarget {
  std::string id;
  int volume = 0;
  int deaths = 0;
  double expected_pct = 0.0;
};

struct CalibrationTargets {
  std::vector<HospitalTarget> hospitals;
  // fractions, not percents
  double male = 0, renal_failure = 0, diabetes = 0, hypertension = 0, pvd = 0, prior_pci = 0,
         shock = 0, iabp = 0;
  std::array<double, 3> ef{};      // ge40, lt30_or_missing, b30to39
  std::array<double, 6> mi{};      // none, le6h, h7to24, d1to7, d8to21, gt21d
  std::array<double, 3> status{};  // elective, urgent, emergent
  double yrs_mean = 1.5;
  std::array<double, kDesignCols> odds_ratios{};

  static CalibrationTargets load_json(const std::string& path);
  void validate() const;
  // marginal prevalence of each design column implied by the factor tables
  std::array<double, kDesignCols> column_prevalence() const;
};

struct Coefficients {
  double intercept = 0.0;
  std::array<double, kDesignCols> slopes{};

  static Coefficients load_json(const std::string& path);
};

// generation conventions recorded alongside every synthetic cohort:
// yrs_over_65 ~ clamp(Normal(yrs_mean, kYrsSd), 0, kYrsMax)
inline constexpr double kYrsSd = 4.0;
inline constexpr double kYrsMax = 30.0;

struct GeneratorMeta {
  uint64_t seed = 0;
  std::vector<double> tilt_shift;            // per hospital
  std::vector<int> tilt_attempts;            // CRN redraws used per hospital
  std::vector<double> realized_expected_pct; // mean model risk over generated rows
  double intercept = 0.0;
  std::array<double, kDesignCols> slopes{};
  std::string to_json() const;
};

// Draws each hospital's case mix from the marginal factor distributions with a
// per-hospital scalar tilt on the prevalence logits, bisected so the mean model
// risk over the generated rows matches the hospital's expected-rate target.
// Deaths are then assigned from the risk model conditional on the hospital's
// target death count. Deterministic given the seed.
std::pair<Cohort, GeneratorMeta> synthesize_cohort(const CalibrationTargets& targets,
                                                   const Coefficients& coef, uint64_t seed);

// Monte Carlo estimate of the untilted population mortality rate implied by
// (targets, coef); calibration helper for choosing intercepts and test targets.
double model_rate_untilted(const CalibrationTargets& targets, const Coefficients& coef,
                           int n_draws, uint64_t seed);

}  // namespace profiler
