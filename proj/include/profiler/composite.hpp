#pragma once

#include <optional>
#include <string>
#include <vector>

#include "profiler/sampler.hpp"

namespace profiler {

// per-hospital success/eligibility counts for K process measures
struct MeasurePanel {
  std::vector<std::string> hospitals;
  std::vector<std::string> measures;
  std::vector<int> y;  // I x K row-major, patients receiving needed therapy
  std::vector<int> n;  // I x K, eligible patients

  int I() const { return static_cast<int>(hospitals.size()); }
  int K() const { return static_cast<int>(measures.size()); }
  int yy(int i, int k) const { return y[static_cast<size_t>(i) * measures.size() + k]; }
  int nn(int i, int k) const { return n[static_cast<size_t>(i) * measures.size() + k]; }

  void validate() const;
  static MeasurePanel from_csv(const std::string& path);
  static MeasurePanel parse_csv(std::string_view text);
};

struct PooledComposite {
  std::vector<double> rate;   // sum_k Y / sum_k N per hospital
  double threshold = 0.0;     // nearest-rank 90th percentile
  std::vector<uint8_t> flag;  // rate at or above the threshold
};

PooledComposite pooled_composite(const MeasurePanel& panel);

// patient-level eligibility/success sets
struct PatientMeasures {
  struct Patient {
    std::string hospital_id, patient_id;
    std::vector<int> eligible;  // measure indices
    std::vector<int> received;
  };
  std::vector<std::string> hospitals;
  std::vector<std::string> measures;
  std::vector<Patient> patients;

  static PatientMeasures from_csv(const std::string& path);
  static PatientMeasures parse_csv(std::string_view text);
};

struct AllOrNoneResult {
  std::vector<int> n_scored;                 // patients with nonempty eligible set
  std::vector<std::optional<double>> rate;   // empty when no scorable patients
};

// a patient succeeds only when every eligible measure was received
AllOrNoneResult all_or_none(const PatientMeasures& pm);

MeasurePanel panel_from_patients(const PatientMeasures& pm);

enum class IrtKind { rasch, two_pl };

struct IrtFit {
  IrtKind kind = IrtKind::rasch;
  std::vector<std::string> measures;       // kept, in panel order
  std::vector<std::string> dropped;        // degenerate measures removed before the fit
  std::vector<std::string> warnings;
  std::vector<double> difficulty;          // posterior means, kept measures
  std::vector<double> discrimination;      // size 1 for rasch, K for two_pl
  std::vector<stats::SummaryStat> theta;   // per hospital
  PosteriorDraws draws;
};

// latent-quality fit via the shared MCMC engine. Sign convention: the linear
// predictor is difficulty_k + discrimination_k * theta_i with positive
// discriminations, so higher theta means a higher chance of needed therapy;
// negate theta to recover the paper's minus-sign form.
IrtFit fit_irt(const MeasurePanel& panel, IrtKind kind, const ChainConfig& cfg);

// exact joint log density (likelihood with binomial constants plus priors);
// disc has one entry for rasch, K entries for two_pl
double irt_log_posterior(std::span<const double> theta, std::span<const double> diff,
                         std::span<const double> disc, const MeasurePanel& panel, IrtKind kind);

struct IccCurve {
  std::string measure;
  std::vector<double> p;
};

// item characteristic curves at the posterior-mean parameters
std::vector<IccCurve> icc_data(const IrtFit& fit, std::span<const double> theta_grid);

std::string composite_report_json(const MeasurePanel& panel, const PooledComposite& pooled);
std::string irt_report_json(const IrtFit& fit, const MeasurePanel& panel);
std::string icc_csv(const IrtFit& fit, std::span<const double> grid);

}  // namespace profiler
