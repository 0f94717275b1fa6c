#pragma once

#include <optional>
#include <string>

#include "profiler/sampler.hpp"

namespace profiler::cli {

inline constexpr int kOk = 0;
inline constexpr int kInputError = 2;
inline constexpr int kNonConverged = 3;

struct CommonOpts {
  uint64_t seed = 1;
  bool seed_given = false;  // CLI flag beats the config file
  std::string out_dir = "out";
  std::string config_path;
  int threads = 0;
};

struct SimulateOpts : CommonOpts {
  std::string targets_path;
  std::string coef_path;
  int volume_override = 0;  // per-hospital volume; deaths rescale proportionally
};

struct ProfileOpts : CommonOpts {
  std::string cohort_path;
  bool crossval = false;
  std::optional<double> tau_fixed;
  double anchor_pct = 0.0;  // 0: pooled crude rate of the cohort
  bool emit_draws = false;
};

struct SensitivityOpts : CommonOpts {
  std::string cohort_path;
  std::string priors_path;
};

struct CompositeOpts : CommonOpts {
  std::string panel_path;
  std::string patient_path;
  std::string model = "pooled";  // pooled | allornone | rasch | 2pl
};

struct ClassicalOpts : CommonOpts {
  std::string cohort_path;
  double threshold = 1.645;
};

int cmd_simulate(const SimulateOpts& opts);
int cmd_profile(const ProfileOpts& opts);
int cmd_sensitivity(const SensitivityOpts& opts);
int cmd_composite(const CompositeOpts& opts);
int cmd_classical(const ClassicalOpts& opts);

uint64_t fnv1a64(std::string_view bytes);

}  // namespace profiler::cli
