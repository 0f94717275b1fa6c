#pragma once

#include <stdexcept>
#include <string>

namespace profiler {

enum class Errc {
  missing_column,
  bad_enum_value,
  negative_age,
  empty_cohort,
  unattainable_target,
  separation,
  rank_deficient,
  zero_variance,
  degenerate_input,
  bad_range,
  non_finite_log_posterior,
  insufficient_draws,
  all_eligible_zero,
  degenerate_panel,
  invalid_input,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc c, const std::string& msg) { throw Error(c, msg); }

}  // namespace profiler
