// Compares the serial reference kernels against the OpenMP versions, and a
// single-threaded against a thread-parallel sampler run.
#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "profiler/kernels.hpp"
#include "profiler/registry.hpp"
#include "profiler/rng.hpp"
#include "profiler/sampler.hpp"

using namespace profiler;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", threads());

  // kernel benchmark
  const long n = 4'000'000;
  std::vector<double> eta(n);
  std::vector<uint8_t> y(n);
  Rng rng(7);
  for (long j = 0; j < n; ++j) {
    eta[j] = 3.0 * rng.normal() - 4.0;
    y[j] = rng.uniform() < 0.1 ? 1 : 0;
  }
  auto t0 = Clock::now();
  const double a = kernels::bernoulli_loglik_serial(eta, y);
  const double t_serial = ms_since(t0);
  t0 = Clock::now();
  const double b = kernels::bernoulli_loglik(eta, y);
  const double t_omp = ms_since(t0);
  std::printf("bernoulli_loglik  n=%ld\n", n);
  std::printf("  serial  %8.2f ms   (%.6f)\n", t_serial, a);
  std::printf("  openmp  %8.2f ms   (%.6f)   speedup %.2fx\n\n", t_omp, b, t_serial / t_omp);

  std::vector<double> grad(19), info(19 * 19);
  std::vector<double> x(static_cast<size_t>(n / 8) * 19);
  std::vector<uint8_t> ys(n / 8);
  for (size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  for (auto& v : ys) v = rng.uniform() < 0.1 ? 1 : 0;
  std::vector<double> beta(19, 0.05);
  t0 = Clock::now();
  kernels::logistic_score_info_serial(x, ys, 19, beta, grad, info);
  const double g_serial = ms_since(t0);
  t0 = Clock::now();
  kernels::logistic_score_info(x, ys, 19, beta, grad, info);
  const double g_omp = ms_since(t0);
  std::printf("logistic_score_info  n=%ld p=19\n", n / 8);
  std::printf("  serial  %8.2f ms\n", g_serial);
  std::printf("  openmp  %8.2f ms   speedup %.2fx\n\n", g_omp, g_serial / g_omp);

  // sampler: serial chains vs parallel chains on a synthetic cohort
  const std::string data_dir = PROFILER_DATA_DIR;
  const auto targets = CalibrationTargets::load_json(data_dir + "/ma_targets.json");
  const auto coef = Coefficients::load_json(data_dir + "/ma_coefficients.json");
  auto [cohort, meta] = synthesize_cohort(targets, coef, 1);

  HierSpec spec;
  ChainConfig cfg;
  cfg.burn_in = 500;
  cfg.keep = 500;
  cfg.chains = 2;
  cfg.joint_beta1 = true;

#ifdef _OPENMP
  const int save = omp_get_max_threads();
  omp_set_num_threads(1);
#endif
  t0 = Clock::now();
  auto d1 = sample_hier(spec, cohort, cfg);
  const double s_serial = ms_since(t0);
#ifdef _OPENMP
  omp_set_num_threads(save);
#endif
  t0 = Clock::now();
  auto d2 = sample_hier(spec, cohort, cfg);
  const double s_par = ms_since(t0);
  const bool identical = d1.values == d2.values;
  std::printf("sample_hier  (%d chains, %d sweeps, n=%d)\n", cfg.chains,
              cfg.burn_in + cfg.keep, cohort.n_patients());
  std::printf("  1 thread   %8.1f ms\n", s_serial);
  std::printf("  %d threads  %8.1f ms   speedup %.2fx   draws identical: %s\n", threads(), s_par,
              s_serial / s_par, identical ? "yes" : "NO");
  return identical ? 0 : 1;
}
