#pragma once

#include <cstdint>
#include <span>
#include <vector>

// Hot data-parallel loops, each in two forms: a plain serial reference used by
// tests, and an OpenMP version used in production. The OpenMP versions reduce
// over fixed-size chunks and combine partials in chunk order, so results do not
// depend on the number of threads.
namespace profiler::kernels {

inline constexpr int kChunk = 4096;

// sum_j [ y_j * eta_j - log(1 + exp(eta_j)) ]
double bernoulli_loglik_serial(std::span<const double> eta, std::span<const uint8_t> y);
double bernoulli_loglik(std::span<const double> eta, std::span<const uint8_t> y);

void fill_expit_serial(std::span<const double> eta, std::span<double> p);
void fill_expit(std::span<const double> eta, std::span<double> p);

// score and observed information of a logistic regression at beta:
// grad = X'(y - p), info = X'WX with W = diag(p(1-p)); X is n x p row-major
void logistic_score_info_serial(std::span<const double> x, std::span<const uint8_t> y, int p,
                                std::span<const double> beta, std::span<double> grad,
                                std::span<double> info);
void logistic_score_info(std::span<const double> x, std::span<const uint8_t> y, int p,
                         std::span<const double> beta, std::span<double> grad,
                         std::span<double> info);

}  // namespace profiler::kernels
