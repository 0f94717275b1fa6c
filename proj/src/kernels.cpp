#include "profiler/kernels.hpp"

#include <cmath>
#include <cstring>

#include "profiler/stats.hpp"

namespace profiler::kernels {

namespace {

inline double loglik_chunk(const double* eta, const uint8_t* y, long a, long b) {
  double s = 0.0;
  for (long j = a; j < b; ++j) s += y[j] * eta[j] - stats::log1pexp(eta[j]);
  return s;
}

}  // namespace

double bernoulli_loglik_serial(std::span<const double> eta, std::span<const uint8_t> y) {
  return loglik_chunk(eta.data(), y.data(), 0, static_cast<long>(eta.size()));
}

double bernoulli_loglik(std::span<const double> eta, std::span<const uint8_t> y) {
  const long n = static_cast<long>(eta.size());
  const long nchunks = (n + kChunk - 1) / kChunk;
  if (nchunks <= 1) return bernoulli_loglik_serial(eta, y);
  std::vector<double> partial(nchunks);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < nchunks; ++c) {
    const long a = c * kChunk;
    partial[c] = loglik_chunk(eta.data(), y.data(), a, std::min(a + kChunk, n));
  }
  double s = 0.0;
  for (double v : partial) s += v;
  return s;
}

void fill_expit_serial(std::span<const double> eta, std::span<double> p) {
  for (size_t j = 0; j < eta.size(); ++j) p[j] = stats::expit(eta[j]);
}

void fill_expit(std::span<const double> eta, std::span<double> p) {
  const long n = static_cast<long>(eta.size());
#pragma omp parallel for schedule(static, kChunk)
  for (long j = 0; j < n; ++j) p[j] = stats::expit(eta[j]);
}

namespace {

inline void score_info_chunk(const double* x, const uint8_t* y, int p, const double* beta,
                             long a, long b, double* grad, double* info) {
  for (long j = a; j < b; ++j) {
    const double* row = x + j * p;
    double eta = 0.0;
    for (int k = 0; k < p; ++k) eta += row[k] * beta[k];
    const double pr = stats::expit(eta);
    const double r = y[j] - pr;
    const double w = pr * (1.0 - pr);
    for (int k = 0; k < p; ++k) {
      grad[k] += row[k] * r;
      const double wk = w * row[k];
      for (int l = k; l < p; ++l) info[k * p + l] += wk * row[l];
    }
  }
}

inline void symmetrize(double* info, int p) {
  for (int k = 0; k < p; ++k)
    for (int l = 0; l < k; ++l) info[k * p + l] = info[l * p + k];
}

}  // namespace

void logistic_score_info_serial(std::span<const double> x, std::span<const uint8_t> y, int p,
                                std::span<const double> beta, std::span<double> grad,
                                std::span<double> info) {
  std::memset(grad.data(), 0, sizeof(double) * p);
  std::memset(info.data(), 0, sizeof(double) * p * p);
  score_info_chunk(x.data(), y.data(), p, beta.data(), 0, static_cast<long>(y.size()),
                   grad.data(), info.data());
  symmetrize(info.data(), p);
}

void logistic_score_info(std::span<const double> x, std::span<const uint8_t> y, int p,
                         std::span<const double> beta, std::span<double> grad,
                         std::span<double> info) {
  const long n = static_cast<long>(y.size());
  const long nchunks = (n + kChunk - 1) / kChunk;
  if (nchunks <= 1) {
    logistic_score_info_serial(x, y, p, beta, grad, info);
    return;
  }
  std::vector<double> pg(nchunks * p, 0.0), pi(nchunks * p * p, 0.0);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < nchunks; ++c) {
    const long a = c * kChunk;
    score_info_chunk(x.data(), y.data(), p, beta.data(), a, std::min(a + kChunk, n),
                     pg.data() + c * p, pi.data() + c * p * p);
  }
  std::memset(grad.data(), 0, sizeof(double) * p);
  std::memset(info.data(), 0, sizeof(double) * p * p);
  for (long c = 0; c < nchunks; ++c) {
    for (int k = 0; k < p; ++k) grad[k] += pg[c * p + k];
    for (int k = 0; k < p * p; ++k) info[k] += pi[c * p * p + k];
  }
  symmetrize(info.data(), p);
}

}  // namespace profiler::kernels
