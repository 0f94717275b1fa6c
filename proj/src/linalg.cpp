#include "profiler/linalg.hpp"

#include <cmath>

namespace profiler::linalg {

bool cholesky(std::vector<double>& a, int p, double tol) {
  for (int k = 0; k < p; ++k) {
    double d = a[k * p + k];
    for (int j = 0; j < k; ++j) d -= a[k * p + j] * a[k * p + j];
    if (!(d > tol)) return false;
    const double lkk = std::sqrt(d);
    a[k * p + k] = lkk;
    for (int i = k + 1; i < p; ++i) {
      double s = a[i * p + k];
      for (int j = 0; j < k; ++j) s -= a[i * p + j] * a[k * p + j];
      a[i * p + k] = s / lkk;
    }
    for (int j = k + 1; j < p; ++j) a[k * p + j] = 0.0;
  }
  return true;
}

void chol_solve(const std::vector<double>& l, int p, std::span<double> b) {
  for (int i = 0; i < p; ++i) {
    double s = b[i];
    for (int j = 0; j < i; ++j) s -= l[i * p + j] * b[j];
    b[i] = s / l[i * p + i];
  }
  for (int i = p - 1; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < p; ++j) s -= l[j * p + i] * b[j];
    b[i] = s / l[i * p + i];
  }
}

std::vector<double> chol_inverse(const std::vector<double>& l, int p) {
  std::vector<double> inv(p * p, 0.0);
  std::vector<double> e(p);
  for (int c = 0; c < p; ++c) {
    std::fill(e.begin(), e.end(), 0.0);
    e[c] = 1.0;
    chol_solve(l, p, e);
    for (int r = 0; r < p; ++r) inv[r * p + c] = e[r];
  }
  // enforce exact symmetry
  for (int r = 0; r < p; ++r)
    for (int c = r + 1; c < p; ++c) {
      const double v = 0.5 * (inv[r * p + c] + inv[c * p + r]);
      inv[r * p + c] = inv[c * p + r] = v;
    }
  return inv;
}

void lower_mul(const std::vector<double>& l, int p, std::span<const double> z,
               std::span<double> y) {
  for (int i = 0; i < p; ++i) {
    double s = 0.0;
    for (int j = 0; j <= i; ++j) s += l[i * p + j] * z[j];
    y[i] = s;
  }
}

}  // namespace profiler::linalg
