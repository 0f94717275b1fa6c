#pragma once

#include <span>
#include <vector>

// Small dense symmetric solves; the largest system here is 19x19.
namespace profiler::linalg {

// in-place lower Cholesky of a row-major p x p SPD matrix; false if a pivot
// falls below tol (not positive definite / rank deficient)
bool cholesky(std::vector<double>& a, int p, double tol = 1e-12);

// solve (L L') x = b given the factor from cholesky(); b overwritten with x
void chol_solve(const std::vector<double>& l, int p, std::span<double> b);

// inverse of the original matrix from its Cholesky factor
std::vector<double> chol_inverse(const std::vector<double>& l, int p);

// y = L z for lower-triangular L (used for correlated proposals)
void lower_mul(const std::vector<double>& l, int p, std::span<const double> z,
               std::span<double> y);

}  // namespace profiler::linalg
