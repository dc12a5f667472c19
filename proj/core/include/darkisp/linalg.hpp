#pragma once

#include <cstddef>

namespace darkisp::linalg {

// Jacobi eigendecomposition of a symmetric n x n matrix (row-major).
// On return evals holds eigenvalues in descending order and evecs the
// matching eigenvectors as columns, so A = V diag(evals) V^T.
void eigen_sym(const double* A, std::size_t n, double* evals, double* evecs);

// Gaussian elimination with partial pivoting; false if singular.
bool invert(const double* A, std::size_t n, double* out);

bool invert3(const double A[9], double out[9]);

// lambda_max / lambda_min; +inf when lambda_min <= tol * lambda_max.
double condition_number_sym(const double* G, std::size_t n);

// Pseudoinverse of a symmetric PSD matrix via eigendecomposition, discarding
// eigenvalues below rtol * lambda_max. Returns the retained rank.
std::size_t pinv_sym(const double* G, std::size_t n, double rtol, double* out);

}  // namespace darkisp::linalg
