#pragma once

#include <Eigen/Dense>

#include "iqcmhe/errors.hpp"

namespace iqcmhe::numkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Kronecker product, dims (a.rows*b.rows, a.cols*b.cols).
Matrix kron(const Matrix& a, const Matrix& b);

inline Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

bool is_symmetric(const Matrix& a, double rtol = 1e-12);

/// Eigenvalues of a symmetric matrix, ascending.
Vector sym_eigenvalues(const Matrix& a);

double min_eigenvalue(const Matrix& a);
double max_eigenvalue(const Matrix& a);

/// Largest lambda with det(a - lambda b) = 0 for b > 0; computed through the
/// b^{-1/2} similarity transform (Cholesky variant).
/// Throws NotPositiveDefinite when b's smallest eigenvalue is <= b_tol.
double generalized_max_eig(const Matrix& a, const Matrix& b, double b_tol = 1e-10);

/// Off-diagonal entries <= tol, every row sum and column sum >= -tol.
bool is_doubly_hyperdominant(const Matrix& w, double tol);

/// L with L^T L = a for positive-semidefinite a; eigenvalues below tol are
/// truncated to zero. Throws NotPsd when min eigenvalue < -tol.
Matrix psd_factor(const Matrix& a, double tol = 1e-9);

}  // namespace iqcmhe::numkit
