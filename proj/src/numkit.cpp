#include "iqcmhe/numkit.hpp"

#include <cmath>

namespace iqcmhe::numkit {

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

bool is_symmetric(const Matrix& a, double rtol) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= rtol * scale;
}

Vector sym_eigenvalues(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimMismatch("sym_eigenvalues: matrix not square");
  if (a.rows() == 0) return Vector(0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double min_eigenvalue(const Matrix& a) {
  if (a.rows() == 0) return 0.0;
  return sym_eigenvalues(a)(0);
}

double max_eigenvalue(const Matrix& a) {
  if (a.rows() == 0) return 0.0;
  const Vector ev = sym_eigenvalues(a);
  return ev(ev.size() - 1);
}

double generalized_max_eig(const Matrix& a, const Matrix& b, double b_tol) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw DimMismatch("generalized_max_eig: dimension mismatch");
  if (min_eigenvalue(b) <= b_tol)
    throw NotPositiveDefinite("generalized_max_eig: b is not positive definite");
  Eigen::LLT<Matrix> llt(symmetrized(b));
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("generalized_max_eig: Cholesky of b failed");
  const Matrix l_inv =
      llt.matrixL().solve(Matrix::Identity(b.rows(), b.cols()));
  // Same spectrum as b^{-1/2} a b^{-1/2}.
  return max_eigenvalue(l_inv * symmetrized(a) * l_inv.transpose());
}

bool is_doubly_hyperdominant(const Matrix& w, double tol) {
  if (w.rows() != w.cols()) throw DimMismatch("is_doubly_hyperdominant: not square");
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      if (i != j && w(i, j) > tol) return false;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    if (w.row(i).sum() < -tol) return false;
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    if (w.col(j).sum() < -tol) return false;
  return true;
}

Matrix psd_factor(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) throw DimMismatch("psd_factor: not square");
  if (a.rows() == 0) return Matrix(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(a));
  const Vector ev = es.eigenvalues();
  if (ev(0) < -tol) throw NotPsd("psd_factor: matrix is not positive semidefinite");
  Vector root = ev.cwiseMax(0.0).cwiseSqrt();
  return root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace iqcmhe::numkit
