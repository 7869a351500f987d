#include "subviews/linops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "subviews/errors.hpp"

namespace subviews {
namespace {

using Svd = Eigen::BDCSVD<Matrix>;

Svd thin_svd(const Matrix& m) {
  Svd svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericalError("SVD failed on " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " matrix");
  return svd;
}

Index count_above(const Vector& d, const SpectralTolerance& tol) {
  if (d.size() == 0) return 0;
  const double cut = tol.cutoff(d(0));
  Index r = 0;
  while (r < d.size() && d(r) > cut) ++r;
  return r;
}

}  // namespace

double SpectralTolerance::cutoff(double d1) const { return std::max(rel_tol * d1, abs_floor); }

Matrix nuclear_prox(const Matrix& m, double tau) {
  double unused = 0.0;
  return nuclear_prox(m, tau, unused);
}

Matrix nuclear_prox(const Matrix& m, double tau, double& result_norm) {
  result_norm = 0.0;
  if (m.size() == 0) return m;
  // Rank-one shapes reduce to vector soft-thresholding.
  if (m.cols() == 1 || m.rows() == 1) {
    const double norm = m.norm();
    if (tau <= 0.0) {
      result_norm = norm;
      return m;
    }
    if (norm <= tau) return Matrix::Zero(m.rows(), m.cols());
    result_norm = norm - tau;
    return m * ((norm - tau) / norm);
  }
  const Svd svd = thin_svd(m);
  const Vector& d = svd.singularValues();
  if (tau <= 0.0) {
    result_norm = d.sum();
    return m;
  }
  Index keep = 0;
  while (keep < d.size() && d(keep) > tau) ++keep;
  if (keep == 0) return Matrix::Zero(m.rows(), m.cols());
  const Vector shrunk = (d.head(keep).array() - tau).matrix();
  result_norm = shrunk.sum();
  return svd.matrixU().leftCols(keep) * shrunk.asDiagonal() *
         svd.matrixV().leftCols(keep).transpose();
}

Vector singular_values(const Matrix& m) {
  if (m.size() == 0) return Vector();
  if (m.cols() == 1 || m.rows() == 1) return Vector::Constant(1, m.norm());
  Svd svd(m);
  if (svd.info() != Eigen::Success)
    throw NumericalError("SVD failed on " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " matrix");
  return svd.singularValues();
}

double nuclear_norm(const Matrix& m) { return singular_values(m).sum(); }

double spectral_norm(const Matrix& m) {
  const Vector d = singular_values(m);
  return d.size() ? d(0) : 0.0;
}

Matrix orthonormal_basis(const Matrix& m, const SpectralTolerance& tol) {
  if (m.size() == 0) return Matrix(m.rows(), 0);
  const Svd svd = thin_svd(m);
  return svd.matrixU().leftCols(count_above(svd.singularValues(), tol));
}

Matrix column_space_projector(const Matrix& m, const SpectralTolerance& tol) {
  const Matrix u = orthonormal_basis(m, tol);
  return u * u.transpose();
}

Matrix pinv_apply(const Matrix& a, const Matrix& b, const SpectralTolerance& tol) {
  if (a.rows() != b.rows())
    throw ValidationError("pinv_apply: A has " + std::to_string(a.rows()) + " rows but B has " +
                          std::to_string(b.rows()));
  if (a.size() == 0) return Matrix::Zero(a.cols(), b.cols());
  const Svd svd = thin_svd(a);
  const Index r = count_above(svd.singularValues(), tol);
  if (r == 0) return Matrix::Zero(a.cols(), b.cols());
  const Vector inv = svd.singularValues().head(r).cwiseInverse();
  return svd.matrixV().leftCols(r) * inv.asDiagonal() *
         (svd.matrixU().leftCols(r).transpose() * b);
}

Index numerical_rank(const Matrix& m, const SpectralTolerance& tol) {
  const Vector d = singular_values(m);
  if (d.size() == 0 || d(0) == 0.0) return 0;
  return count_above(d, tol);
}

double projector_gap(const Matrix& p_basis, const Matrix& q_basis) {
  if (p_basis.cols() == 0) return 0.0;
  // d1(P(I - Q)) = d1((I - Q)U) for the orthonormal basis U of range(P).
  const Matrix resid = p_basis - q_basis * (q_basis.transpose() * p_basis);
  return std::min(spectral_norm(resid), 1.0);
}

}  // namespace subviews
