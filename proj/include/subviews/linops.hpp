#pragma once

#include <Eigen/Dense>

namespace subviews {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Cutoff rule for "numerically zero" singular values. A singular value d is
/// kept when d > max(rel_tol * d1, abs_floor).
struct SpectralTolerance {
  double rel_tol = 1e-10;
  double abs_floor = 0.0;

  double cutoff(double d1) const;
};

/// Singular value soft-thresholding: U max(D - tau, 0) V^T, the minimizer of
/// 0.5 ||A - m||_F^2 + tau ||A||_*.
Matrix nuclear_prox(const Matrix& m, double tau);

/// Same, also reporting the nuclear norm of the result.
Matrix nuclear_prox(const Matrix& m, double tau, double& result_norm);

double nuclear_norm(const Matrix& m);
double spectral_norm(const Matrix& m);
Vector singular_values(const Matrix& m);

/// Orthonormal basis (n x rank) for the column space of m.
Matrix orthonormal_basis(const Matrix& m, const SpectralTolerance& tol = {});

/// Orthogonal projector onto the column space of m.
Matrix column_space_projector(const Matrix& m, const SpectralTolerance& tol = {});

/// A^+ B with singular values of A at or below the cutoff treated as zero.
Matrix pinv_apply(const Matrix& a, const Matrix& b, const SpectralTolerance& tol = {});

Index numerical_rank(const Matrix& m, const SpectralTolerance& tol = {});

/// Largest singular value of P (I - Q) for orthogonal projectors given by
/// orthonormal bases of their ranges, computed without forming n x n matrices.
double projector_gap(const Matrix& p_basis, const Matrix& q_basis);

}  // namespace subviews
