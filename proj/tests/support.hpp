#pragma once

#include <random>
#include <string>
#include <vector>

#include "subviews/composition.hpp"
#include "subviews/solver.hpp"

namespace subviews::testing {

using Rng = std::mt19937_64;

Matrix gaussian(Rng& rng, Index rows, Index cols);

/// Gaussian blocks without intercept or controls, so prepared data equal the raw data.
MultiViewDesign gaussian_design(Rng& rng, Index n, const std::vector<Index>& sizes,
                                bool intercept = false);

/// Positive compositional blocks through the clr map.
MultiViewDesign compositional_design(Rng& rng, Index n, const std::vector<Index>& sizes,
                                     bool intercept = true);

/// Projector onto the column space of m by modified Gram-Schmidt with
/// reorthogonalization; columns with residual norm below tol * max norm are dropped.
Matrix gram_schmidt_projector(const Matrix& m, double tol = 1e-9);

/// Least squares through the normal equations (full column rank only).
Matrix ols(const Matrix& x, const Matrix& y);

/// Group weights straight from their definition.
std::vector<double> reference_weights(const std::vector<Matrix>& blocks, Index q, double eps);

/// Reference minimizer of ||Y - XB||_F/sqrt(nq) + sum_k tau_k ||B_k||_*, the
/// scaled objective with sigma profiled out, by accelerated proximal gradient
/// with backtracking and adaptive restart.
struct ReferenceFit {
  Matrix b;
  double objective = 0.0;
  double sigma = 0.0;
};
ReferenceFit proximal_gradient_reference(const Matrix& x, const Matrix& y,
                                         const std::vector<Index>& sizes,
                                         const std::vector<double>& tau, int iterations);

/// Profiled objective of a coefficient matrix.
double profiled_objective(const Matrix& x, const Matrix& y, const std::vector<Index>& sizes,
                          const std::vector<double>& tau, const Matrix& b);

/// Subgradient certificate for the scaled problem: for each block,
/// G_k = X_k'R/(nq sigma tau_k) must satisfy d1(G_k) <= 1 + tol and
/// <G_k, B_k> >= ||B_k||_* (1 - tol). Returns the worst violation.
double kkt_violation(const Matrix& x, const Matrix& y, const std::vector<Index>& sizes,
                     const std::vector<double>& tau, const Matrix& b);

/// Benjamini-Hochberg by its definition: p_bh(i) = min over j with
/// p_(j) >= p_i of min(1, m p_(j)/j).
std::vector<double> bh_reference(const std::vector<double>& p);

/// Fresh empty directory under the system temp path.
std::string temp_dir(const std::string& tag);

}  // namespace subviews::testing
