#pragma once

#include <vector>

#include "subviews/linops.hpp"
#include "subviews/solver.hpp"

namespace subviews::detail {

/// Sufficient statistics of a least-squares loss. The ADMM below only ever
/// touches X'X, X'Y and Y'Y, so every iteration costs O(p^2 q) regardless of n.
struct GramSystem {
  Matrix xtx;
  Matrix xty;
  double yty = 0.0;
  Vector evals;  // X'X = V diag(evals) V'
  Matrix evecs;
  std::vector<Index> offsets;
  std::vector<Index> sizes;

  Index p() const { return xtx.rows(); }
  Index q() const { return xty.cols(); }
  double rss(const Matrix& b) const;
};

GramSystem make_gram(const Matrix& x, const Matrix& y, std::vector<Index> offsets,
                     std::vector<Index> sizes);

/// min_B 1/(2 s) ||Y - XB||^2 + sum_k tau_k ||B_k||_*, where s = loss_scale, or
/// s = loss_scale * sigma with sigma = sqrt(rss(B)/sigma_denominator) refreshed
/// after every B-step when update_sigma is set.
struct AdmmProblem {
  const GramSystem* gram = nullptr;
  std::vector<double> tau;
  double loss_scale = 1.0;
  bool update_sigma = false;
  double sigma_denominator = 1.0;
};

struct AdmmOutcome {
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // profiled objective per sweep (update_sigma only)
};

AdmmOutcome run_admm(const AdmmProblem& problem, const SolverOptions& options, AdmmState& state,
                     bool record_trace = false);

}  // namespace subviews::detail
