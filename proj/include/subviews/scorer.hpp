#pragma once

#include <optional>
#include <string>
#include <vector>

#include "subviews/linops.hpp"
#include "subviews/parallel.hpp"
#include "subviews/solver.hpp"

namespace subviews {

/// Score matrix S_k for group k with the projectors used by the group test.
///
/// Projectors are stored through orthonormal bases of their ranges; the n x n
/// matrices are only formed on request.
struct ScoreProjection {
  Index k = 0;
  Matrix s_matrix;  // n x p_k
  Matrix p_basis;   // range of P_k
  Matrix q_basis;   // range of Q_k = C(X_k)
  Index r_prime = 0;
  Index rank_sx = 0;  // rank(S_k' X_k)
  double d1_diag = 0.0;  // d1(P_k (I - Q_k))
  double d_min = 0.0;    // smallest nonzero singular value of S_k / sqrt(n)
  double xi = 0.0;
  std::vector<double> kkt_norm;   // d1(Q_j S_k / sqrt(n)), 0 at j == k
  std::vector<double> kkt_bound;  // xi w''_j, 0 at j == k
  int iterations = 0;
  bool converged = true;

  Matrix p_matrix() const { return p_basis * p_basis.transpose(); }
  Matrix q_matrix() const { return q_basis * q_basis.transpose(); }
};

struct FeasibilityReport {
  bool gap_ok = false;   // d1(P_k(I - Q_k)) < 1
  bool rank_ok = false;  // rank(S_k' X_k) == rank(X_k)
  bool kkt_ok = false;   // d1(Q_j S_k/sqrt(n)) <= xi w''_j (1 + 1e-3) for j != k
  double d1_diag = 0.0;
  double worst_kkt_ratio = 0.0;
  std::string message;

  bool passed() const { return gap_ok && rank_ok; }
};

struct ScoreOptions {
  double xi = 1.0;
  bool auto_fallback = true;  // halve xi until feasible
  int max_halvings = 10;
  SolverOptions admm;
  SpectralTolerance tol;
};

/// Builds the projection diagnostics for a given score matrix.
ScoreProjection project_score(const PreparedData& data, Index k, Matrix s_matrix, double xi,
                              const std::vector<double>& weights_star,
                              const SpectralTolerance& tol = {});

/// Solves min (1/2n)||X_k - sum_{j != k} X_j G_j||^2 + sum_{j != k} (xi w''_j/sqrt(n)) ||X_j G_j||_*
/// and sets S_k to the residual. Throws NumericalError when rank(S_k'X_k) < rank(X_k).
ScoreProjection estimate_score(const PreparedData& data, Index k, double xi,
                               const std::vector<double>& weights_star,
                               const ScoreOptions& options = {});

FeasibilityReport check_feasibility(const ScoreProjection& sp);

/// estimate_score starting at options.xi, halving xi until the feasibility
/// check passes. Throws NumericalError after options.max_halvings attempts.
ScoreProjection estimate_feasible_score(const PreparedData& data, Index k,
                                        const std::vector<double>& weights_star,
                                        const ScoreOptions& options = {});

/// Per-group outcome: a feasible score or the reason none was found.
struct ScoreOutcome {
  std::optional<ScoreProjection> score;
  std::string failure;
};

/// Feasible scores for every group. Groups are independent.
std::vector<ScoreOutcome> estimate_all_scores(const PreparedData& data,
                                              const std::vector<double>& weights_star,
                                              const ScoreOptions& options = {},
                                              Execution exec = Execution::serial);

}  // namespace subviews
