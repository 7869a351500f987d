#pragma once

#include <string>
#include <vector>

#include "subviews/scorer.hpp"
#include "subviews/solver.hpp"

namespace subviews {

struct GroupTestReport {
  std::string name;
  Index k = 0;
  double statistic = NAN;
  double df = 0.0;
  double p_value = NAN;
  double p_bh = NAN;
  double d1_diag = NAN;
  double xi = NAN;
  std::string method;  // "multivariate" or "union"
  bool testable = true;
  std::string note;
};

/// T_k = ||P_k(Y - sum_{j != k} X_j B_j)||^2 / sigma^2 against chi2 with
/// rank(X_k) q degrees of freedom.
GroupTestReport group_test(const PreparedData& data, const ScaledFit& fit,
                           const ScoreProjection& sp);

/// A group that could not be tested: p-value and statistic stay NaN.
GroupTestReport untestable_report(const std::string& name, Index k, const std::string& reason,
                                  const std::string& method);

/// One-step bias correction of a fitted group. With full-rank X_k this is the
/// coefficient B_k + (S_k'X_k)^+ S_k'(Y - XB); otherwise the group effect
/// X_k B_k + (P_k Q_k)^+ P_k (Y - XB).
struct DebiasedEstimate {
  Index k = 0;
  bool coefficient_level = true;
  Matrix estimate;  // p_k x q or n x q
};

DebiasedEstimate debias(const PreparedData& data, const ScaledFit& fit, const ScoreProjection& sp);

/// Known noise and coefficients of a simulated data set.
struct SimulationTruth {
  Matrix noise;                   // E, n x q
  std::vector<Matrix> b_blocks;   // B*_k
};

struct PivotalValue {
  double value = 0.0;            // ||P_k E - Rem_k||^2 / sigma^2
  double remainder_norm = 0.0;   // ||Rem_k||_F
};

/// Rem_k = P_k sum_{j != k} (X_j B_j - X_j B*_j).
PivotalValue pivotal_statistic(const PreparedData& data, const ScaledFit& fit,
                               const ScoreProjection& sp, const SimulationTruth& truth);

/// Benjamini-Hochberg adjusted p-values in the input order, capped at 1.
std::vector<double> bh_adjust(const std::vector<double>& p);

/// Fills p_bh for the testable reports; the others keep NaN.
void apply_bh(std::vector<GroupTestReport>& reports);

/// Bonferroni combination over responses: min(q min_l p_l, 1).
double union_pvalue(const std::vector<double>& per_response);

}  // namespace subviews
