#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "subviews/composition.hpp"
#include "subviews/linops.hpp"
#include "subviews/parallel.hpp"

namespace subviews {

/// Response and design with the intercept and controls projected out.
///
/// Both are unpenalized, so minimizing over them first leaves the same
/// problem in M Y and M X with M = I - W W^+ and W = [1, Z0]. The raw data are
/// kept so the nuisance coefficients can be recovered afterwards.
class PreparedData {
 public:
  PreparedData(const Matrix& y, const MultiViewDesign& design);

  Index n() const { return y_.rows(); }
  Index q() const { return y_.cols(); }
  Index p() const { return x_.cols(); }
  Index num_groups() const { return static_cast<Index>(sizes_.size()); }

  const Matrix& y() const { return y_; }
  const Matrix& x() const { return x_; }
  auto block(Index k) const { return x_.middleCols(offsets_[k], sizes_[k]); }
  const std::vector<Index>& offsets() const { return offsets_; }
  const std::vector<Index>& sizes() const { return sizes_; }
  const std::vector<std::string>& group_names() const { return names_; }
  bool has_intercept() const { return has_intercept_; }
  Index num_controls() const { return num_controls_; }

  /// Intercept and control coefficients for a given B: W^+ (Y - X B).
  std::pair<Vector, Matrix> nuisance_coefficients(const Matrix& b) const;

  /// Same projection applied to another matrix with n rows (e.g. a noise draw).
  Matrix project_out_nuisance(const Matrix& m) const;

 private:
  Matrix y_raw_;
  Matrix x_raw_;
  Matrix y_;
  Matrix x_;
  Matrix nuisance_;        // W = [1, Z0]
  Matrix nuisance_basis_;  // orthonormal basis of C(W)
  std::vector<Index> offsets_;
  std::vector<Index> sizes_;
  std::vector<std::string> names_;
  bool has_intercept_ = false;
  Index num_controls_ = 0;
};

/// Group weights w_k = d1(X_k){sqrt(p_k q) + sqrt(2 log(K/eps))}/(nq), the
/// companion w*_k = sqrt(p_k/n) + sqrt(2 log(K/eps)/(nq)) used by the scorer,
/// and the tuning parameter lambda.
struct PenaltyWeights {
  std::vector<double> w;
  std::vector<double> w_star;
  std::vector<bool> degenerate;  // d1(X_k) == 0, weight forced to zero
  double epsilon = 0.05;
  double lambda = 0.0;

  PenaltyWeights with_lambda(double l) const {
    PenaltyWeights out = *this;
    out.lambda = l;
    return out;
  }
};

PenaltyWeights compute_weights(const PreparedData& data, double epsilon = 0.05);
PenaltyWeights compute_weights(const MultiViewDesign& design, Index q, double epsilon = 0.05);

enum class SolverKind { bcd, admm };

std::string to_string(SolverKind kind);
SolverKind solver_kind_from_string(const std::string& s);

struct SolverOptions {
  SolverKind kind = SolverKind::admm;
  double tol = 1e-6;  // ADMM primal/dual residual tolerance (abs + rel)
  int max_iters = 5000;
  double sigma_tol = 1e-6;  // BCD: relative change in sigma
  int max_outer = 200;
  double rho0 = 1.0;
  double rho_growth = 1.01;
  double rho_max = 1e4;
  int divergence_window = 100;
  /// Instead of geometric growth, rescale rho by 2 whenever one residual
  /// exceeds the other (relative to its tolerance) by a factor of 10.
  bool balance_rho = true;
  /// Scaled fits: the noise estimate staying below sigma_collapse times the
  /// null-model value for collapse_window iterations signals an interpolating
  /// fit, reported as NumericalError.
  double sigma_collapse = 1e-6;
  int collapse_window = 50;
};

/// Surrogate blocks A, multipliers Lambda and step size for the ADMM splitting
/// A_k = B_k. Matrices are stacked p x q; blocks follow the design's offsets.
struct AdmmState {
  Matrix a;
  Matrix b;
  Matrix lambda_mult;
  double rho = 1.0;
  double sigma = 1.0;
  double r_primal = 0.0;
  double r_dual = 0.0;

  bool initialized() const { return a.size() > 0; }
};

struct ScaledFit {
  std::vector<Matrix> b_blocks;
  Vector mu;
  Matrix c0;
  double sigma = 0.0;
  double lambda = 0.0;
  double objective = 0.0;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  SolverKind solver_kind = SolverKind::admm;
  double r_primal = 0.0;
  double r_dual = 0.0;

  Matrix coefficients() const;
};

struct IrrrFit {
  std::vector<Matrix> b_blocks;
  int iterations = 0;
  bool converged = false;
  double r_primal = 0.0;
  double r_dual = 0.0;
};

/// ||Y - XB||^2/(2nq sigma) + sigma/2 + lambda sum_k w_k ||B_k||_* on prepared data.
double scaled_objective(const PreparedData& data, const std::vector<Matrix>& b_blocks,
                        double sigma, const PenaltyWeights& weights);

/// ||Y - XB||^2/(2nq) + lambda sigma sum_k w_k ||B_k||_*.
double irrr_objective(const PreparedData& data, const std::vector<Matrix>& b_blocks,
                      double sigma_fixed, const PenaltyWeights& weights);

/// ||Y - XB||_F / sqrt(nq).
double noise_level(const PreparedData& data, const Matrix& b);

/// Fixed-sigma composite nuclear norm regression by ADMM.
IrrrFit irrr_fit(const PreparedData& data, const PenaltyWeights& weights, double sigma_fixed,
                 const SolverOptions& options = {});

/// Block coordinate descent: alternate the sigma update with an iRRR solve at
/// weights sigma * w until sigma settles.
ScaledFit scaled_fit_bcd(const PreparedData& data, const PenaltyWeights& weights,
                         const SolverOptions& options = {}, AdmmState* warm = nullptr);

/// Direct ADMM on the joint (B, sigma) problem, sigma refreshed once per sweep.
ScaledFit scaled_fit_admm(const PreparedData& data, const PenaltyWeights& weights,
                          const SolverOptions& options = {}, AdmmState* warm = nullptr);

/// Dispatches on options.kind.
ScaledFit scaled_fit(const PreparedData& data, const PenaltyWeights& weights,
                     const SolverOptions& options = {}, AdmmState* warm = nullptr);

/// Smallest lambda with an all-zero solution:
/// max_k d1(X_k' Y)/(nq sigma0 w_k), sigma0 = ||Y||_F/sqrt(nq).
double lambda_max(const PreparedData& data, const PenaltyWeights& weights);

/// `size` log-spaced values over [ratio * lmax, lmax], descending.
std::vector<double> lambda_grid(double lmax, int size = 50, double ratio = 1e-4);

struct CvRow {
  double lambda = 0.0;
  double mean_nll = 0.0;
  double se_nll = 0.0;
  std::vector<double> fold_nll;
};

struct CvResult {
  double selected_lambda = 0.0;
  std::vector<CvRow> table;  // descending lambda
  int folds = 0;
  std::uint64_t seed = 0;
};

/// K-fold cross-validation of lambda by held-out Gaussian negative
/// log-likelihood using each training fit's sigma. Weights are recomputed on
/// each training fold with `weights.epsilon`. Ties go to the larger lambda.
CvResult cross_validate_lambda(const Matrix& y, const MultiViewDesign& design,
                               const PenaltyWeights& weights, int folds,
                               std::vector<double> grid, std::uint64_t seed,
                               const SolverOptions& options = {},
                               Execution exec = Execution::serial);

/// Held-out NLL: (n_v q/2) log(2 pi sigma^2) + ||Y_v - Yhat_v||^2/(2 sigma^2).
double gaussian_nll(const Matrix& y, const Matrix& y_hat, double sigma);

/// Fitted values 1 mu' + Z0 C0 + X B on (possibly new) design rows.
Matrix predict(const MultiViewDesign& design, const ScaledFit& fit);

}  // namespace subviews
