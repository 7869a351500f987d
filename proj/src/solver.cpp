#include "subviews/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "subviews/detail/admm.hpp"
#include "subviews/errors.hpp"

namespace subviews {

namespace detail {

double GramSystem::rss(const Matrix& b) const {
  const double cross = xty.cwiseProduct(b).sum();
  const double quad = b.cwiseProduct(xtx * b).sum();
  return yty - 2.0 * cross + quad;
}

GramSystem make_gram(const Matrix& x, const Matrix& y, std::vector<Index> offsets,
                     std::vector<Index> sizes) {
  GramSystem g;
  g.xtx.noalias() = x.transpose() * x;
  g.xty.noalias() = x.transpose() * y;
  g.yty = y.squaredNorm();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g.xtx);
  if (eig.info() != Eigen::Success)
    throw NumericalError("eigendecomposition of X'X failed (p = " + std::to_string(x.cols()) + ")");
  g.evals = eig.eigenvalues().cwiseMax(0.0);
  g.evecs = eig.eigenvectors();
  g.offsets = std::move(offsets);
  g.sizes = std::move(sizes);
  return g;
}

AdmmOutcome run_admm(const AdmmProblem& problem, const SolverOptions& options, AdmmState& state,
                     bool record_trace) {
  constexpr double kSigmaFloor = 1e-12;
  const GramSystem& g = *problem.gram;
  const Index p = g.p();
  const Index q = g.q();
  if (!state.initialized()) {
    state.a = Matrix::Zero(p, q);
    state.b = Matrix::Zero(p, q);
    state.lambda_mult = Matrix::Zero(p, q);
    state.sigma = std::sqrt(std::max(g.yty, 0.0) / problem.sigma_denominator);
  }
  if (!(state.rho > 0.0)) state.rho = options.rho0;

  AdmmOutcome out;
  const double scale = std::sqrt(static_cast<double>(p * q));
  Matrix rhs(p, q);
  Matrix tmp(p, q);
  Matrix a_old(p, q);
  double prev_total = std::numeric_limits<double>::infinity();
  int growing = 0;
  const double sigma_start = std::sqrt(std::max(g.yty, 0.0) / problem.sigma_denominator);
  int collapsed = 0;

  for (int it = 1; it <= options.max_iters; ++it) {
    const double rho = state.rho;
    const double s =
        problem.loss_scale * (problem.update_sigma ? std::max(state.sigma, kSigmaFloor) : 1.0);

    // B-step: (X'X/s + rho I)^{-1} (X'Y/s + Lambda + rho A)
    rhs = g.xty / s + state.lambda_mult + rho * state.a;
    tmp.noalias() = g.evecs.transpose() * rhs;
    tmp.array().colwise() /= (g.evals.array() / s + rho);
    state.b.noalias() = g.evecs * tmp;

    if (problem.update_sigma) {
      state.sigma = std::sqrt(std::max(g.rss(state.b), 0.0) / problem.sigma_denominator);
      collapsed = state.sigma < options.sigma_collapse * sigma_start ? collapsed + 1 : 0;
      if (collapsed >= options.collapse_window) {
        std::ostringstream msg;
        msg << "noise level collapsed to " << state.sigma << " after " << it
            << " iterations (interpolating fit); use a larger lambda";
        throw NumericalError(msg.str());
      }
    }

    // A-step: blockwise singular value thresholding at tau_k / rho
    a_old.swap(state.a);
    double penalty = 0.0;
    for (std::size_t k = 0; k < g.sizes.size(); ++k) {
      const Index off = g.offsets[k];
      const Index len = g.sizes[k];
      const Matrix v = state.b.middleRows(off, len) - state.lambda_mult.middleRows(off, len) / rho;
      double norm = 0.0;
      state.a.middleRows(off, len) = nuclear_prox(v, problem.tau[k] / rho, norm);
      penalty += problem.tau[k] * norm;
    }

    // Dual step
    state.lambda_mult += rho * (state.a - state.b);

    state.r_primal = (state.a - state.b).norm();
    state.r_dual = rho * (state.a - a_old).norm();
    out.iterations = it;

    if (record_trace)
      out.trace.push_back(std::sqrt(std::max(g.rss(state.a), 0.0) / problem.sigma_denominator) +
                          penalty);

    const double eps_primal = options.tol * (scale + std::max(state.a.norm(), state.b.norm()));
    const double eps_dual = options.tol * (scale + state.lambda_mult.norm());
    if (state.r_primal <= eps_primal && state.r_dual <= eps_dual) {
      out.converged = true;
      break;
    }

    const double total = state.r_primal + state.r_dual;
    growing = total > prev_total ? growing + 1 : 0;
    prev_total = total;
    if (growing >= options.divergence_window || !std::isfinite(total)) {
      std::ostringstream msg;
      msg << "ADMM diverging after " << it << " iterations (r_primal = " << state.r_primal
          << ", r_dual = " << state.r_dual << ", rho = " << rho << ", p = " << p
          << ", q = " << q << ")";
      throw NumericalError(msg.str());
    }

    if (options.balance_rho) {
      const double ratio = (state.r_primal / eps_primal) / std::max(state.r_dual / eps_dual, 1e-300);
      if (ratio > 10.0)
        state.rho = std::min(rho * 2.0, options.rho_max);
      else if (ratio < 0.1)
        state.rho = std::max(rho / 2.0, 1.0 / options.rho_max);
    } else {
      state.rho = std::min(rho * options.rho_growth, options.rho_max);
    }
  }
  return out;
}

}  // namespace detail

namespace {

std::vector<Matrix> split_rows(const Matrix& stacked, const std::vector<Index>& offsets,
                               const std::vector<Index>& sizes) {
  std::vector<Matrix> out;
  out.reserve(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k)
    out.push_back(stacked.middleRows(offsets[k], sizes[k]));
  return out;
}

Matrix stack_rows(const std::vector<Matrix>& blocks) {
  Index rows = 0;
  const Index cols = blocks.empty() ? 0 : blocks.front().cols();
  for (const auto& b : blocks) rows += b.rows();
  Matrix out(rows, cols);
  Index r = 0;
  for (const auto& b : blocks) {
    out.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  return out;
}

double penalty_value(const std::vector<Matrix>& b_blocks, const PenaltyWeights& weights) {
  double total = 0.0;
  for (std::size_t k = 0; k < b_blocks.size(); ++k)
    if (weights.w[k] > 0.0) total += weights.w[k] * nuclear_norm(b_blocks[k]);
  return weights.lambda * total;
}

// Root-mean-square of the prepared response; solves run on Y / scale so the
// iterates (and the ADMM step size) do not depend on the units of Y.
double response_scale(const PreparedData& data) {
  const double nq = static_cast<double>(data.n() * data.q());
  return std::sqrt(data.y().squaredNorm() / nq);
}

void check_inputs(const PreparedData& data, const PenaltyWeights& weights) {
  if (weights.w.size() != static_cast<std::size_t>(data.num_groups()))
    throw ValidationError("weights have " + std::to_string(weights.w.size()) +
                          " entries for " + std::to_string(data.num_groups()) + " groups");
  if (!(weights.lambda >= 0.0)) throw ValidationError("lambda must be nonnegative");
}

[[noreturn]] void sigma_collapsed(double sigma, double lambda) {
  std::ostringstream msg;
  msg << "noise level collapsed to " << sigma << " at lambda = " << lambda
      << " (interpolating fit); use a larger lambda";
  throw NumericalError(msg.str());
}

void finish_fit(const PreparedData& data, ScaledFit& fit, const PenaltyWeights& weights) {
  const Matrix b = fit.coefficients();
  fit.sigma = noise_level(data, b);
  auto [mu, c0] = data.nuisance_coefficients(b);
  fit.mu = std::move(mu);
  fit.c0 = std::move(c0);
  fit.lambda = weights.lambda;
  fit.objective = scaled_objective(data, fit.b_blocks, fit.sigma, weights);
}

}  // namespace

// --- PreparedData ------------------------------------------------------------

PreparedData::PreparedData(const Matrix& y, const MultiViewDesign& design) {
  design.validate();
  if (y.rows() != design.n())
    throw ValidationError("response has " + std::to_string(y.rows()) + " rows but design has " +
                          std::to_string(design.n()));
  if (y.cols() == 0) throw ValidationError("response has no columns");
  if (!y.allFinite()) throw ValidationError("response has non-finite entries");

  y_raw_ = y;
  x_raw_ = design.concatenated();
  sizes_ = design.group_sizes();
  Index off = 0;
  for (Index s : sizes_) {
    offsets_.push_back(off);
    off += s;
  }
  names_ = design.group_names;
  if (names_.empty())
    for (std::size_t k = 0; k < sizes_.size(); ++k) names_.push_back("G" + std::to_string(k + 1));
  has_intercept_ = design.has_intercept;
  num_controls_ = design.controls ? design.controls->cols() : 0;

  const Index m = (has_intercept_ ? 1 : 0) + num_controls_;
  nuisance_.resize(y.rows(), m);
  if (has_intercept_) nuisance_.col(0).setOnes();
  if (num_controls_ > 0) nuisance_.rightCols(num_controls_) = *design.controls;

  if (m > 0) {
    nuisance_basis_ = orthonormal_basis(nuisance_);
    y_ = project_out_nuisance(y_raw_);
    x_ = project_out_nuisance(x_raw_);
  } else {
    y_ = y_raw_;
    x_ = x_raw_;
  }
}

Matrix PreparedData::project_out_nuisance(const Matrix& m) const {
  if (nuisance_basis_.cols() == 0) return m;
  return m - nuisance_basis_ * (nuisance_basis_.transpose() * m);
}

std::pair<Vector, Matrix> PreparedData::nuisance_coefficients(const Matrix& b) const {
  Vector mu = Vector::Zero(q());
  Matrix c0(num_controls_, q());
  if (nuisance_.cols() == 0) return {mu, c0};
  const Matrix coef = pinv_apply(nuisance_, y_raw_ - x_raw_ * b);
  Index row = 0;
  if (has_intercept_) mu = coef.row(row++).transpose();
  if (num_controls_ > 0) c0 = coef.middleRows(row, num_controls_);
  return {mu, c0};
}

// --- weights and objectives ---------------------------------------------------

PenaltyWeights compute_weights(const PreparedData& data, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must lie in (0, 1)");
  const double n = static_cast<double>(data.n());
  const double q = static_cast<double>(data.q());
  const double big_k = static_cast<double>(data.num_groups());
  const double log_term = 2.0 * std::log(big_k / epsilon);
  PenaltyWeights out;
  out.epsilon = epsilon;
  for (Index k = 0; k < data.num_groups(); ++k) {
    const double pk = static_cast<double>(data.sizes()[k]);
    const double d1 = spectral_norm(data.block(k));
    out.w.push_back(d1 * (std::sqrt(pk * q) + std::sqrt(log_term)) / (n * q));
    out.w_star.push_back(std::sqrt(pk / n) + std::sqrt(log_term / (n * q)));
    out.degenerate.push_back(d1 == 0.0);
  }
  return out;
}

PenaltyWeights compute_weights(const MultiViewDesign& design, Index q, double epsilon) {
  return compute_weights(PreparedData(Matrix::Zero(design.n(), q), design), epsilon);
}

std::string to_string(SolverKind kind) { return kind == SolverKind::bcd ? "bcd" : "admm"; }

SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "bcd") return SolverKind::bcd;
  if (s == "admm") return SolverKind::admm;
  throw ValidationError("unknown solver '" + s + "' (expected bcd or admm)");
}

Matrix ScaledFit::coefficients() const { return stack_rows(b_blocks); }

double noise_level(const PreparedData& data, const Matrix& b) {
  const double nq = static_cast<double>(data.n() * data.q());
  return (data.y() - data.x() * b).norm() / std::sqrt(nq);
}

double scaled_objective(const PreparedData& data, const std::vector<Matrix>& b_blocks,
                        double sigma, const PenaltyWeights& weights) {
  const double nq = static_cast<double>(data.n() * data.q());
  const double rss = (data.y() - data.x() * stack_rows(b_blocks)).squaredNorm();
  return rss / (2.0 * nq * sigma) + sigma / 2.0 + penalty_value(b_blocks, weights);
}

double irrr_objective(const PreparedData& data, const std::vector<Matrix>& b_blocks,
                      double sigma_fixed, const PenaltyWeights& weights) {
  const double nq = static_cast<double>(data.n() * data.q());
  const double rss = (data.y() - data.x() * stack_rows(b_blocks)).squaredNorm();
  return rss / (2.0 * nq) + sigma_fixed * penalty_value(b_blocks, weights);
}

// --- solvers -----------------------------------------------------------------

IrrrFit irrr_fit(const PreparedData& data, const PenaltyWeights& weights, double sigma_fixed,
                 const SolverOptions& options) {
  check_inputs(data, weights);
  if (!(sigma_fixed > 0.0)) throw ValidationError("sigma_fixed must be positive");
  double c = response_scale(data);
  if (c == 0.0) c = 1.0;
  const auto gram = detail::make_gram(data.x(), data.y() / c, data.offsets(), data.sizes());
  detail::AdmmProblem problem;
  problem.gram = &gram;
  problem.loss_scale = static_cast<double>(data.n() * data.q());
  for (double w : weights.w) problem.tau.push_back(weights.lambda * (sigma_fixed / c) * w);
  AdmmState state;
  state.rho = options.rho0;
  const auto outcome = detail::run_admm(problem, options, state);
  IrrrFit out;
  out.b_blocks = split_rows(state.a * c, data.offsets(), data.sizes());
  out.iterations = outcome.iterations;
  out.converged = outcome.converged;
  out.r_primal = state.r_primal * c;
  out.r_dual = state.r_dual * c;
  return out;
}

ScaledFit scaled_fit_admm(const PreparedData& data, const PenaltyWeights& weights,
                          const SolverOptions& options, AdmmState* warm) {
  check_inputs(data, weights);
  if (!(options.rho0 > 0.0)) throw ValidationError("rho0 must be positive");
  double c = response_scale(data);
  if (c == 0.0) sigma_collapsed(0.0, weights.lambda);
  const double nq = static_cast<double>(data.n() * data.q());
  const auto gram = detail::make_gram(data.x(), data.y() / c, data.offsets(), data.sizes());
  detail::AdmmProblem problem;
  problem.gram = &gram;
  problem.loss_scale = nq;
  problem.update_sigma = true;
  problem.sigma_denominator = nq;
  for (double w : weights.w) problem.tau.push_back(weights.lambda * w);

  AdmmState local;
  AdmmState& state = warm ? *warm : local;
  state.rho = options.rho0;
  const auto outcome = detail::run_admm(problem, options, state, true);

  ScaledFit fit;
  fit.solver_kind = SolverKind::admm;
  fit.b_blocks = split_rows(state.a * c, data.offsets(), data.sizes());
  fit.iterations = outcome.iterations;
  fit.converged = outcome.converged;
  fit.r_primal = state.r_primal * c;
  fit.r_dual = state.r_dual * c;
  fit.objective_trace.reserve(outcome.trace.size());
  for (double v : outcome.trace) fit.objective_trace.push_back(v * c);
  finish_fit(data, fit, weights);
  if (fit.sigma < std::max(options.sigma_collapse, 1e-12) * c)
    sigma_collapsed(fit.sigma, weights.lambda);
  return fit;
}

ScaledFit scaled_fit_bcd(const PreparedData& data, const PenaltyWeights& weights,
                         const SolverOptions& options, AdmmState* warm) {
  check_inputs(data, weights);
  double c = response_scale(data);
  if (c == 0.0) sigma_collapsed(0.0, weights.lambda);
  const double nq = static_cast<double>(data.n() * data.q());
  const Matrix y = data.y() / c;
  const auto gram = detail::make_gram(data.x(), y, data.offsets(), data.sizes());

  AdmmState local;
  AdmmState& state = warm ? *warm : local;
  Matrix b = state.initialized() ? state.a : Matrix::Zero(data.p(), data.q());

  auto objective = [&](const Matrix& coef, double sigma) {
    const double rss = (y - data.x() * coef).squaredNorm();
    return rss / (2.0 * nq * sigma) +
           sigma / 2.0 + penalty_value(split_rows(coef, data.offsets(), data.sizes()), weights);
  };
  auto sigma_of = [&](const Matrix& coef) {
    const double s = (y - data.x() * coef).norm() / std::sqrt(nq);
    if (s < std::max(options.sigma_collapse, 1e-12)) sigma_collapsed(s * c, weights.lambda);
    return s;
  };

  ScaledFit fit;
  fit.solver_kind = SolverKind::bcd;
  double sigma = sigma_of(b);
  fit.objective_trace.push_back(objective(b, sigma) * c);

  detail::AdmmProblem problem;
  problem.gram = &gram;
  problem.loss_scale = nq;
  for (int outer = 1; outer <= options.max_outer; ++outer) {
    fit.iterations = outer;
    // B <- argmin L_{sigma w}(B)
    problem.tau.clear();
    for (double w : weights.w) problem.tau.push_back(weights.lambda * sigma * w);
    state.rho = options.rho0;
    detail::run_admm(problem, options, state);
    const double current = objective(b, sigma);
    const double candidate = objective(state.a, sigma);
    if (candidate <= current) {
      b = state.a;
      fit.objective_trace.push_back(candidate * c);
    } else {
      fit.objective_trace.push_back(current * c);
    }
    fit.r_primal = state.r_primal * c;
    fit.r_dual = state.r_dual * c;

    // sigma <- ||Y - XB||/sqrt(nq)
    const double next = sigma_of(b);
    fit.objective_trace.push_back(objective(b, next) * c);
    const bool settled = std::abs(next / sigma - 1.0) < options.sigma_tol;
    sigma = next;
    if (settled) {
      fit.converged = true;
      break;
    }
  }
  state.a = b;
  fit.b_blocks = split_rows(b * c, data.offsets(), data.sizes());
  finish_fit(data, fit, weights);
  return fit;
}

ScaledFit scaled_fit(const PreparedData& data, const PenaltyWeights& weights,
                     const SolverOptions& options, AdmmState* warm) {
  return options.kind == SolverKind::bcd ? scaled_fit_bcd(data, weights, options, warm)
                                         : scaled_fit_admm(data, weights, options, warm);
}

double lambda_max(const PreparedData& data, const PenaltyWeights& weights) {
  const double nq = static_cast<double>(data.n() * data.q());
  const double sigma0 = data.y().norm() / std::sqrt(nq);
  if (sigma0 == 0.0) return 0.0;
  double best = 0.0;
  for (Index k = 0; k < data.num_groups(); ++k) {
    if (!(weights.w[k] > 0.0)) continue;
    const double d1 = spectral_norm(data.block(k).transpose() * data.y());
    best = std::max(best, d1 / (nq * sigma0 * weights.w[k]));
  }
  return best;
}

std::vector<double> lambda_grid(double lmax, int size, double ratio) {
  if (size < 1) throw ValidationError("lambda grid size must be at least 1");
  if (!(lmax > 0.0)) throw ValidationError("lambda_max must be positive to build a grid");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError("grid ratio must lie in (0, 1]");
  std::vector<double> grid;
  for (int i = 0; i < size; ++i) {
    const double t = size == 1 ? 0.0 : static_cast<double>(i) / (size - 1);
    grid.push_back(lmax * std::pow(ratio, t));
  }
  return grid;
}

double gaussian_nll(const Matrix& y, const Matrix& y_hat, double sigma) {
  const double m = static_cast<double>(y.size());
  const double s2 = sigma * sigma;
  return 0.5 * m * std::log(2.0 * std::numbers::pi * s2) + (y - y_hat).squaredNorm() / (2.0 * s2);
}

Matrix predict(const MultiViewDesign& design, const ScaledFit& fit) {
  Matrix out = design.concatenated() * fit.coefficients();
  if (design.has_intercept && fit.mu.size() == out.cols()) out.rowwise() += fit.mu.transpose();
  if (design.controls && fit.c0.rows() == design.controls->cols())
    out += *design.controls * fit.c0;
  return out;
}

CvResult cross_validate_lambda(const Matrix& y, const MultiViewDesign& design,
                               const PenaltyWeights& weights, int folds, std::vector<double> grid,
                               std::uint64_t seed, const SolverOptions& options, Execution exec) {
  const Index n = y.rows();
  if (grid.empty()) throw ValidationError("lambda grid is empty");
  if (folds < 2 || n < folds)
    throw ValidationError("need n >= folds >= 2 (n = " + std::to_string(n) +
                          ", folds = " + std::to_string(folds) + ")");
  if (n != design.n())
    throw ValidationError("response has " + std::to_string(n) + " rows but design has " +
                          std::to_string(design.n()));
  std::sort(grid.begin(), grid.end(), std::greater<>());

  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> pick(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (Index pos = 0; pos < n; ++pos)
    fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] =
        static_cast<int>(pos % folds);

  const std::size_t g = grid.size();
  std::vector<std::vector<double>> nll(static_cast<std::size_t>(folds),
                                       std::vector<double>(g, std::numeric_limits<double>::infinity()));

  for_each_index(exec, static_cast<std::size_t>(folds), [&](std::size_t f) {
    std::vector<Index> train, valid;
    for (Index i = 0; i < n; ++i)
      (fold_of[static_cast<std::size_t>(i)] == static_cast<int>(f) ? valid : train).push_back(i);
    const auto idx_t = Eigen::Map<const Eigen::Matrix<Index, Eigen::Dynamic, 1>>(
        train.data(), static_cast<Index>(train.size()));
    const auto idx_v = Eigen::Map<const Eigen::Matrix<Index, Eigen::Dynamic, 1>>(
        valid.data(), static_cast<Index>(valid.size()));
    const Matrix y_t = y(idx_t, Eigen::all);
    const Matrix y_v = y(idx_v, Eigen::all);
    const MultiViewDesign design_v = design.subset_rows(valid);
    const PreparedData train_data(y_t, design.subset_rows(train));
    const PenaltyWeights w_t = compute_weights(train_data, weights.epsilon);

    AdmmState warm;
    for (std::size_t i = 0; i < g; ++i) {
      try {
        const ScaledFit fit = scaled_fit(train_data, w_t.with_lambda(grid[i]), options, &warm);
        nll[f][i] = gaussian_nll(y_v, predict(design_v, fit), fit.sigma);
      } catch (const NumericalError&) {
        break;  // smaller lambdas only move closer to interpolation
      }
    }
  });

  CvResult out;
  out.folds = folds;
  out.seed = seed;
  double best = std::numeric_limits<double>::infinity();
  out.selected_lambda = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < g; ++i) {
    CvRow row;
    row.lambda = grid[i];
    double sum = 0.0, sum2 = 0.0;
    for (int f = 0; f < folds; ++f) {
      row.fold_nll.push_back(nll[static_cast<std::size_t>(f)][i]);
      sum += nll[static_cast<std::size_t>(f)][i];
      sum2 += nll[static_cast<std::size_t>(f)][i] * nll[static_cast<std::size_t>(f)][i];
    }
    row.mean_nll = sum / folds;
    const double var = std::max(sum2 / folds - row.mean_nll * row.mean_nll, 0.0);
    row.se_nll = std::isfinite(var) ? std::sqrt(var * folds / (folds - 1) / folds)
                                    : std::numeric_limits<double>::infinity();
    // Descending order: only a strict improvement moves to a smaller lambda.
    if (std::isfinite(row.mean_nll) &&
        (!std::isfinite(best) || row.mean_nll < best - 1e-12 * std::abs(best))) {
      best = row.mean_nll;
      out.selected_lambda = row.lambda;
    }
    out.table.push_back(std::move(row));
  }
  if (!std::isfinite(best)) throw NumericalError("cross-validation failed at every lambda");
  return out;
}

}  // namespace subviews
