#include "subviews/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "subviews/detail/admm.hpp"
#include "subviews/errors.hpp"

namespace subviews {

ScoreProjection project_score(const PreparedData& data, Index k, Matrix s_matrix, double xi,
                              const std::vector<double>& weights_star,
                              const SpectralTolerance& tol) {
  const double sqrt_n = std::sqrt(static_cast<double>(data.n()));
  const Matrix xk = data.block(k);
  ScoreProjection sp;
  sp.k = k;
  sp.xi = xi;
  sp.q_basis = orthonormal_basis(xk, tol);
  sp.r_prime = sp.q_basis.cols();
  // Singular values of S_k are judged against the scale of X_k, so a score
  // that is zero up to rounding has rank 0.
  const double scale = spectral_norm(xk);
  SpectralTolerance s_tol = tol;
  s_tol.abs_floor = std::max(tol.abs_floor, tol.rel_tol * scale);
  SpectralTolerance sx_tol = tol;
  sx_tol.abs_floor = std::max(tol.abs_floor, tol.rel_tol * scale * scale);
  sp.p_basis = orthonormal_basis(s_matrix, s_tol);
  sp.rank_sx = numerical_rank(s_matrix.transpose() * xk, sx_tol);
  sp.d1_diag = projector_gap(sp.p_basis, sp.q_basis);

  const Vector d = singular_values(s_matrix / sqrt_n);
  sp.d_min = 0.0;
  if (d.size() > 0 && d(0) > 0.0) {
    const double cut = s_tol.cutoff(d(0) * sqrt_n) / sqrt_n;
    for (Index i = 0; i < d.size(); ++i)
      if (d(i) > cut) sp.d_min = d(i);
  }

  const Index groups = data.num_groups();
  sp.kkt_norm.assign(static_cast<std::size_t>(groups), 0.0);
  sp.kkt_bound.assign(static_cast<std::size_t>(groups), 0.0);
  for (Index j = 0; j < groups; ++j) {
    if (j == k) continue;
    const Matrix uj = orthonormal_basis(data.block(j), tol);
    sp.kkt_norm[static_cast<std::size_t>(j)] = spectral_norm(uj.transpose() * s_matrix) / sqrt_n;
    sp.kkt_bound[static_cast<std::size_t>(j)] = xi * weights_star[static_cast<std::size_t>(j)];
  }
  sp.s_matrix = std::move(s_matrix);
  return sp;
}

ScoreProjection estimate_score(const PreparedData& data, Index k, double xi,
                               const std::vector<double>& weights_star,
                               const ScoreOptions& options) {
  const Index groups = data.num_groups();
  if (k < 0 || k >= groups) throw ValidationError("group index out of range");
  if (!(xi >= 0.0)) throw ValidationError("xi must be nonnegative");
  if (weights_star.size() != static_cast<std::size_t>(groups))
    throw ValidationError("score weights do not match the number of groups");

  const Index n = data.n();
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const Matrix xk = data.block(k);

  // Orthonormal coordinates for each other group: X_j G_j = U_j C_j, and
  // ||U_j C_j||_* = ||C_j||_*, so thresholding C_j thresholds the group effect.
  std::vector<Matrix> bases;
  std::vector<Index> offsets, sizes;
  Index total = 0;
  for (Index j = 0; j < groups; ++j) {
    if (j == k) continue;
    bases.push_back(orthonormal_basis(data.block(j), options.tol));
    offsets.push_back(total);
    sizes.push_back(bases.back().cols());
    total += bases.back().cols();
  }
  Matrix u(n, total);
  for (std::size_t b = 0; b < bases.size(); ++b) u.middleCols(offsets[b], sizes[b]) = bases[b];

  Matrix s;
  int iterations = 0;
  bool converged = true;
  if (xi == 0.0 || total == 0) {
    // Unpenalized: exact residual of X_k on the other groups.
    const Matrix basis = orthonormal_basis(u, options.tol);
    s = xk - basis * (basis.transpose() * xk);
  } else {
    // Rescaled so the loss is 1/2 ||X_k/sqrt(n) - U D||^2 with thresholds xi w''_j.
    const auto gram = detail::make_gram(u, xk / sqrt_n, offsets, sizes);
    detail::AdmmProblem problem;
    problem.gram = &gram;
    problem.loss_scale = 1.0;
    for (Index j = 0; j < groups; ++j)
      if (j != k) problem.tau.push_back(xi * weights_star[static_cast<std::size_t>(j)]);
    AdmmState state;
    state.rho = options.admm.rho0;
    const auto outcome = detail::run_admm(problem, options.admm, state);
    iterations = outcome.iterations;
    converged = outcome.converged;
    s = xk - sqrt_n * (u * state.a);
    // The exact minimizer has S_k in the row space of X_k (projecting the
    // group effects onto it lowers both terms); remove solver residue there.
    const Matrix row_basis = orthonormal_basis(xk.transpose(), options.tol);
    s = s * row_basis * row_basis.transpose();
  }

  ScoreProjection sp = project_score(data, k, std::move(s), xi, weights_star, options.tol);
  sp.iterations = iterations;
  sp.converged = converged;
  if (sp.rank_sx < sp.r_prime) {
    std::ostringstream msg;
    msg << "score deficient for group " << k << " (rank(S'X) = " << sp.rank_sx
        << " < rank(X) = " << sp.r_prime << " at xi = " << xi << "); decrease xi";
    throw NumericalError(msg.str());
  }
  return sp;
}

FeasibilityReport check_feasibility(const ScoreProjection& sp) {
  FeasibilityReport r;
  r.d1_diag = sp.d1_diag;
  r.gap_ok = sp.d1_diag < 1.0 - 1e-12;
  r.rank_ok = sp.r_prime > 0 && sp.rank_sx == sp.r_prime;
  r.kkt_ok = true;
  for (std::size_t j = 0; j < sp.kkt_norm.size(); ++j) {
    if (static_cast<Index>(j) == sp.k) continue;
    const double bound = sp.kkt_bound[j];
    const double ratio = bound > 0.0 ? sp.kkt_norm[j] / bound
                                     : (sp.kkt_norm[j] > 1e-10 ? INFINITY : 0.0);
    r.worst_kkt_ratio = std::max(r.worst_kkt_ratio, ratio);
    if (sp.kkt_norm[j] > bound * (1.0 + 1e-3) + 1e-10) r.kkt_ok = false;
  }
  std::ostringstream msg;
  msg << "d1(P(I-Q)) = " << sp.d1_diag << (r.gap_ok ? " < 1" : " >= 1") << "; rank(S'X) = "
      << sp.rank_sx << (r.rank_ok ? " == " : " != ") << "rank(X) = " << sp.r_prime
      << "; max KKT ratio = " << r.worst_kkt_ratio;
  r.message = msg.str();
  return r;
}

ScoreProjection estimate_feasible_score(const PreparedData& data, Index k,
                                        const std::vector<double>& weights_star,
                                        const ScoreOptions& options) {
  double xi = options.xi;
  const int attempts = options.auto_fallback ? options.max_halvings + 1 : 1;
  std::string last;
  for (int a = 0; a < attempts; ++a, xi /= 2.0) {
    try {
      ScoreProjection sp = estimate_score(data, k, xi, weights_star, options);
      const FeasibilityReport report = check_feasibility(sp);
      if (report.passed()) return sp;
      last = report.message;
    } catch (const NumericalError& e) {
      last = e.what();
    }
  }
  throw NumericalError("no feasible score for group " + std::to_string(k) + ": " + last);
}

std::vector<ScoreOutcome> estimate_all_scores(const PreparedData& data,
                                              const std::vector<double>& weights_star,
                                              const ScoreOptions& options, Execution exec) {
  std::vector<ScoreOutcome> out(static_cast<std::size_t>(data.num_groups()));
  for_each_index(exec, out.size(), [&](std::size_t k) {
    try {
      out[k].score = estimate_feasible_score(data, static_cast<Index>(k), weights_star, options);
    } catch (const NumericalError& e) {
      out[k].failure = e.what();
    }
  });
  return out;
}

}  // namespace subviews
