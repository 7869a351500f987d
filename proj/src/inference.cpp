#include "subviews/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "subviews/errors.hpp"
#include "subviews/stats.hpp"

namespace subviews {

namespace {

Matrix residual_without(const PreparedData& data, const ScaledFit& fit, Index k) {
  Matrix r = data.y();
  for (Index j = 0; j < data.num_groups(); ++j)
    if (j != k) r.noalias() -= data.block(j) * fit.b_blocks[static_cast<std::size_t>(j)];
  return r;
}

void check_inputs(const PreparedData& data, const ScaledFit& fit, const ScoreProjection& sp) {
  if (static_cast<Index>(fit.b_blocks.size()) != data.num_groups())
    throw ValidationError("fit does not match the design");
  if (sp.k < 0 || sp.k >= data.num_groups() || sp.p_basis.rows() != data.n())
    throw ValidationError("score does not match the design");
}

}  // namespace

GroupTestReport group_test(const PreparedData& data, const ScaledFit& fit,
                           const ScoreProjection& sp) {
  check_inputs(data, fit, sp);
  if (!(fit.sigma > 0.0)) throw NumericalError("noise estimate is not positive");
  GroupTestReport r;
  r.k = sp.k;
  r.name = data.group_names()[static_cast<std::size_t>(sp.k)];
  r.method = "multivariate";
  r.d1_diag = sp.d1_diag;
  r.xi = sp.xi;
  r.df = static_cast<double>(sp.r_prime * data.q());
  const Matrix proj = sp.p_basis.transpose() * residual_without(data, fit, sp.k);
  r.statistic = proj.squaredNorm() / (fit.sigma * fit.sigma);
  r.p_value = chi2_upper_tail(r.statistic, r.df);
  if (r.df == 0.0) {
    r.p_value = 1.0;
    r.note = "group has rank zero; reported p = 1";
  }
  return r;
}

GroupTestReport untestable_report(const std::string& name, Index k, const std::string& reason,
                                  const std::string& method) {
  GroupTestReport r;
  r.name = name;
  r.k = k;
  r.method = method;
  r.testable = false;
  r.note = reason;
  return r;
}

DebiasedEstimate debias(const PreparedData& data, const ScaledFit& fit,
                        const ScoreProjection& sp) {
  check_inputs(data, fit, sp);
  if (sp.rank_sx < sp.r_prime)
    throw NumericalError("bias correction is infeasible: rank(S'X) < rank(X); decrease xi");
  const auto k = static_cast<std::size_t>(sp.k);
  const Matrix xk = data.block(sp.k);
  Matrix resid = data.y() - data.x() * fit.coefficients();
  DebiasedEstimate d;
  d.k = sp.k;
  d.coefficient_level = sp.r_prime == xk.cols();
  if (d.coefficient_level) {
    const Matrix sx = sp.s_matrix.transpose() * xk;
    d.estimate = fit.b_blocks[k] + pinv_apply(sx, sp.s_matrix.transpose() * resid);
  } else {
    // (P Q)^+ = U_Q (U_P' U_Q)^+ U_P' for orthonormal bases U_P, U_Q.
    const Matrix g = sp.p_basis.transpose() * sp.q_basis;
    d.estimate = xk * fit.b_blocks[k] +
                 sp.q_basis * pinv_apply(g, sp.p_basis.transpose() * resid);
  }
  return d;
}

PivotalValue pivotal_statistic(const PreparedData& data, const ScaledFit& fit,
                               const ScoreProjection& sp, const SimulationTruth& truth) {
  check_inputs(data, fit, sp);
  if (truth.noise.rows() != data.n() || truth.noise.cols() != data.q() ||
      static_cast<Index>(truth.b_blocks.size()) != data.num_groups())
    throw ValidationError("simulation truth does not match the design");
  Matrix diff = Matrix::Zero(data.n(), data.q());
  for (Index j = 0; j < data.num_groups(); ++j) {
    if (j == sp.k) continue;
    const auto js = static_cast<std::size_t>(j);
    diff.noalias() += data.block(j) * (fit.b_blocks[js] - truth.b_blocks[js]);
  }
  const Matrix rem = sp.p_basis.transpose() * diff;
  const Matrix pe = sp.p_basis.transpose() * truth.noise;
  PivotalValue out;
  out.value = (pe - rem).squaredNorm() / (fit.sigma * fit.sigma);
  out.remainder_norm = rem.norm();
  return out;
}

std::vector<double> bh_adjust(const std::vector<double>& p) {
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("p-values must lie in [0, 1]");
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const double v = p[order[r]] * static_cast<double>(m) / static_cast<double>(r + 1);
    running = std::min(running, v);
    adj[order[r]] = running;
  }
  return adj;
}

void apply_bh(std::vector<GroupTestReport>& reports) {
  std::vector<double> p;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < reports.size(); ++i)
    if (reports[i].testable && !std::isnan(reports[i].p_value)) {
      p.push_back(reports[i].p_value);
      idx.push_back(i);
    }
  const auto adj = bh_adjust(p);
  for (std::size_t i = 0; i < idx.size(); ++i) reports[idx[i]].p_bh = adj[i];
}

double union_pvalue(const std::vector<double>& per_response) {
  if (per_response.empty()) throw ValidationError("union test needs at least one response");
  const double m = *std::min_element(per_response.begin(), per_response.end());
  return std::min(1.0, static_cast<double>(per_response.size()) * m);
}

}  // namespace subviews
