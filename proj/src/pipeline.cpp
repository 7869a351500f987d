#include "subviews/pipeline.hpp"

#include "subviews/errors.hpp"
#include "subviews/seeding.hpp"

namespace subviews {

ScaledFit tune_and_fit(const Matrix& y, const MultiViewDesign& design, const PreparedData& data,
                       const PenaltyWeights& weights, const PipelineConfig& config,
                       Execution exec, std::optional<CvResult>* cv_out) {
  double lambda;
  if (config.fixed_lambda) {
    lambda = *config.fixed_lambda;
  } else {
    const double lmax = lambda_max(data, weights);
    CvResult cv = cross_validate_lambda(y, design, weights, config.folds,
                                        lambda_grid(lmax, config.grid_size, config.grid_ratio),
                                        config.seed, config.solver, exec);
    lambda = cv.selected_lambda;
    if (cv_out) *cv_out = std::move(cv);
  }
  return scaled_fit(data, weights.with_lambda(lambda), config.solver);
}

namespace {

std::vector<GroupTestReport> test_groups(const PreparedData& data, const ScaledFit& fit,
                                         const std::vector<ScoreOutcome>& scores,
                                         const std::vector<Index>& groups) {
  std::vector<GroupTestReport> out;
  for (Index k : groups) {
    const auto& outcome = scores[static_cast<std::size_t>(k)];
    const auto& name = data.group_names()[static_cast<std::size_t>(k)];
    if (outcome.score)
      out.push_back(group_test(data, fit, *outcome.score));
    else
      out.push_back(untestable_report(name, k, outcome.failure, "multivariate"));
  }
  return out;
}

std::vector<Index> all_groups(Index k) {
  std::vector<Index> g(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) g[static_cast<std::size_t>(i)] = i;
  return g;
}

void check_scores(const std::vector<ScoreOutcome>& scores, Index groups) {
  if (static_cast<Index>(scores.size()) != groups)
    throw ValidationError("precomputed scores do not match the number of groups");
}

}  // namespace

Analysis analyze(const Matrix& y, const MultiViewDesign& design, const PipelineConfig& config,
                 Execution exec, const std::vector<ScoreOutcome>* scores) {
  PreparedData data(y, design);
  PenaltyWeights weights = compute_weights(data, config.epsilon);
  std::optional<CvResult> cv;
  ScaledFit fit = tune_and_fit(y, design, data, weights, config, exec, &cv);
  std::vector<ScoreOutcome> own;
  if (scores) {
    check_scores(*scores, data.num_groups());
  } else {
    own = estimate_all_scores(data, weights.w_star, config.score, exec);
  }
  const auto& used = scores ? *scores : own;
  auto tests = test_groups(data, fit, used, all_groups(data.num_groups()));
  apply_bh(tests);
  return Analysis{std::move(data), std::move(weights), std::move(cv), std::move(fit),
                  std::move(own), std::move(tests)};
}

std::vector<ScoreOutcome> univariate_scores(const MultiViewDesign& design,
                                            const PipelineConfig& config, Execution exec) {
  const Matrix y0 = Matrix::Zero(design.n(), 1);
  PreparedData data(y0, design);
  const PenaltyWeights weights = compute_weights(data, config.epsilon);
  return estimate_all_scores(data, weights.w_star, config.score, exec);
}

UnivariateResults univariate_analysis(const Matrix& y, const MultiViewDesign& design,
                                      const PipelineConfig& config, Execution exec,
                                      const std::vector<ScoreOutcome>* scores,
                                      const std::vector<Index>* groups) {
  const Index q = y.cols();
  if (q < 1) throw ValidationError("response has no columns");
  std::vector<ScoreOutcome> own;
  if (!scores) own = univariate_scores(design, config, exec);
  const auto& used = scores ? *scores : own;
  check_scores(used, static_cast<Index>(design.num_groups()));
  const std::vector<Index> tested = groups ? *groups : all_groups(design.num_groups());

  UnivariateResults out;
  out.sigma.assign(static_cast<std::size_t>(q), 0.0);
  out.by_response.resize(static_cast<std::size_t>(q));
  for_each_index(exec, static_cast<std::size_t>(q), [&](std::size_t l) {
    const Matrix yl = y.col(static_cast<Index>(l));
    PreparedData data(yl, design);
    const PenaltyWeights weights = compute_weights(data, config.epsilon);
    PipelineConfig cfg = config;
    cfg.seed = derive_seed(config.seed, l);
    const ScaledFit fit = tune_and_fit(yl, design, data, weights, cfg, Execution::serial);
    out.sigma[l] = fit.sigma;
    out.by_response[l] = test_groups(data, fit, used, tested);
    for (auto& r : out.by_response[l]) r.method = "univariate";
  });

  for (std::size_t t = 0; t < tested.size(); ++t) {
    std::vector<double> p;
    bool testable = true;
    std::string note;
    for (Index l = 0; l < q; ++l) {
      const auto& r = out.by_response[static_cast<std::size_t>(l)][t];
      if (!r.testable) {
        testable = false;
        note = r.note;
        break;
      }
      p.push_back(r.p_value);
    }
    const auto& first = out.by_response[0][t];
    if (!testable) {
      out.union_reports.push_back(untestable_report(first.name, tested[t], note, "univariate_union"));
      continue;
    }
    GroupTestReport r;
    r.name = first.name;
    r.k = tested[t];
    r.method = "univariate_union";
    r.df = first.df;
    r.d1_diag = first.d1_diag;
    r.xi = first.xi;
    r.p_value = union_pvalue(p);
    // Largest univariate statistic, the one attaining the minimum p-value.
    r.statistic = 0.0;
    for (Index l = 0; l < q; ++l)
      r.statistic = std::max(r.statistic, out.by_response[static_cast<std::size_t>(l)][t].statistic);
    out.union_reports.push_back(r);
  }
  apply_bh(out.union_reports);
  return out;
}

GroupTestReport union_test(const Matrix& y, const MultiViewDesign& design, Index k,
                           const PipelineConfig& config) {
  if (k < 0 || k >= static_cast<Index>(design.num_groups()))
    throw ValidationError("group index out of range");
  const std::vector<Index> groups{k};
  auto res = univariate_analysis(y, design, config, Execution::serial, nullptr, &groups);
  GroupTestReport r = res.union_reports.front();
  r.p_bh = r.p_value;
  return r;
}

PosthocResult screen_then_posthoc(const Matrix& y, const MultiViewDesign& design,
                                  const PipelineConfig& config, Execution exec) {
  PosthocResult out{analyze(y, design, config, exec), {}, {}};
  for (const auto& t : out.screen.tests)
    if (t.testable && t.p_bh <= config.fdr) out.screened.push_back(t.k);
  if (out.screened.empty()) return out;

  const auto res = univariate_analysis(y, design, config, exec, nullptr, &out.screened);
  std::vector<GroupTestReport> flat;
  for (Index l = 0; l < y.cols(); ++l)
    for (std::size_t t = 0; t < out.screened.size(); ++t) {
      const auto& r = res.by_response[static_cast<std::size_t>(l)][t];
      out.rows.push_back(PosthocRow{r.name, r.k, l, r});
      flat.push_back(r);
    }
  apply_bh(flat);
  for (std::size_t i = 0; i < flat.size(); ++i) out.rows[i].test.p_bh = flat[i].p_bh;
  return out;
}

}  // namespace subviews
