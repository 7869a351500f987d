#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "subviews/inference.hpp"
#include "subviews/scorer.hpp"
#include "subviews/solver.hpp"

namespace subviews {

struct PipelineConfig {
  SolverOptions solver;
  double epsilon = 0.05;
  int folds = 5;
  int grid_size = 50;
  double grid_ratio = 1e-4;
  std::optional<double> fixed_lambda;  // skips cross-validation
  ScoreOptions score;
  double alpha = 0.05;
  double fdr = 0.10;
  std::uint64_t seed = 1;
};

/// Cross-validates lambda (unless fixed) and refits on the full data.
ScaledFit tune_and_fit(const Matrix& y, const MultiViewDesign& design, const PreparedData& data,
                       const PenaltyWeights& weights, const PipelineConfig& config,
                       Execution exec = Execution::serial, std::optional<CvResult>* cv_out = nullptr);

struct Analysis {
  PreparedData data;
  PenaltyWeights weights;
  std::optional<CvResult> cv;
  ScaledFit fit;
  std::vector<ScoreOutcome> scores;
  std::vector<GroupTestReport> tests;  // by group index, BH-adjusted
};

/// Multivariate fit and group tests for every group. Scores depend only on the
/// design, so callers with a fixed design may pass them in.
Analysis analyze(const Matrix& y, const MultiViewDesign& design, const PipelineConfig& config,
                 Execution exec = Execution::serial,
                 const std::vector<ScoreOutcome>* scores = nullptr);

/// Scores for response-wise (q = 1) fits; shared by all responses.
std::vector<ScoreOutcome> univariate_scores(const MultiViewDesign& design,
                                            const PipelineConfig& config,
                                            Execution exec = Execution::serial);

struct UnivariateResults {
  std::vector<double> sigma;                   // per response
  std::vector<std::vector<GroupTestReport>> by_response;  // [l][group]
  std::vector<GroupTestReport> union_reports;  // per group, BH-adjusted
};

/// Scaled fit of each response on its own (own lambda and sigma), group tests
/// per response, and the Bonferroni union over responses. `groups` restricts
/// which groups are tested (all when null).
UnivariateResults univariate_analysis(const Matrix& y, const MultiViewDesign& design,
                                      const PipelineConfig& config,
                                      Execution exec = Execution::serial,
                                      const std::vector<ScoreOutcome>* scores = nullptr,
                                      const std::vector<Index>* groups = nullptr);

/// Union test for a single group.
GroupTestReport union_test(const Matrix& y, const MultiViewDesign& design, Index k,
                           const PipelineConfig& config);

struct PosthocRow {
  std::string name;
  Index k = 0;
  Index response = 0;
  GroupTestReport test;
};

struct PosthocResult {
  Analysis screen;
  std::vector<Index> screened;  // BH-adjusted multivariate p <= fdr
  std::vector<PosthocRow> rows;  // BH within the univariate stage
};

/// Multivariate screen, then response-wise tests for the screened groups only.
PosthocResult screen_then_posthoc(const Matrix& y, const MultiViewDesign& design,
                                  const PipelineConfig& config,
                                  Execution exec = Execution::serial);

}  // namespace subviews
