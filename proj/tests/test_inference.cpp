#include <doctest.h>

#include <cmath>

#include "subviews/errors.hpp"
#include "subviews/inference.hpp"
#include "subviews/pipeline.hpp"
#include "subviews/stats.hpp"
#include "support.hpp"

using namespace subviews;
using subviews::testing::gaussian;
using subviews::testing::Rng;

namespace {

ScaledFit manual_fit(std::vector<Matrix> blocks, double sigma) {
  ScaledFit f;
  f.b_blocks = std::move(blocks);
  f.sigma = sigma;
  return f;
}

}  // namespace

TEST_CASE("test statistic against a direct projector computation") {
  Rng rng(1);
  const auto d = subviews::testing::gaussian_design(rng, 40, {3, 4, 2});
  const Matrix y = gaussian(rng, 40, 3);
  const PreparedData data(y, d);
  const auto w = compute_weights(data);
  const auto fit = scaled_fit(data, w.with_lambda(0.5 * lambda_max(data, w)));
  for (Index k = 0; k < 3; ++k) {
    const auto sp = estimate_score(data, k, 1.0, w.w_star);
    const auto r = group_test(data, fit, sp);
    Matrix partial = y;
    for (Index j = 0; j < 3; ++j)
      if (j != k) partial -= d.x_blocks[j] * fit.b_blocks[j];
    const Matrix p = subviews::testing::gram_schmidt_projector(sp.s_matrix);
    const double t = (p * partial).squaredNorm() / (fit.sigma * fit.sigma);
    CHECK(r.statistic == doctest::Approx(t).epsilon(1e-10));
    CHECK(r.df == static_cast<double>(d.x_blocks[k].cols() * 3));
    CHECK(r.p_value == doctest::Approx(chi2_upper_tail(t, r.df)).epsilon(1e-12));
    CHECK(r.name == data.group_names()[k]);
    CHECK(r.method == "multivariate");
  }
}

TEST_CASE("zero projected residual gives p = 1") {
  Rng rng(2);
  const auto d = subviews::testing::gaussian_design(rng, 30, {2, 3});
  const Matrix b2 = gaussian(rng, 3, 2);
  const Matrix y = d.x_blocks[1] * b2;
  const PreparedData data(y, d);
  const auto w = compute_weights(data);
  const auto sp = estimate_score(data, 0, 1.0, w.w_star);
  const auto r = group_test(data, manual_fit({Matrix::Zero(2, 2), b2}, 1.0), sp);
  CHECK(r.statistic < 1e-20);
  CHECK(r.p_value == doctest::Approx(1.0));
}

TEST_CASE("de-biasing with an exact least-squares fit adds nothing") {
  Rng rng(3);
  const auto d = subviews::testing::gaussian_design(rng, 50, {3, 2});
  const Matrix y = gaussian(rng, 50, 2);
  const PreparedData data(y, d);
  const auto w = compute_weights(data);
  const Matrix b = subviews::testing::ols(d.concatenated(), y);
  const auto fit = manual_fit({b.topRows(3), b.bottomRows(2)}, 1.0);
  const auto sp = estimate_score(data, 0, 1.0, w.w_star);
  const auto db = debias(data, fit, sp);
  CHECK(db.coefficient_level);
  CHECK((db.estimate - b.topRows(3)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("xi = 0 de-biasing recovers least squares from a penalized fit") {
  Rng rng(4);
  const auto d = subviews::testing::gaussian_design(rng, 60, {3, 4, 2});
  Matrix y = d.x_blocks[0] * gaussian(rng, 3, 3) + gaussian(rng, 60, 3);
  const PreparedData data(y, d);
  const auto w = compute_weights(data);
  const auto fit = scaled_fit(data, w.with_lambda(0.3 * lambda_max(data, w)));
  const Matrix b_ols = subviews::testing::ols(d.concatenated(), y);
  Index off = 0;
  for (Index k = 0; k < 3; ++k) {
    const Index pk = d.x_blocks[k].cols();
    const auto sp = estimate_score(data, k, 0.0, w.w_star);
    const auto db = debias(data, fit, sp);
    CHECK((db.estimate - b_ols.middleRows(off, pk)).cwiseAbs().maxCoeff() < 1e-6);
    off += pk;
  }
}

TEST_CASE("rank-deficient groups are de-biased at the group-effect level") {
  Rng rng(5);
  const auto d = subviews::testing::compositional_design(rng, 60, {4, 3}, false);
  Matrix y = gaussian(rng, 60, 2);
  const PreparedData data(y, d);
  const auto w = compute_weights(data);
  const auto fit = scaled_fit(data, w.with_lambda(0.3 * lambda_max(data, w)));
  const auto sp = estimate_score(data, 0, 0.0, w.w_star);
  CHECK(sp.r_prime == 3);
  const auto db = debias(data, fit, sp);
  CHECK_FALSE(db.coefficient_level);
  CHECK(db.estimate.rows() == 60);
  // Least-squares group effect (minimum-norm coefficients are not identifiable,
  // the fitted effect X_1 B_1 is).
  const Matrix x = d.concatenated();
  const Matrix b_ls = pinv_apply(x, y);
  const Matrix effect = d.x_blocks[0] * b_ls.topRows(4);
  CHECK((db.estimate - effect).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("pivotal statistic") {
  Rng rng(6);
  const auto d = subviews::testing::gaussian_design(rng, 40, {3, 2});
  const std::vector<Matrix> truth = {gaussian(rng, 3, 2), gaussian(rng, 2, 2)};
  const Matrix e = gaussian(rng, 40, 2);
  const Matrix y = d.x_blocks[0] * truth[0] + d.x_blocks[1] * truth[1] + e;
  const PreparedData data(y, d);
  const auto w = compute_weights(data);
  const auto sp = estimate_score(data, 0, 1.0, w.w_star);

  const auto exact = pivotal_statistic(data, manual_fit(truth, 1.0), sp, {e, truth});
  const Matrix p = subviews::testing::gram_schmidt_projector(sp.s_matrix);
  CHECK(exact.remainder_norm < 1e-12);
  CHECK(exact.value == doctest::Approx((p * e).squaredNorm()).epsilon(1e-10));

  const auto none = pivotal_statistic(data, manual_fit(truth, 1.0), sp,
                                      {Matrix::Zero(40, 2), truth});
  CHECK(none.value < 1e-20);
}

TEST_CASE("Benjamini-Hochberg by hand") {
  CHECK(bh_adjust({0.2}) == std::vector<double>{0.2});
  const auto same = bh_adjust({0.3, 0.3, 0.3});
  for (double v : same) CHECK(v == doctest::Approx(0.3));
  const auto adj = bh_adjust({0.01, 0.04, 0.03});
  CHECK(adj[0] == doctest::Approx(0.03));
  CHECK(adj[1] == doctest::Approx(0.04));
  CHECK(adj[2] == doctest::Approx(0.04));
  CHECK(bh_adjust({}).empty());
  CHECK_THROWS_AS(bh_adjust({0.1, 1.5}), ValidationError);
  CHECK_THROWS_AS(bh_adjust({std::nan("")}), ValidationError);
}

TEST_CASE("apply_bh skips untestable groups") {
  std::vector<GroupTestReport> reports(3);
  reports[0].p_value = 0.01;
  reports[1] = untestable_report("G2", 1, "no feasible score", "multivariate");
  reports[2].p_value = 0.04;
  apply_bh(reports);
  CHECK(reports[0].p_bh == doctest::Approx(0.02));
  CHECK(std::isnan(reports[1].p_bh));
  CHECK(reports[2].p_bh == doctest::Approx(0.04));
  CHECK_FALSE(reports[1].testable);
  CHECK(reports[1].note == "no feasible score");
}

TEST_CASE("union p-value") {
  CHECK(union_pvalue({1.0, 1.0}) == 1.0);
  CHECK(union_pvalue({0.01, 0.2, 0.5}) == doctest::Approx(0.03));
  CHECK(union_pvalue({0.6, 0.9}) == 1.0);
  CHECK_THROWS_AS(union_pvalue({}), ValidationError);
}

TEST_CASE("union test with one response equals the multivariate test") {
  Rng rng(7);
  const auto d = subviews::testing::gaussian_design(rng, 60, {3, 2, 2});
  const Matrix y = d.x_blocks[0] * gaussian(rng, 3, 1) + gaussian(rng, 60, 1);
  PipelineConfig cfg;
  const auto multi = analyze(y, d, cfg);
  const auto uni = univariate_analysis(y, d, cfg);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(uni.union_reports[k].p_value == doctest::Approx(multi.tests[k].p_value).epsilon(1e-12));
    CHECK(uni.union_reports[k].statistic == doctest::Approx(multi.tests[k].statistic));
  }
  const auto single = union_test(y, d, 1, cfg);
  CHECK(single.p_value == doctest::Approx(multi.tests[1].p_value).epsilon(1e-12));
}

TEST_CASE("rank-zero group reports p = 1") {
  Rng rng(8);
  auto d = subviews::testing::gaussian_design(rng, 30, {2, 2});
  const Matrix y = gaussian(rng, 30, 2);
  const PreparedData data(y, d);
  ScoreProjection sp;
  sp.k = 0;
  sp.p_basis = Matrix::Zero(30, 0);
  sp.r_prime = 0;
  const auto r = group_test(data, manual_fit({Matrix::Zero(2, 2), Matrix::Zero(2, 2)}, 1.0), sp);
  CHECK(r.df == 0.0);
  CHECK(r.p_value == 1.0);
}
