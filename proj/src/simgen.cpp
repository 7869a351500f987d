#include "subviews/simgen.hpp"

#include <algorithm>
#include <cmath>

#include "subviews/errors.hpp"
#include "subviews/seeding.hpp"
#include "subviews/stats.hpp"

namespace subviews {

namespace {

constexpr std::uint64_t kFixedStream = 0xF1EDD35156ULL;

std::vector<std::string> default_names(Index k) {
  std::vector<std::string> names;
  for (Index i = 0; i < k; ++i) names.push_back("G" + std::to_string(i + 1));
  return names;
}

Matrix standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> z;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = z(rng);
  return m;
}

// Rows of N(0, (rho^|i-j|)) by the AR(1) recursion; the chain restarts at each
// entry of `starts`.
Matrix ar_rows(Index n, Index p, double rho, const std::vector<bool>& starts, Rng& rng) {
  std::normal_distribution<double> z;
  const double innov = std::sqrt(1.0 - rho * rho);
  Matrix x(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) {
      const double e = z(rng);
      x(i, j) = starts[static_cast<std::size_t>(j)] ? e : rho * x(i, j - 1) + innov * e;
    }
  return x;
}

SimDesignSpec setting_one() {
  SimDesignSpec s;
  s.n = 500;
  s.q = 5;
  s.group_sizes.assign(5, 10);
  s.true_ranks = {2, 0, 0, 0, 0};
  return s;
}

}  // namespace

Index SimDesignSpec::p() const {
  Index p = 0;
  for (Index s : group_sizes) p += s;
  return p;
}

void SimDesignSpec::validate() const {
  if (n < 2) throw ValidationError("invalid field n: need at least 2 samples");
  if (q < 1) throw ValidationError("invalid field q: need at least one response");
  if (group_sizes.empty()) throw ValidationError("invalid field group_sizes: empty");
  for (Index s : group_sizes)
    if (s < 1) throw ValidationError("invalid field group_sizes: sizes must be positive");
  if (true_ranks.size() != group_sizes.size())
    throw ValidationError("invalid field true_ranks: length must equal the number of groups");
  for (std::size_t k = 0; k < true_ranks.size(); ++k)
    if (true_ranks[k] < 0 || true_ranks[k] > std::min(group_sizes[k], q))
      throw ValidationError("invalid field true_ranks: rank exceeds min(p_k, q)");
  if (!(std::abs(rho_x) < 1.0)) throw ValidationError("invalid field rho_x: need |rho| < 1");
  if (!(snr > 0.0)) throw ValidationError("invalid field snr: must be positive");
  if (xi && !(*xi >= 0.0)) throw ValidationError("invalid field xi: must be nonnegative");
  if (noise_sd && !(*noise_sd > 0.0))
    throw ValidationError("invalid field noise_sd: must be positive");
  if (setting == SimSetting::compositional && static_cast<Index>(log_means.size()) != p())
    throw ValidationError("invalid field log_means: length must equal p");
}

std::vector<std::string> preset_names() {
  return {"table1-s1", "table1-s1-low", "table1-s2", "table3-comp", "fig2-qq", "null-small"};
}

SimDesignSpec preset(const std::string& name) {
  SimDesignSpec s;
  if (name == "table1-s1" || name == "table1-s1-low") {
    s = setting_one();
    s.snr = name == "table1-s1" ? 0.2 : 0.1;
    s.union_baseline = true;
  } else if (name == "table1-s2") {
    s.n = 200;
    s.q = 10;
    s.group_sizes.assign(20, 20);
    s.true_ranks.assign(20, 0);
    s.true_ranks[0] = 1;
    s.snr = 0.2;
    s.union_baseline = true;
  } else if (name == "table3-comp") {
    s.setting = SimSetting::compositional;
    s.n = 40;
    s.q = 10;
    s.group_sizes.assign(10, 6);
    s.true_ranks.assign(10, 0);
    s.true_ranks[0] = 2;
    s.true_ranks[5] = 2;
    s.rho_x = 0.2;
    s.snr = 2.0;
    s.scale_coefficients = false;
    s.union_baseline = true;
    s.xi = 0.1;
    for (int k = 0; k < 10; ++k)
      for (int j = 0; j < 6; ++j) s.log_means.push_back(k < 5 && j == 0 ? 10.0 : 1.0);
  } else if (name == "fig2-qq") {
    s = setting_one();
    s.snr = 0.1;
    s.rho_x = 0.5;
    s.correlation = Correlation::within_group;
    s.fixed_design = true;
  } else if (name == "null-small") {
    s.n = 100;
    s.q = 3;
    s.group_sizes.assign(4, 5);
    s.true_ranks.assign(4, 0);
    s.noise_sd = 1.0;
    s.fixed_design = true;
  } else {
    throw ValidationError("unknown preset '" + name + "'");
  }
  s.name = name;
  return s;
}

std::vector<Matrix> gen_coefficients(const SimDesignSpec& spec, Rng& rng) {
  std::vector<Matrix> b;
  double largest = 0.0;
  for (Index k = 0; k < spec.num_groups(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const Index r = spec.true_ranks[ks];
    if (r == 0) {
      b.push_back(Matrix::Zero(spec.group_sizes[ks], spec.q));
      continue;
    }
    const Matrix j = standard_normal(spec.group_sizes[ks], r, rng);
    const Matrix rr = standard_normal(spec.q, r, rng);
    b.push_back(j * rr.transpose());
    largest = std::max(largest, b.back().cwiseAbs().maxCoeff());
  }
  if (spec.scale_coefficients && largest > 0.0)
    for (auto& m : b) m /= largest;
  return b;
}

Matrix gen_normal_design(const SimDesignSpec& spec, Rng& rng) {
  if (!(std::abs(spec.rho_x) < 1.0)) throw ValidationError("invalid field rho_x: need |rho| < 1");
  std::vector<bool> starts(static_cast<std::size_t>(spec.p()), spec.rho_x == 0.0);
  starts[0] = true;
  if (spec.correlation == Correlation::within_group) {
    Index offset = 0;
    for (Index s : spec.group_sizes) {
      starts[static_cast<std::size_t>(offset)] = true;
      offset += s;
    }
  }
  return ar_rows(spec.n, spec.p(), spec.rho_x, starts, rng);
}

SubCompositionalDataset gen_compositional(const SimDesignSpec& spec, Rng& rng) {
  if (static_cast<Index>(spec.log_means.size()) != spec.p())
    throw ValidationError("invalid field log_means: length must equal p");
  std::vector<bool> starts(static_cast<std::size_t>(spec.p()), spec.rho_x == 0.0);
  starts[0] = true;
  Matrix logw = ar_rows(spec.n, spec.p(), spec.rho_x, starts, rng);
  for (Index j = 0; j < spec.p(); ++j) logw.col(j).array() += spec.log_means[static_cast<std::size_t>(j)];
  return to_compositions(split_columns(logw.array().exp().matrix(), spec.group_sizes),
                         default_names(spec.num_groups()));
}

MultiViewDesign gen_design(const SimDesignSpec& spec, Rng& rng) {
  if (spec.setting == SimSetting::compositional)
    return clr_design(gen_compositional(spec, rng), std::nullopt, false);
  MultiViewDesign d;
  d.x_blocks = split_columns(gen_normal_design(spec, rng), spec.group_sizes);
  d.has_intercept = false;
  d.group_names = default_names(spec.num_groups());
  return d;
}

double calibrate_noise(const Matrix& linear_pred, double snr) {
  if (!(snr > 0.0)) throw ValidationError("snr must be positive");
  if (linear_pred.rows() < 2) throw ValidationError("linear predictor needs at least two rows");
  const Matrix centered = linear_pred.rowwise() - linear_pred.colwise().mean();
  const double dof = static_cast<double>(linear_pred.cols() * (linear_pred.rows() - 1));
  const double sd = std::sqrt(centered.squaredNorm() / dof);
  if (!(sd > 0.0)) throw ValidationError("linear predictor is constant; cannot calibrate SNR");
  return sd / snr;
}

SimInstance generate_instance(const SimDesignSpec& spec, std::size_t rep) {
  spec.validate();
  const std::uint64_t rep_seed = derive_seed(spec.seed, rep);
  Rng design_rng(spec.fixed_design ? derive_seed(spec.seed, kFixedStream) : rep_seed);
  SimInstance inst;
  inst.b_star = gen_coefficients(spec, design_rng);
  inst.design = gen_design(spec, design_rng);

  Matrix lp = Matrix::Zero(spec.n, spec.q);
  for (Index k = 0; k < spec.num_groups(); ++k)
    lp.noalias() += inst.design.x_blocks[static_cast<std::size_t>(k)] *
                    inst.b_star[static_cast<std::size_t>(k)];
  inst.sigma = spec.noise_sd ? *spec.noise_sd : calibrate_noise(lp, spec.snr);

  Rng noise_rng(derive_seed(rep_seed, 1));
  inst.noise = inst.sigma * standard_normal(spec.n, spec.q, noise_rng);
  inst.y = lp + inst.noise;
  return inst;
}

ReplicationRecord run_replication(const SimDesignSpec& spec, std::size_t rep,
                                  const PipelineConfig& config,
                                  const std::vector<ScoreOutcome>* scores,
                                  const std::vector<ScoreOutcome>* univariate) {
  ReplicationRecord rec;
  rec.rep = rep;
  try {
    const SimInstance inst = generate_instance(spec, rep);
    rec.sigma = inst.sigma;
    PipelineConfig cfg = config;
    if (spec.xi) cfg.score.xi = *spec.xi;
    cfg.seed = derive_seed(derive_seed(spec.seed, rep), 2);
    const Analysis a = analyze(inst.y, inst.design, cfg, Execution::serial, scores);
    rec.sigma_hat = a.fit.sigma;
    rec.lambda = a.fit.lambda;
    const auto& used = scores ? *scores : a.scores;
    const SimulationTruth truth{a.data.project_out_nuisance(inst.noise), inst.b_star};
    for (const auto& t : a.tests) {
      if (!t.testable) throw NumericalError("group " + t.name + " untestable: " + t.note);
      rec.p_multi.push_back(t.p_value);
      rec.reject_multi.push_back(t.p_value < config.alpha ? 1 : 0);
      rec.d1_diag.push_back(t.d1_diag);
      rec.df.push_back(t.df);
      rec.pivotal.push_back(
          pivotal_statistic(a.data, a.fit, *used[static_cast<std::size_t>(t.k)].score, truth).value);
    }
    if (spec.union_baseline) {
      const auto u = univariate_analysis(inst.y, inst.design, cfg, Execution::serial, univariate);
      for (const auto& t : u.union_reports) {
        if (!t.testable) throw NumericalError("group " + t.name + " untestable in union test: " + t.note);
        rec.p_union.push_back(t.p_value);
        rec.reject_union.push_back(t.p_value < config.alpha ? 1 : 0);
      }
    }
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.failure = e.what();
  }
  return rec;
}

ReplicationSummary summarize(const SimDesignSpec& spec, double alpha,
                             std::vector<ReplicationRecord> records) {
  ReplicationSummary s;
  s.spec = spec;
  s.alpha = alpha;
  s.requested = records.size();
  const auto groups = static_cast<std::size_t>(spec.num_groups());
  const double scale = std::sqrt(2.0 * static_cast<double>(spec.n * spec.q));
  std::vector<double> ratio, abs_ratio;
  std::vector<double> rej_m(groups, 0.0), rej_u(groups, 0.0), d1(groups, 0.0), piv(groups, 0.0),
      df(groups, NAN);
  s.qq_pivotal.resize(groups);
  for (const auto& r : records) {
    if (!r.ok) {
      ++s.failed;
      continue;
    }
    ++s.completed;
    ratio.push_back(r.sigma_ratio());
    abs_ratio.push_back(std::abs(r.sigma_ratio()));
    s.qq_sigma.push_back(scale * r.sigma_ratio());
    for (std::size_t k = 0; k < groups; ++k) {
      rej_m[k] += r.reject_multi[k];
      if (!r.reject_union.empty()) rej_u[k] += r.reject_union[k];
      d1[k] += r.d1_diag[k];
      piv[k] += r.pivotal[k];
      df[k] = r.df[k];
      s.qq_pivotal[k].push_back(r.pivotal[k]);
    }
  }
  const double c = static_cast<double>(s.completed);
  const auto names = default_names(spec.num_groups());
  for (std::size_t k = 0; k < groups; ++k) {
    GroupRates g;
    g.name = names[k];
    g.active = spec.true_ranks[k] > 0;
    g.df = df[k];
    if (s.completed > 0) {
      g.rate_multi = rej_m[k] / c;
      if (spec.union_baseline) g.rate_union = rej_u[k] / c;
      g.mean_d1 = d1[k] / c;
      g.mean_pivotal = piv[k] / c;
    }
    s.groups.push_back(g);
  }
  s.sigma_ratio_mean = mean(ratio);
  s.sigma_ratio_sd = sample_sd(ratio);
  s.abs_sigma_ratio_mean = mean(abs_ratio);
  s.abs_sigma_ratio_sd = sample_sd(abs_ratio);
  s.records = std::move(records);
  return s;
}

ReplicationSummary run_replications(const SimDesignSpec& spec, std::size_t reps,
                                    const PipelineConfig& config, Execution exec) {
  if (reps < 1) throw ValidationError("invalid field reps: need at least one replication");
  spec.validate();
  PipelineConfig cfg = config;
  if (spec.xi) cfg.score.xi = *spec.xi;
  std::optional<std::vector<ScoreOutcome>> scores, univariate;
  if (spec.fixed_design) {
    // Scores depend on the design only, which is shared by every replication.
    const SimInstance inst = generate_instance(spec, 0);
    const PreparedData data(inst.y, inst.design);
    const PenaltyWeights w = compute_weights(data, cfg.epsilon);
    scores = estimate_all_scores(data, w.w_star, cfg.score, exec);
    if (spec.union_baseline) univariate = univariate_scores(inst.design, cfg, exec);
  }
  std::vector<ReplicationRecord> records(reps);
  for_each_index(exec, reps, [&](std::size_t r) {
    records[r] = run_replication(spec, r, config, scores ? &*scores : nullptr,
                                 univariate ? &*univariate : nullptr);
  });
  return summarize(spec, config.alpha, std::move(records));
}

}  // namespace subviews
