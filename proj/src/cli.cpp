#include "subviews/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "subviews/errors.hpp"
#include "subviews/io.hpp"
#include "subviews/stats.hpp"

namespace subviews {

namespace fs = std::filesystem;
using io::Json;

namespace {

/// Flag values before merging with a config file; unset flags leave the
/// config (or default) value alone.
struct FlagValues {
  std::optional<double> alpha, fdr, lambda, xi, rho_growth, epsilon;
  std::optional<std::string> solver;
  std::optional<std::uint64_t> seed;
  std::optional<int> folds;
  std::string config_path;
  std::string method = "multivariate";
};

void apply_config(const Json& j, PipelineConfig& cfg) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const Json& v = it.value();
    try {
      if (key == "alpha") cfg.alpha = v.get<double>();
      else if (key == "fdr") cfg.fdr = v.get<double>();
      else if (key == "lambda") cfg.fixed_lambda = v.get<double>();
      else if (key == "xi") cfg.score.xi = v.get<double>();
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "epsilon") cfg.epsilon = v.get<double>();
      else if (key == "folds") cfg.folds = v.get<int>();
      else if (key == "grid_size") cfg.grid_size = v.get<int>();
      else if (key == "grid_ratio") cfg.grid_ratio = v.get<double>();
      else if (key == "solver") cfg.solver.kind = solver_kind_from_string(v.get<std::string>());
      else if (key == "tol") cfg.solver.tol = v.get<double>();
      else if (key == "max_iters") cfg.solver.max_iters = v.get<int>();
      else if (key == "rho0") cfg.solver.rho0 = v.get<double>();
      else if (key == "rho_growth") {
        cfg.solver.rho_growth = v.get<double>();
        cfg.solver.balance_rho = false;
      } else if (key == "rho_max") cfg.solver.rho_max = v.get<double>();
      else throw ValidationError("invalid config field " + key + ": unknown field");
    } catch (const Json::exception&) {
      throw ValidationError("invalid config field " + key + ": wrong type");
    }
  }
}

void apply_flags(const FlagValues& f, PipelineConfig& cfg) {
  if (f.alpha) cfg.alpha = *f.alpha;
  if (f.fdr) cfg.fdr = *f.fdr;
  if (f.lambda) cfg.fixed_lambda = *f.lambda;
  if (f.xi) cfg.score.xi = *f.xi;
  if (f.seed) cfg.seed = *f.seed;
  if (f.epsilon) cfg.epsilon = *f.epsilon;
  if (f.folds) cfg.folds = *f.folds;
  if (f.solver) cfg.solver.kind = solver_kind_from_string(*f.solver);
  if (f.rho_growth) {
    cfg.solver.rho_growth = *f.rho_growth;
    cfg.solver.balance_rho = false;
  }
}

struct LoadedData {
  Matrix y;
  std::vector<std::string> response_names;
  MultiViewDesign design;
};

LoadedData load_data(const RunConfig& rc, bool need_y) {
  const auto groups = io::read_group_map(rc.groups_path);
  const io::CsvTable counts = io::read_csv(rc.counts_path);
  std::vector<Index> sizes;
  std::vector<std::string> names;
  Index total = 0;
  for (const auto& g : groups) {
    sizes.push_back(g.size);
    names.push_back(g.name);
    total += g.size;
  }
  if (total != counts.values.cols())
    throw ValidationError("group sizes sum to " + std::to_string(total) + " but " +
                          rc.counts_path.string() + " has " +
                          std::to_string(counts.values.cols()) + " columns");
  const double fill = rc.fill.value_or(rc.proportions ? 1e-6 : 0.5);
  const Matrix filled = replace_zeros(counts.values, fill);
  const SubCompositionalDataset comp = to_compositions(split_columns(filled, sizes), names);

  std::optional<Matrix> controls;
  if (!rc.controls_path.empty()) {
    const io::CsvTable c = io::read_csv(rc.controls_path);
    if (c.values.rows() != comp.n())
      throw ValidationError("controls have " + std::to_string(c.values.rows()) +
                            " rows but the design has " + std::to_string(comp.n()) + " rows");
    controls = c.values;
  }

  LoadedData out;
  out.design = clr_design(comp, controls, rc.intercept);
  if (need_y) {
    const io::CsvTable y = io::read_csv(rc.y_path);
    if (y.values.rows() != comp.n())
      throw ValidationError("Y has " + std::to_string(y.values.rows()) +
                            " rows but the design has " + std::to_string(comp.n()) + " rows");
    out.y = y.values;
    out.response_names = y.header;
  }
  return out;
}

std::vector<ScoreOutcome> cached_scores(const RunConfig& rc, const PreparedData& data,
                                        const PenaltyWeights& weights, Execution exec) {
  const ScoreOptions& so = rc.pipeline.score;
  if (rc.cache_dir.empty()) return estimate_all_scores(data, weights.w_star, so, exec);
  const std::uint64_t hash = io::design_hash(data);
  const auto k_count = static_cast<std::size_t>(data.num_groups());
  std::vector<ScoreOutcome> out(k_count);
  std::vector<std::size_t> missing;
  for (std::size_t k = 0; k < k_count; ++k) {
    double xi = so.xi;
    const int tries = so.auto_fallback ? so.max_halvings : 0;
    for (int h = 0; h <= tries && !out[k].score; ++h, xi *= 0.5) {
      auto sp = io::load_score(rc.cache_dir, hash, data, static_cast<Index>(k), xi, weights.w_star);
      if (sp && check_feasibility(*sp).passed()) out[k].score = std::move(sp);
    }
    if (!out[k].score) missing.push_back(k);
  }
  if (missing.empty()) return out;
  for_each_index(exec, missing.size(), [&](std::size_t i) {
    const std::size_t k = missing[i];
    try {
      out[k].score = estimate_feasible_score(data, static_cast<Index>(k), weights.w_star, so);
    } catch (const NumericalError& e) {
      out[k].failure = e.what();
    }
  });
  for (std::size_t k : missing)
    if (out[k].score) io::save_score(rc.cache_dir, hash, *out[k].score);
  return out;
}

int cmd_fit(const RunConfig& rc, Execution exec, std::ostream& out) {
  const LoadedData d = load_data(rc, true);
  const PreparedData data(d.y, d.design);
  const PenaltyWeights weights = compute_weights(data, rc.pipeline.epsilon);
  std::optional<CvResult> cv;
  const ScaledFit fit = tune_and_fit(d.y, d.design, data, weights, rc.pipeline, exec, &cv);
  io::write_json(rc.out_dir / "fit.json", io::fit_to_json(fit, data, weights, cv));
  const std::string text = io::fit_text(fit, data);
  io::write_text(rc.out_dir / "fit_summary.txt", text);
  out << text;
  return 0;
}

std::vector<GroupTestReport> tests_from_saved_fit(const RunConfig& rc, const LoadedData& d,
                                                  Execution exec) {
  const ScaledFit fit = io::fit_from_json(io::read_json(rc.fit_path));
  const PreparedData data(d.y, d.design);
  if (fit.b_blocks.size() != static_cast<std::size_t>(data.num_groups()))
    throw ValidationError("saved fit has " + std::to_string(fit.b_blocks.size()) +
                          " groups but the group map has " + std::to_string(data.num_groups()));
  for (Index k = 0; k < data.num_groups(); ++k) {
    const Matrix& b = fit.b_blocks[static_cast<std::size_t>(k)];
    if (b.rows() != data.sizes()[static_cast<std::size_t>(k)] || b.cols() != data.q())
      throw ValidationError("saved fit block " + data.group_names()[static_cast<std::size_t>(k)] +
                            " does not match the data dimensions");
  }
  const PenaltyWeights weights = compute_weights(data, rc.pipeline.epsilon);
  const auto scores = cached_scores(rc, data, weights, exec);
  std::vector<GroupTestReport> reports;
  for (Index k = 0; k < data.num_groups(); ++k) {
    const auto& sc = scores[static_cast<std::size_t>(k)];
    const auto& name = data.group_names()[static_cast<std::size_t>(k)];
    reports.push_back(sc.score ? group_test(data, fit, *sc.score)
                               : untestable_report(name, k, sc.failure, "multivariate"));
  }
  apply_bh(reports);
  return reports;
}

int cmd_test(const RunConfig& rc, Execution exec, std::ostream& out) {
  const LoadedData d = load_data(rc, true);
  const PipelineConfig& cfg = rc.pipeline;
  Json report;
  std::string text;
  std::string csv;

  if (rc.method == TestMethod::screen_then_posthoc) {
    const PosthocResult res = screen_then_posthoc(d.y, d.design, cfg, exec);
    report = io::report_to_json(res.screen.tests, cfg.alpha, cfg.fdr);
    std::vector<GroupTestReport> rows;
    for (const auto& r : res.rows) {
      GroupTestReport t = r.test;
      t.name = r.name + ":" + d.response_names[static_cast<std::size_t>(r.response)];
      rows.push_back(std::move(t));
    }
    Json post = io::report_to_json(rows, cfg.alpha, cfg.fdr)["groups"];
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
      post[i]["group"] = res.rows[i].name;
      post[i]["response"] = d.response_names[static_cast<std::size_t>(res.rows[i].response)];
    }
    report["posthoc"] = std::move(post);
    text = io::report_text(res.screen.tests, cfg.alpha, cfg.fdr);
    text += res.rows.empty() ? "\nno group passed the screen; no post-hoc tests\n"
                             : "\npost-hoc response-wise tests\n" +
                                   io::report_text(rows, cfg.alpha, cfg.fdr);
    csv = io::report_csv(res.screen.tests, cfg.alpha, cfg.fdr);
    io::write_text(rc.out_dir / "posthoc.csv", io::report_csv(rows, cfg.alpha, cfg.fdr));
  } else {
    std::vector<GroupTestReport> reports;
    if (rc.method == TestMethod::union_test) {
      reports = univariate_analysis(d.y, d.design, cfg, exec).union_reports;
    } else if (!rc.fit_path.empty()) {
      reports = tests_from_saved_fit(rc, d, exec);
    } else {
      const PreparedData data(d.y, d.design);
      const PenaltyWeights weights = compute_weights(data, cfg.epsilon);
      const auto scores = cached_scores(rc, data, weights, exec);
      reports = analyze(d.y, d.design, cfg, exec, &scores).tests;
    }
    report = io::report_to_json(reports, cfg.alpha, cfg.fdr);
    text = io::report_text(reports, cfg.alpha, cfg.fdr);
    csv = io::report_csv(reports, cfg.alpha, cfg.fdr);
  }
  io::write_json(rc.out_dir / "report.json", report);
  io::write_text(rc.out_dir / "report.csv", csv);
  io::write_text(rc.out_dir / "report.txt", text);
  out << text;
  return 0;
}

SimDesignSpec resolve_spec(const RunConfig& rc) {
  SimDesignSpec spec;
  if (!rc.preset.empty()) spec = preset(rc.preset);
  if (!rc.spec_path.empty()) spec = io::spec_from_json(io::read_json(rc.spec_path), spec);
  if (rc.preset.empty() && rc.spec_path.empty())
    throw ValidationError("simulate needs --preset or --spec");
  spec.seed = rc.pipeline.seed;
  spec.validate();
  return spec;
}

int cmd_simulate(const RunConfig& rc, Execution exec, std::ostream& out) {
  const SimDesignSpec spec = resolve_spec(rc);
  const ReplicationSummary s = run_replications(spec, rc.reps, rc.pipeline, exec);
  io::write_json(rc.out_dir / "summary.json", io::summary_to_json(s));
  io::write_text(rc.out_dir / "replications.csv", io::records_csv(s));
  io::write_text(rc.out_dir / "qq.tsv", io::qq_tsv(s));
  const std::string text = io::summary_text(s);
  io::write_text(rc.out_dir / "summary.txt", text);
  out << text;
  return 0;
}

int cmd_qq(const RunConfig& rc, Execution exec, std::ostream& out) {
  const SimDesignSpec spec = resolve_spec(rc);
  const ReplicationSummary s = run_replications(spec, rc.reps, rc.pipeline, exec);
  io::write_text(rc.out_dir / "qq.tsv", io::qq_tsv(s));

  Json panels = Json::array();
  std::ostringstream text;
  auto add = [&](const std::string& id, const QqPoints& qq, double ks_p) {
    const double slope = qq_slope(qq);
    panels.push_back({{"panel_id", id},
                      {"points", qq.theoretical.size()},
                      {"ks_pvalue", ks_p},
                      {"qq_slope", slope}});
    text << id << ": KS p-value " << ks_p << ", Q-Q slope " << slope << "\n";
  };
  if (s.qq_sigma.size() > 1)
    add("sigma", qq_points(s.qq_sigma, normal_quantile), ks_normal_pvalue(s.qq_sigma));
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    const double df = s.groups[g].df;
    if (!(df > 0.0) || s.qq_pivotal[g].size() < 2) continue;
    const auto cdf = [df](double x) { return 1.0 - chi2_upper_tail(x, df); };
    add("pivotal_" + s.groups[g].name,
        qq_points(s.qq_pivotal[g], [df](double u) { return chi2_quantile(u, df); }),
        ks_pvalue(ks_statistic(s.qq_pivotal[g], cdf), s.qq_pivotal[g].size()));
  }
  io::write_json(rc.out_dir / "qq_stats.json",
                 Json{{"preset", spec.name},
                      {"replications", s.requested},
                      {"completed", s.completed},
                      {"panels", std::move(panels)}});
  out << text.str();
  return 0;
}

void add_common(CLI::App* sub, RunConfig& rc, FlagValues& f) {
  sub->add_option("--alpha", f.alpha, "Significance level for raw p-values");
  sub->add_option("--fdr", f.fdr, "Benjamini-Hochberg FDR level");
  sub->add_option("--xi", f.xi, "Score tuning constant");
  sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--solver", f.solver, "Scaled fit solver")->check(CLI::IsMember({"bcd", "admm"}));
  sub->add_option("--rho-growth", f.rho_growth,
                  "Geometric ADMM step-size growth instead of residual balancing");
  sub->add_option("--epsilon", f.epsilon, "Weight level epsilon");
  sub->add_option("--threads", rc.threads, "Worker threads");
  sub->add_option("--out", rc.out_dir, "Output directory");
  sub->add_option("--config", f.config_path, "JSON file with pipeline settings");
}

void add_data(CLI::App* sub, RunConfig& rc, FlagValues& f) {
  sub->add_option("--y", rc.y_path, "Response CSV (n rows, header row)")->required();
  sub->add_option("--counts", rc.counts_path, "Counts or compositions CSV")->required();
  sub->add_option("--groups", rc.groups_path, "Group map JSON")->required();
  sub->add_option("--controls", rc.controls_path, "Unpenalized controls CSV");
  sub->add_flag("--proportions", rc.proportions, "Inputs are compositions rather than counts");
  sub->add_option("--fill", rc.fill, "Replacement for zero entries (default 0.5, or 1e-6 with --proportions)");
  sub->add_option("--lambda", f.lambda, "Fixed tuning parameter (skips cross-validation)");
  sub->add_option("--folds", f.folds, "Cross-validation folds");
  auto* no_int = sub->add_flag("--no-intercept", "Fit without an intercept");
  no_int->each([&rc](const std::string&) { rc.intercept = false; });
}

void add_sim(CLI::App* sub, RunConfig& rc) {
  sub->add_option("--preset", rc.preset, "Built-in design")
      ->check(CLI::IsMember(preset_names()));
  sub->add_option("--spec", rc.spec_path, "JSON design overriding the preset");
  sub->add_option("--reps", rc.reps, "Replications");
}

}  // namespace

void RunConfig::validate() const {
  const auto& p = pipeline;
  if (!(p.alpha > 0.0 && p.alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (!(p.fdr > 0.0 && p.fdr < 1.0)) throw ValidationError("fdr must lie in (0, 1)");
  if (!(p.epsilon > 0.0 && p.epsilon < 1.0)) throw ValidationError("epsilon must lie in (0, 1)");
  if (p.score.xi < 0.0) throw ValidationError("xi must be nonnegative");
  if (p.fixed_lambda && !(*p.fixed_lambda > 0.0)) throw ValidationError("lambda must be positive");
  if (p.folds < 2) throw ValidationError("folds must be at least 2");
  if (threads < 0) throw ValidationError("threads must be nonnegative");
  if (fill && !(*fill > 0.0)) throw ValidationError("fill must be positive");
  if (p.solver.rho_growth < 1.0) throw ValidationError("rho-growth must be at least 1");
  if (command == Command::fit || command == Command::test) {
    for (const fs::path& path : {y_path, counts_path, groups_path})
      if (!fs::exists(path)) throw ValidationError("no such file: " + path.string());
    if (!controls_path.empty() && !fs::exists(controls_path))
      throw ValidationError("no such file: " + controls_path.string());
    if (!fit_path.empty() && !fs::exists(fit_path))
      throw ValidationError("no such file: " + fit_path.string());
  } else {
    if (reps < 1) throw ValidationError("reps must be at least 1");
    if (!spec_path.empty() && !fs::exists(spec_path))
      throw ValidationError("no such file: " + spec_path.string());
  }
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("SUBVIEWS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    throw ValidationError(std::string("SUBVIEWS_THREADS must be a positive integer, got '") +
                          env + "'");
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  FlagValues f;
  CLI::App app{"Multivariate log-contrast regression with grouped sub-compositional predictors",
               "subviews"};
  app.require_subcommand(1);
  auto* fit = app.add_subcommand("fit", "Cross-validate lambda and fit the scaled model");
  auto* test = app.add_subcommand("test", "Group tests with BH adjustment");
  auto* sim = app.add_subcommand("simulate", "Monte Carlo replications of a design");
  auto* qq = app.add_subcommand("qq", "Q-Q data and goodness-of-fit for noise and pivotal panels");
  for (auto* sub : {fit, test, sim, qq}) add_common(sub, rc, f);
  add_data(fit, rc, f);
  add_data(test, rc, f);
  test->add_option("--method", f.method, "Test to run")
      ->check(CLI::IsMember({"multivariate", "union", "screen-then-posthoc"}));
  test->add_option("--fit", rc.fit_path, "Saved fit.json to test instead of refitting");
  test->add_option("--cache-dir", rc.cache_dir, "Directory for cached scores");
  add_sim(sim, rc);
  add_sim(qq, rc);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (fit->parsed()) rc.command = Command::fit;
    else if (test->parsed()) rc.command = Command::test;
    else if (sim->parsed()) rc.command = Command::simulate;
    else rc.command = Command::qq;
    if (f.method == "union") rc.method = TestMethod::union_test;
    else if (f.method == "screen-then-posthoc") rc.method = TestMethod::screen_then_posthoc;
    if (!f.config_path.empty()) apply_config(io::read_json(f.config_path), rc.pipeline);
    apply_flags(f, rc.pipeline);
    rc.validate();

    set_threads(resolve_threads(rc.threads));
    const Execution exec = Execution::parallel;
    switch (rc.command) {
      case Command::fit: return cmd_fit(rc, exec, out);
      case Command::test: return cmd_test(rc, exec, out);
      case Command::simulate: return cmd_simulate(rc, exec, out);
      case Command::qq: return cmd_qq(rc, exec, out);
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace subviews
