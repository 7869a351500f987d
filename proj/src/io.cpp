#include "subviews/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "subviews/errors.hpp"
#include "subviews/stats.hpp"

namespace subviews::io {

namespace fs = std::filesystem;

namespace {

constexpr const char* kScoreVersion = "subviews-score-v1";

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  return out;
}

std::string sig6(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string full(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + " is empty");
  t.header = split_line(line);
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(cells.size()));
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (c.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                              ": not a number: '" + c + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return t;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header, const Matrix& values) {
  std::ostringstream os;
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
  os << "\n";
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) os << (j ? "," : "") << full(values(i, j));
    os << "\n";
  }
  write_text(path, os.str());
}

std::vector<GroupSpec> parse_group_map(const Json& j) {
  if (!j.is_object() || !j.contains("groups") || !j["groups"].is_array())
    throw ValidationError("group map must be an object with a \"groups\" array");
  std::vector<GroupSpec> out;
  for (const auto& g : j["groups"]) {
    if (!g.is_object() || !g.contains("name") || !g.contains("size") || !g["name"].is_string() ||
        !g["size"].is_number_integer())
      throw ValidationError("each group needs a string \"name\" and an integer \"size\"");
    GroupSpec s{g["name"].get<std::string>(), g["size"].get<Index>()};
    if (s.size < 1) throw ValidationError("group '" + s.name + "' has nonpositive size");
    out.push_back(s);
  }
  if (out.empty()) throw ValidationError("group map lists no groups");
  return out;
}

std::vector<GroupSpec> read_group_map(const fs::path& path) { return parse_group_map(read_json(path)); }

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("matrix must be an array of rows");
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows ? static_cast<Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Index>(r.size()) != cols)
      throw ValidationError("matrix rows have unequal lengths");
    for (Index c = 0; c < cols; ++c) m(i, c) = r[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Json fit_to_json(const ScaledFit& fit, const PreparedData& data, const PenaltyWeights& weights,
                 const std::optional<CvResult>& cv) {
  Json j;
  j["solver"] = to_string(fit.solver_kind);
  j["lambda"] = fit.lambda;
  j["sigma"] = fit.sigma;
  j["objective"] = fit.objective;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["r_primal"] = fit.r_primal;
  j["r_dual"] = fit.r_dual;
  j["epsilon"] = weights.epsilon;
  j["n"] = data.n();
  j["q"] = data.q();
  Json groups = Json::array();
  for (Index k = 0; k < data.num_groups(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    groups.push_back({{"name", data.group_names()[ks]},
                      {"size", data.sizes()[ks]},
                      {"weight", weights.w[ks]},
                      {"rank", numerical_rank(fit.b_blocks[ks])},
                      {"coefficients", matrix_to_json(fit.b_blocks[ks])}});
  }
  j["groups"] = std::move(groups);
  j["has_intercept"] = data.has_intercept();
  j["intercept"] = Json::array();
  for (Index c = 0; c < fit.mu.size(); ++c) j["intercept"].push_back(fit.mu(c));
  j["controls"] = matrix_to_json(fit.c0);
  if (cv) {
    Json table = Json::array();
    for (const auto& row : cv->table)
      table.push_back({{"lambda", row.lambda},
                       {"mean_nll", number_or_null(row.mean_nll)},
                       {"se_nll", number_or_null(row.se_nll)}});
    j["cv"] = {{"folds", cv->folds},
               {"seed", cv->seed},
               {"selected_lambda", cv->selected_lambda},
               {"table", std::move(table)}};
  }
  return j;
}

ScaledFit fit_from_json(const Json& j) {
  try {
    ScaledFit fit;
    fit.solver_kind = solver_kind_from_string(j.at("solver").get<std::string>());
    fit.lambda = j.at("lambda").get<double>();
    fit.sigma = j.at("sigma").get<double>();
    fit.objective = j.at("objective").get<double>();
    fit.iterations = j.at("iterations").get<int>();
    fit.converged = j.at("converged").get<bool>();
    for (const auto& g : j.at("groups")) fit.b_blocks.push_back(matrix_from_json(g.at("coefficients")));
    const auto& mu = j.at("intercept");
    fit.mu = Vector::Zero(static_cast<Index>(mu.size()));
    for (std::size_t c = 0; c < mu.size(); ++c) fit.mu(static_cast<Index>(c)) = mu[c].get<double>();
    fit.c0 = matrix_from_json(j.at("controls"));
    return fit;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed fit file: ") + e.what());
  }
}

Json report_to_json(const std::vector<GroupTestReport>& reports, double alpha, double fdr) {
  Json groups = Json::array();
  for (const auto& r : reports) {
    Json g{{"name", r.name},
           {"k", r.k},
           {"T", number_or_null(r.statistic)},
           {"df", r.df},
           {"p", number_or_null(r.p_value)},
           {"p_bh", number_or_null(r.p_bh)},
           {"d1_diag", number_or_null(r.d1_diag)},
           {"xi", number_or_null(r.xi)},
           {"method", r.method},
           {"testable", r.testable},
           {"significant", r.testable && r.p_value < alpha},
           {"bh_significant", r.testable && r.p_bh <= fdr}};
    if (!r.note.empty()) g["note"] = r.note;
    groups.push_back(std::move(g));
  }
  return Json{{"alpha", alpha}, {"fdr", fdr}, {"groups", std::move(groups)}};
}

std::string report_csv(const std::vector<GroupTestReport>& reports, double alpha, double fdr) {
  std::ostringstream os;
  os << "name,T,df,p,p_bh,d1_diag,method,significant,bh_significant,note\n";
  for (const auto& r : reports) {
    std::string note = r.note;
    for (auto& c : note)
      if (c == '"') c = '\'';
    os << '"' << r.name << "\"," << full(r.statistic) << ',' << full(r.df) << ','
       << full(r.p_value) << ',' << full(r.p_bh) << ',' << full(r.d1_diag) << ',' << r.method
       << ',' << (r.testable && r.p_value < alpha ? 1 : 0) << ','
       << (r.testable && r.p_bh <= fdr ? 1 : 0) << ",\"" << note << "\"\n";
  }
  return os.str();
}

std::string report_text(const std::vector<GroupTestReport>& reports, double alpha, double fdr) {
  std::size_t width = 16;
  for (const auto& r : reports) width = std::max(width, r.name.size() + 4);
  const int w = static_cast<int>(width);
  std::ostringstream os;
  os << std::left << std::setw(w) << "group" << std::right << std::setw(13) << "T"
     << std::setw(7) << "df" << std::setw(13) << "p" << std::setw(13) << "p_bh"
     << std::setw(12) << "d1" << "  method\n";
  for (const auto& r : reports) {
    std::string mark;
    if (r.testable && r.p_value < alpha) mark += '+';
    if (r.testable && r.p_bh <= fdr) mark += '*';
    os << std::left << std::setw(w) << (r.name + mark) << std::right << std::setw(13)
       << sig6(r.statistic) << std::setw(7) << sig6(r.df) << std::setw(13) << sig6(r.p_value)
       << std::setw(13) << sig6(r.p_bh) << std::setw(12) << sig6(r.d1_diag) << "  " << r.method;
    if (!r.testable) os << "  untestable: " << r.note;
    else if (!r.note.empty()) os << "  (" << r.note << ")";
    os << "\n";
  }
  os << "+ raw p < " << sig6(alpha) << "; * BH-adjusted p <= " << sig6(fdr) << "\n";
  return os.str();
}

std::string fit_text(const ScaledFit& fit, const PreparedData& data) {
  std::size_t width = 16;
  for (const auto& name : data.group_names()) width = std::max(width, name.size() + 2);
  const int w = static_cast<int>(width);
  std::ostringstream os;
  os << "solver " << to_string(fit.solver_kind) << ", lambda " << sig6(fit.lambda) << ", sigma "
     << sig6(fit.sigma) << ", objective " << sig6(fit.objective) << ", iterations "
     << fit.iterations << (fit.converged ? "" : " (not converged)") << "\n";
  os << std::left << std::setw(w) << "group" << std::right << std::setw(8) << "size"
     << std::setw(8) << "rank" << std::setw(14) << "nuclear norm\n";
  for (Index k = 0; k < data.num_groups(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    os << std::left << std::setw(w) << data.group_names()[ks] << std::right << std::setw(8)
       << data.sizes()[ks] << std::setw(8) << numerical_rank(fit.b_blocks[ks]) << std::setw(13)
       << sig6(nuclear_norm(fit.b_blocks[ks])) << "\n";
  }
  return os.str();
}

Json spec_to_json(const SimDesignSpec& s) {
  Json j{{"name", s.name},
         {"setting", s.setting == SimSetting::normal ? "normal" : "compositional"},
         {"n", s.n},
         {"q", s.q},
         {"group_sizes", s.group_sizes},
         {"true_ranks", s.true_ranks},
         {"rho_x", s.rho_x},
         {"correlation", s.correlation == Correlation::within_group ? "within_group" : "among_group"},
         {"snr", s.snr},
         {"scale_coefficients", s.scale_coefficients},
         {"fixed_design", s.fixed_design},
         {"union_baseline", s.union_baseline},
         {"seed", s.seed}};
  if (!s.log_means.empty()) j["log_means"] = s.log_means;
  if (s.noise_sd) j["noise_sd"] = *s.noise_sd;
  if (s.xi) j["xi"] = *s.xi;
  return j;
}

SimDesignSpec spec_from_json(const Json& j, SimDesignSpec s) {
  if (!j.is_object()) throw ValidationError("simulation spec must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const Json& v = it.value();
    try {
      if (key == "name") s.name = v.get<std::string>();
      else if (key == "setting") {
        const auto t = v.get<std::string>();
        if (t == "normal") s.setting = SimSetting::normal;
        else if (t == "compositional") s.setting = SimSetting::compositional;
        else throw ValidationError("invalid field setting: '" + t + "'");
      } else if (key == "n") s.n = v.get<Index>();
      else if (key == "q") s.q = v.get<Index>();
      else if (key == "group_sizes") s.group_sizes = v.get<std::vector<Index>>();
      else if (key == "true_ranks") s.true_ranks = v.get<std::vector<Index>>();
      else if (key == "rho_x") s.rho_x = v.get<double>();
      else if (key == "correlation") {
        const auto t = v.get<std::string>();
        if (t == "within_group") s.correlation = Correlation::within_group;
        else if (t == "among_group") s.correlation = Correlation::among_group;
        else throw ValidationError("invalid field correlation: '" + t + "'");
      } else if (key == "log_means") s.log_means = v.get<std::vector<double>>();
      else if (key == "snr") s.snr = v.get<double>();
      else if (key == "noise_sd") s.noise_sd = v.get<double>();
      else if (key == "scale_coefficients") s.scale_coefficients = v.get<bool>();
      else if (key == "fixed_design") s.fixed_design = v.get<bool>();
      else if (key == "union_baseline") s.union_baseline = v.get<bool>();
      else if (key == "xi") s.xi = v.get<double>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else throw ValidationError("invalid field " + key + ": unknown field");
    } catch (const Json::exception&) {
      throw ValidationError("invalid field " + key + ": wrong type");
    }
  }
  s.validate();
  return s;
}

Json summary_to_json(const ReplicationSummary& s) {
  Json groups = Json::array();
  for (const auto& g : s.groups)
    groups.push_back({{"name", g.name},
                      {"active", g.active},
                      {"rate_multivariate", number_or_null(g.rate_multi)},
                      {"rate_union", number_or_null(g.rate_union)},
                      {"mean_d1_diag", number_or_null(g.mean_d1)},
                      {"df", number_or_null(g.df)},
                      {"mean_pivotal", number_or_null(g.mean_pivotal)}});
  Json failures = Json::array();
  for (const auto& r : s.records)
    if (!r.ok) failures.push_back({{"rep", r.rep}, {"reason", r.failure}});
  return Json{{"spec", spec_to_json(s.spec)},
              {"alpha", s.alpha},
              {"replications", s.requested},
              {"completed", s.completed},
              {"failed", s.failed},
              {"failures", std::move(failures)},
              {"sigma_ratio_mean", number_or_null(s.sigma_ratio_mean)},
              {"sigma_ratio_sd", number_or_null(s.sigma_ratio_sd)},
              {"abs_sigma_ratio_mean", number_or_null(s.abs_sigma_ratio_mean)},
              {"abs_sigma_ratio_sd", number_or_null(s.abs_sigma_ratio_sd)},
              {"groups", std::move(groups)},
              {"qq_sigma", s.qq_sigma},
              {"qq_pivotal", s.qq_pivotal}};
}

std::string records_csv(const ReplicationSummary& s) {
  const auto k = static_cast<std::size_t>(s.spec.num_groups());
  std::ostringstream os;
  os << "rep,ok,sigma,sigma_hat,lambda";
  for (const char* field : {"p", "reject", "d1", "pivotal", "p_union", "reject_union"})
    for (std::size_t g = 0; g < k; ++g) os << ',' << field << "_G" << g + 1;
  os << ",failure\n";
  for (const auto& r : s.records) {
    os << r.rep << ',' << (r.ok ? 1 : 0) << ',' << full(r.sigma) << ',' << full(r.sigma_hat) << ','
       << full(r.lambda);
    auto put = [&](const auto& v) {
      for (std::size_t g = 0; g < k; ++g) {
        os << ',';
        if (g < v.size()) os << full(static_cast<double>(v[g]));
        else os << "NA";
      }
    };
    put(r.p_multi);
    put(r.reject_multi);
    put(r.d1_diag);
    put(r.pivotal);
    put(r.p_union);
    put(r.reject_union);
    std::string reason = r.failure;
    for (auto& c : reason)
      if (c == '"') c = '\'';
    os << ",\"" << reason << "\"\n";
  }
  return os.str();
}

std::string qq_tsv(const ReplicationSummary& s) {
  std::ostringstream os;
  os << "theoretical_quantile\tempirical_quantile\tpanel_id\n";
  const auto sigma = qq_points(s.qq_sigma, normal_quantile);
  for (std::size_t i = 0; i < sigma.theoretical.size(); ++i)
    os << full(sigma.theoretical[i]) << '\t' << full(sigma.empirical[i]) << "\tsigma\n";
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    const double df = s.groups[g].df;
    if (!(df > 0.0)) continue;
    const auto piv = qq_points(s.qq_pivotal[g], [df](double u) { return chi2_quantile(u, df); });
    for (std::size_t i = 0; i < piv.theoretical.size(); ++i)
      os << full(piv.theoretical[i]) << '\t' << full(piv.empirical[i]) << "\tpivotal_"
         << s.groups[g].name << "\n";
  }
  return os.str();
}

std::string summary_text(const ReplicationSummary& s) {
  std::ostringstream os;
  os << "preset " << s.spec.name << ": " << s.completed << " of " << s.requested
     << " replications completed";
  if (s.failed) os << " (" << s.failed << " failed)";
  os << "\nsigma_hat/sigma - 1: mean " << sig6(s.sigma_ratio_mean) << " (sd "
     << sig6(s.sigma_ratio_sd) << "); |.|: mean " << sig6(s.abs_sigma_ratio_mean) << " (sd "
     << sig6(s.abs_sigma_ratio_sd) << ")\n";
  os << std::left << std::setw(10) << "group" << std::setw(8) << "rate" << std::right
     << std::setw(14) << "multivariate" << std::setw(12) << "union" << std::setw(12) << "d1"
     << std::setw(14) << "pivotal/df\n";
  for (const auto& g : s.groups)
    os << std::left << std::setw(10) << g.name << std::setw(8) << (g.active ? "TP" : "FP")
       << std::right << std::setw(14) << sig6(g.rate_multi) << std::setw(12) << sig6(g.rate_union)
       << std::setw(12) << sig6(g.mean_d1) << std::setw(13) << sig6(g.mean_pivotal / g.df) << "\n";
  return os.str();
}

std::uint64_t design_hash(const PreparedData& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::int64_t dims[3] = {data.n(), data.p(), data.has_intercept() ? 1 : 0};
  mix(dims, sizeof dims);
  for (Index s : data.sizes()) {
    const std::int64_t v = s;
    mix(&v, sizeof v);
  }
  mix(data.x().data(), static_cast<std::size_t>(data.x().size()) * sizeof(double));
  return h;
}

fs::path score_cache_path(const fs::path& dir, std::uint64_t hash, Index k, double xi) {
  return dir / ("score_" + hex(hash) + "_k" + std::to_string(k) + "_xi" +
                hex(std::bit_cast<std::uint64_t>(xi)) + ".json");
}

void save_score(const fs::path& dir, std::uint64_t hash, const ScoreProjection& sp) {
  Json j{{"version", kScoreVersion},
         {"design_hash", hex(hash)},
         {"k", sp.k},
         {"xi", sp.xi},
         {"iterations", sp.iterations},
         {"converged", sp.converged},
         {"s_matrix", matrix_to_json(sp.s_matrix)}};
  write_json(score_cache_path(dir, hash, sp.k, sp.xi), j);
}

std::optional<ScoreProjection> load_score(const fs::path& dir, std::uint64_t hash,
                                          const PreparedData& data, Index k, double xi,
                                          const std::vector<double>& weights_star) {
  const auto path = score_cache_path(dir, hash, k, xi);
  if (!fs::exists(path)) return std::nullopt;
  const Json j = read_json(path);
  if (j.value("version", "") != kScoreVersion || j.value("design_hash", "") != hex(hash))
    return std::nullopt;
  Matrix s = matrix_from_json(j.at("s_matrix"));
  if (s.rows() != data.n() || s.cols() != data.sizes()[static_cast<std::size_t>(k)])
    return std::nullopt;
  ScoreProjection sp = project_score(data, k, std::move(s), xi, weights_star);
  sp.iterations = j.value("iterations", 0);
  sp.converged = j.value("converged", true);
  return sp;
}

}  // namespace subviews::io
