#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "subviews/cli.hpp"
#include "subviews/errors.hpp"
#include "subviews/io.hpp"
#include "support.hpp"

using namespace subviews;
namespace fs = std::filesystem;

namespace {

struct Files {
  fs::path dir, y, counts, groups;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Counts with a few zeros, and responses driven by the clr of one group
/// (signal_group < 0: pure noise).
Files make_data(const std::string& tag, std::uint64_t seed, Index n,
                const std::vector<Index>& sizes, const std::vector<std::string>& names, Index q,
                int signal_group, double strength) {
  subviews::testing::Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Index p = 0;
  for (Index s : sizes) p += s;
  Matrix counts(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) counts(i, j) = std::floor(20.0 * std::exp(1.2 * z(rng)));

  Matrix y = subviews::testing::gaussian(rng, n, q);
  if (signal_group >= 0) {
    Index off = 0;
    for (int g = 0; g < signal_group; ++g) off += sizes[static_cast<std::size_t>(g)];
    const Index ps = sizes[static_cast<std::size_t>(signal_group)];
    Matrix logs = (counts.middleCols(off, ps).array() + 0.5).log().matrix();
    const Vector mean = logs.rowwise().mean();
    logs.colwise() -= mean;
    Matrix b = Matrix::Zero(ps, q);
    b(0, 0) = strength;
    b(1, 0) = -strength;
    if (q > 1) b(ps - 1, 1) = strength;
    y += logs * b;
  }

  Files f;
  f.dir = subviews::testing::temp_dir(tag);
  f.y = f.dir / "y.csv";
  f.counts = f.dir / "counts.csv";
  f.groups = f.dir / "groups.json";
  std::vector<std::string> yh, ch;
  for (Index l = 0; l < q; ++l) yh.push_back("trait" + std::to_string(l + 1));
  for (Index j = 0; j < p; ++j) ch.push_back("otu" + std::to_string(j + 1));
  io::write_csv(f.y, yh, y);
  io::write_csv(f.counts, ch, counts);
  io::Json g = io::Json::array();
  for (std::size_t k = 0; k < sizes.size(); ++k) g.push_back({{"name", names[k]}, {"size", sizes[k]}});
  io::write_json(f.groups, io::Json{{"groups", g}});
  return f;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> data_args(const std::string& cmd, const Files& f, const fs::path& out) {
  return {cmd, "--y", f.y.string(), "--counts", f.counts.string(), "--groups", f.groups.string(),
          "--out", out.string(), "--threads", "1"};
}

const std::vector<std::string> kNames{"Lachnospiraceae", "Bacteroidaceae", "Ruminococcaceae"};

}  // namespace

TEST_CASE("fit writes fit.json and is deterministic") {
  const Files f = make_data("cli_fit", 11, 60, {4, 3, 3}, kNames, 2, 0, 0.8);
  const Run a = run(data_args("fit", f, f.dir / "a"));
  REQUIRE_MESSAGE(a.code == 0, a.err);
  CHECK(fs::exists(f.dir / "a" / "fit.json"));
  CHECK(fs::exists(f.dir / "a" / "fit_summary.txt"));
  const io::Json j = io::read_json(f.dir / "a" / "fit.json");
  CHECK(j["groups"].size() == 3);
  CHECK(j["groups"][0]["name"] == "Lachnospiraceae");
  CHECK(j["cv"]["table"].size() == 50);
  CHECK(j["sigma"].get<double>() > 0.0);

  const Run b = run(data_args("fit", f, f.dir / "b"));
  REQUIRE(b.code == 0);
  CHECK(slurp(f.dir / "a" / "fit.json") == slurp(f.dir / "b" / "fit.json"));
}

TEST_CASE("mismatched response rows exit with code 2") {
  const Files f = make_data("cli_rows", 12, 40, {3, 3}, {"A", "B"}, 1, -1, 0.0);
  const io::CsvTable y = io::read_csv(f.y);
  io::write_csv(f.y, y.header, y.values.topRows(39));
  const Run r = run(data_args("fit", f, f.dir / "out"));
  CHECK(r.code == 2);
  CHECK(r.err.find("Y has 39 rows but the design has 40 rows") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2 and help with 0") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"fit", "--help"}).code == 0);
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"fit"}).code == 2);
  const Files f = make_data("cli_usage", 13, 30, {3, 3}, {"A", "B"}, 1, -1, 0.0);
  auto args = data_args("test", f, f.dir / "o");
  args.insert(args.end(), {"--method", "bonferroni"});
  CHECK(run(args).code == 2);
  args = data_args("fit", f, f.dir / "o");
  args.insert(args.end(), {"--alpha", "1.5"});
  const Run r = run(args);
  CHECK(r.code == 2);
  CHECK(r.err.find("alpha") != std::string::npos);
  args = data_args("fit", f, f.dir / "o");
  args[2] = (f.dir / "nope.csv").string();
  CHECK(run(args).code == 2);
  CHECK(run({"simulate", "--preset", "no-such-design"}).code == 2);
}

TEST_CASE("an interpolating fit exits with code 3") {
  const Files f = make_data("cli_interp", 14, 20, {12, 12}, {"A", "B"}, 1, -1, 0.0);
  auto args = data_args("fit", f, f.dir / "o");
  args.insert(args.end(), {"--lambda", "1e-9"});
  const Run r = run(args);
  CHECK(r.code == 3);
  CHECK(r.err.find("numerical failure") != std::string::npos);
}

TEST_CASE("single group gives a single-row report") {
  const Files f = make_data("cli_k1", 15, 50, {5}, {"Prevotellaceae"}, 2, 0, 0.6);
  const Run r = run(data_args("test", f, f.dir / "o"));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const io::Json j = io::read_json(f.dir / "o" / "report.json");
  REQUIRE(j["groups"].size() == 1);
  CHECK(j["groups"][0]["name"] == "Prevotellaceae");
  CHECK(j["groups"][0]["testable"] == true);
  CHECK(j["groups"][0]["df"].get<double>() == 8.0);
  CHECK(j["groups"][0]["p"].get<double>() < 0.05);
  const std::string csv = slurp(f.dir / "o" / "report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("reports carry group names verbatim and flag the signal group") {
  const Files f = make_data("cli_names", 16, 80, {4, 3, 3}, kNames, 2, 0, 0.8);
  const Run r = run(data_args("test", f, f.dir / "o"));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  for (const auto& name : kNames) {
    CHECK(r.out.find(name) != std::string::npos);
    CHECK(slurp(f.dir / "o" / "report.csv").find(name) != std::string::npos);
  }
  CHECK(r.out.find("Lachnospiraceae+*") != std::string::npos);
  const io::Json j = io::read_json(f.dir / "o" / "report.json");
  CHECK(j["alpha"] == 0.05);
  CHECK(j["fdr"] == 0.10);
  CHECK(j["groups"][0]["method"] == "multivariate");
}

TEST_CASE("all-noise data with eleven groups rejects few groups") {
  std::vector<std::string> names;
  for (int k = 0; k < 11; ++k) names.push_back("family" + std::to_string(k + 1));
  const Files f = make_data("cli_noise", 17, 100, std::vector<Index>(11, 3), names, 2, -1, 0.0);
  const Run r = run(data_args("test", f, f.dir / "o"));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const io::Json j = io::read_json(f.dir / "o" / "report.json");
  REQUIRE(j["groups"].size() == 11);
  int raw = 0, bh = 0;
  for (const auto& g : j["groups"]) {
    CHECK(g["testable"] == true);
    raw += g["significant"].get<bool>();
    bh += g["bh_significant"].get<bool>();
  }
  // Binomial(11, 0.05): P(X <= 2) = 0.98.
  CHECK(raw <= 2);
  CHECK(bh <= raw);
}

TEST_CASE("saved fits and cached scores reproduce a fresh test") {
  const Files f = make_data("cli_reuse", 18, 60, {4, 3, 3}, kNames, 2, 1, 0.7);
  REQUIRE(run(data_args("fit", f, f.dir / "fit")).code == 0);
  REQUIRE(run(data_args("test", f, f.dir / "fresh")).code == 0);

  auto args = data_args("test", f, f.dir / "saved");
  args.insert(args.end(), {"--fit", (f.dir / "fit" / "fit.json").string()});
  const Run saved = run(args);
  REQUIRE_MESSAGE(saved.code == 0, saved.err);
  CHECK(slurp(f.dir / "saved" / "report.json") == slurp(f.dir / "fresh" / "report.json"));

  const fs::path cache = f.dir / "cache";
  for (const char* out : {"c1", "c2"}) {
    args = data_args("test", f, f.dir / out);
    args.insert(args.end(), {"--cache-dir", cache.string()});
    REQUIRE(run(args).code == 0);
  }
  CHECK(std::distance(fs::directory_iterator(cache), fs::directory_iterator{}) == 3);
  CHECK(slurp(f.dir / "c1" / "report.json") == slurp(f.dir / "fresh" / "report.json"));
  CHECK(slurp(f.dir / "c2" / "report.json") == slurp(f.dir / "fresh" / "report.json"));

  io::Json broken = io::read_json(f.dir / "fit" / "fit.json");
  broken["groups"].erase(2);
  io::write_json(f.dir / "broken.json", broken);
  args = data_args("test", f, f.dir / "b");
  args.insert(args.end(), {"--fit", (f.dir / "broken.json").string()});
  CHECK(run(args).code == 2);
}

TEST_CASE("screen-then-posthoc tests only screened groups") {
  const Files f = make_data("cli_posthoc", 19, 80, {4, 3, 3}, kNames, 2, 0, 0.8);
  auto args = data_args("test", f, f.dir / "o");
  args.insert(args.end(), {"--method", "screen-then-posthoc"});
  const Run r = run(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const io::Json j = io::read_json(f.dir / "o" / "report.json");
  std::set<std::string> screened;
  for (const auto& g : j["groups"])
    if (g["bh_significant"].get<bool>()) screened.insert(g["name"].get<std::string>());
  CHECK(screened.count("Lachnospiraceae") == 1);
  REQUIRE(j["posthoc"].size() == 2 * screened.size());
  for (const auto& row : j["posthoc"]) {
    CHECK(screened.count(row["group"].get<std::string>()) == 1);
    CHECK(row["method"] == "univariate");
  }
  CHECK(fs::exists(f.dir / "o" / "posthoc.csv"));
}

TEST_CASE("union method reports one row per group") {
  const Files f = make_data("cli_union", 20, 60, {4, 3, 3}, kNames, 2, 0, 0.8);
  auto args = data_args("test", f, f.dir / "o");
  args.insert(args.end(), {"--method", "union"});
  const Run r = run(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const io::Json j = io::read_json(f.dir / "o" / "report.json");
  REQUIRE(j["groups"].size() == 3);
  for (const auto& g : j["groups"]) CHECK(g["method"] == "univariate_union");
  CHECK(j["groups"][0]["p"].get<double>() < 0.05);
}

TEST_CASE("proportion inputs match the same data given as counts") {
  const Files f = make_data("cli_prop", 21, 50, {4, 3}, {"A", "B"}, 1, 0, 0.5);
  io::CsvTable c = io::read_csv(f.counts);
  Matrix comp = replace_zeros(c.values, 0.5);
  for (Index j0 : {Index{0}, Index{4}}) {
    const Index w = j0 == 0 ? 4 : 3;
    const Vector s = comp.middleCols(j0, w).rowwise().sum();
    for (Index i = 0; i < comp.rows(); ++i) comp.row(i).segment(j0, w) /= s(i);
  }
  io::write_csv(f.dir / "props.csv", c.header, comp);
  auto a = data_args("fit", f, f.dir / "counts_fit");
  a.insert(a.end(), {"--lambda", "0.5"});
  auto b = data_args("fit", f, f.dir / "props_fit");
  b[4] = (f.dir / "props.csv").string();
  b.insert(b.end(), {"--lambda", "0.5", "--proportions"});
  REQUIRE(run(a).code == 0);
  REQUIRE(run(b).code == 0);
  const io::Json ja = io::read_json(f.dir / "counts_fit" / "fit.json");
  const io::Json jb = io::read_json(f.dir / "props_fit" / "fit.json");
  CHECK(std::abs(ja["sigma"].get<double>() - jb["sigma"].get<double>()) < 1e-8);
  CHECK_FALSE(ja.contains("cv"));
}

TEST_CASE("config file values yield to flags") {
  const Files f = make_data("cli_config", 22, 50, {3, 3}, {"A", "B"}, 1, 0, 0.5);
  io::write_json(f.dir / "cfg.json", io::Json{{"alpha", 0.01}, {"fdr", 0.2}, {"lambda", 0.3}});
  auto args = data_args("test", f, f.dir / "o");
  args.insert(args.end(), {"--config", (f.dir / "cfg.json").string(), "--alpha", "0.2"});
  const Run r = run(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const io::Json j = io::read_json(f.dir / "o" / "report.json");
  CHECK(j["alpha"] == 0.2);
  CHECK(j["fdr"] == 0.2);

  io::write_json(f.dir / "bad.json", io::Json{{"alpah", 0.01}});
  args = data_args("test", f, f.dir / "o2");
  args.insert(args.end(), {"--config", (f.dir / "bad.json").string()});
  const Run bad = run(args);
  CHECK(bad.code == 2);
  CHECK(bad.err.find("alpah") != std::string::npos);
}

TEST_CASE("simulate with one replication is deterministic") {
  const fs::path dir = subviews::testing::temp_dir("cli_sim");
  for (const char* out : {"a", "b"}) {
    const Run r = run({"simulate", "--preset", "null-small", "--reps", "1", "--seed", "5", "--out",
                       (dir / out).string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  for (const char* file : {"summary.json", "replications.csv", "qq.tsv", "summary.txt"}) {
    CHECK(fs::exists(dir / "a" / file));
    CHECK(slurp(dir / "a" / file) == slurp(dir / "b" / file));
  }
  const io::Json j = io::read_json(dir / "a" / "summary.json");
  CHECK(j["replications"] == 1);
  CHECK(j["completed"].get<int>() + j["failed"].get<int>() == 1);
}

TEST_CASE("simulate rejects an invalid spec field") {
  const fs::path dir = subviews::testing::temp_dir("cli_spec");
  io::write_json(dir / "spec.json", io::Json{{"n", 50}, {"rho_within", 0.3}});
  Run r = run({"simulate", "--spec", (dir / "spec.json").string(), "--reps", "1", "--out",
               (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("rho_within") != std::string::npos);
  io::write_json(dir / "spec2.json", io::Json{{"n", -5}});
  r = run({"simulate", "--preset", "null-small", "--spec", (dir / "spec2.json").string(), "--out",
           (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("n") != std::string::npos);
}

TEST_CASE("qq writes the panel file and goodness-of-fit statistics") {
  const fs::path dir = subviews::testing::temp_dir("cli_qq");
  const Run r = run({"qq", "--preset", "null-small", "--reps", "20", "--out", (dir / "o").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const io::Json j = io::read_json(dir / "o" / "qq_stats.json");
  REQUIRE(j["panels"].size() >= 2);
  CHECK(j["panels"][0]["panel_id"] == "sigma");
  for (const auto& p : j["panels"]) {
    CHECK(p["ks_pvalue"].get<double>() >= 0.0);
    CHECK(p["ks_pvalue"].get<double>() <= 1.0);
  }
  CHECK(slurp(dir / "o" / "qq.tsv").find("pivotal_") != std::string::npos);
}

TEST_CASE("thread count resolution") {
  ::unsetenv("SUBVIEWS_THREADS");
  CHECK(resolve_threads(3) == 3);
  CHECK(resolve_threads(0) >= 1);
  ::setenv("SUBVIEWS_THREADS", "2", 1);
  CHECK(resolve_threads(0) == 2);
  CHECK(resolve_threads(5) == 5);
  ::setenv("SUBVIEWS_THREADS", "many", 1);
  CHECK_THROWS_AS(resolve_threads(0), ValidationError);
  ::unsetenv("SUBVIEWS_THREADS");
}
