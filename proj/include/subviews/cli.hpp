#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "subviews/pipeline.hpp"

namespace subviews {

enum class Command { fit, test, simulate, qq };
enum class TestMethod { multivariate, union_test, screen_then_posthoc };

struct RunConfig {
  Command command = Command::fit;
  std::filesystem::path y_path;
  std::filesystem::path counts_path;
  std::filesystem::path groups_path;
  std::filesystem::path controls_path;
  std::filesystem::path fit_path;    // test: reuse a saved fit instead of refitting
  std::filesystem::path cache_dir;   // test: score cache
  std::filesystem::path spec_path;   // simulate/qq: JSON spec overriding the preset
  std::filesystem::path out_dir = ".";
  bool proportions = false;  // inputs are compositions, not counts
  std::optional<double> fill;  // zero replacement; 0.5 for counts, 1e-6 for proportions
  bool intercept = true;
  std::string preset;
  std::size_t reps = 100;
  TestMethod method = TestMethod::multivariate;
  int threads = 0;  // 0: SUBVIEWS_THREADS, then available cores
  PipelineConfig pipeline;

  /// Throws ValidationError on out-of-range values or missing paths.
  void validate() const;
};

/// Thread count: flag, then SUBVIEWS_THREADS, then available cores.
int resolve_threads(int flag);

/// Parses and runs one command. Returns the process exit code: 0 success,
/// 2 usage or validation error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace subviews
