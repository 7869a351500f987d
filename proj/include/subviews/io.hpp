#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "subviews/inference.hpp"
#include "subviews/pipeline.hpp"
#include "subviews/simgen.hpp"

namespace subviews::io {

using Json = nlohmann::json;

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

/// Numeric CSV with a header row. Throws ValidationError with line numbers.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Matrix& values);

struct GroupSpec {
  std::string name;
  Index size = 0;
};

/// {"groups": [{"name": ..., "size": ...}, ...]}
std::vector<GroupSpec> read_group_map(const std::filesystem::path& path);
std::vector<GroupSpec> parse_group_map(const Json& j);

Json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline; doubles round-trip exactly.
void write_json(const std::filesystem::path& path, const Json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

Json matrix_to_json(const Matrix& m);  // row-major nested arrays
Matrix matrix_from_json(const Json& j);

Json fit_to_json(const ScaledFit& fit, const PreparedData& data, const PenaltyWeights& weights,
                 const std::optional<CvResult>& cv);
/// Coefficients, sigma and lambda back from fit_to_json output.
ScaledFit fit_from_json(const Json& j);

Json report_to_json(const std::vector<GroupTestReport>& reports, double alpha, double fdr);
std::string report_csv(const std::vector<GroupTestReport>& reports, double alpha, double fdr);
/// Fixed-width text with 6 significant digits. '+' marks raw p < alpha and '*'
/// marks BH-adjusted p <= fdr.
std::string report_text(const std::vector<GroupTestReport>& reports, double alpha, double fdr);
std::string fit_text(const ScaledFit& fit, const PreparedData& data);

Json spec_to_json(const SimDesignSpec& spec);
/// Overrides fields of `base`; unknown or malformed fields throw
/// ValidationError naming the field.
SimDesignSpec spec_from_json(const Json& j, SimDesignSpec base);

Json summary_to_json(const ReplicationSummary& s);
std::string records_csv(const ReplicationSummary& s);
/// theoretical_quantile, empirical_quantile, panel_id
std::string qq_tsv(const ReplicationSummary& s);
std::string summary_text(const ReplicationSummary& s);

/// FNV-1a over the design's shape, intercept flag and matrix bytes.
std::uint64_t design_hash(const PreparedData& data);

/// Score cache: one JSON file per (design hash, k, xi) holding S_k.
std::filesystem::path score_cache_path(const std::filesystem::path& dir, std::uint64_t hash,
                                       Index k, double xi);
void save_score(const std::filesystem::path& dir, std::uint64_t hash, const ScoreProjection& sp);
/// Rebuilds the projection diagnostics from the cached S_k; nullopt when absent
/// or written by another format version.
std::optional<ScoreProjection> load_score(const std::filesystem::path& dir, std::uint64_t hash,
                                          const PreparedData& data, Index k, double xi,
                                          const std::vector<double>& weights_star);

}  // namespace subviews::io
