#pragma once

#include <optional>
#include <string>
#include <vector>

#include "subviews/linops.hpp"

namespace subviews {

/// Raw sub-compositional blocks Z_1..Z_K sharing n rows.
struct SubCompositionalDataset {
  std::vector<Matrix> blocks;
  std::vector<std::string> group_names;

  Index n() const { return blocks.empty() ? 0 : blocks.front().rows(); }
  Index num_groups() const { return static_cast<Index>(blocks.size()); }
  std::vector<Index> group_sizes() const;
};

/// Multi-view design X = (X_1, ..., X_K) with optional unpenalized controls.
struct MultiViewDesign {
  std::vector<Matrix> x_blocks;
  std::optional<Matrix> controls;
  bool has_intercept = true;
  std::vector<std::string> group_names;

  Index n() const { return x_blocks.empty() ? 0 : x_blocks.front().rows(); }
  Index p() const;
  Index num_groups() const { return static_cast<Index>(x_blocks.size()); }
  std::vector<Index> group_sizes() const;
  Matrix concatenated() const;
  /// Rows selected by index, used for cross-validation splits.
  MultiViewDesign subset_rows(const std::vector<Index>& rows) const;
  /// Checks block shapes; throws ValidationError.
  void validate() const;
};

/// Replaces exact zeros by `fill`. Rejects negative entries.
Matrix replace_zeros(const Matrix& counts, double fill = 0.5);

/// Row-normalizes each block to the simplex. Requires strictly positive rows.
SubCompositionalDataset to_compositions(std::vector<Matrix> blocks,
                                        std::vector<std::string> group_names = {});

/// Splits a wide n x p matrix into consecutive column blocks.
std::vector<Matrix> split_columns(const Matrix& wide, const std::vector<Index>& sizes);

/// Centered log-ratio per block: X_k = log(Z_k)(I - 11'/p_k).
MultiViewDesign clr_design(const SubCompositionalDataset& data,
                           std::optional<Matrix> controls = std::nullopt,
                           bool has_intercept = true);

/// Inverse of the clr map on a single row: exp, then renormalize.
Vector clr_inverse(const Vector& clr_row);

}  // namespace subviews
