#include "subviews/composition.hpp"

#include <cmath>
#include <string>

#include "subviews/errors.hpp"

namespace subviews {
namespace {

std::string at(Index i, Index j) {
  return "(" + std::to_string(i) + ", " + std::to_string(j) + ")";
}

}  // namespace

std::vector<Index> SubCompositionalDataset::group_sizes() const {
  std::vector<Index> sizes;
  for (const auto& b : blocks) sizes.push_back(b.cols());
  return sizes;
}

Index MultiViewDesign::p() const {
  Index p = 0;
  for (const auto& b : x_blocks) p += b.cols();
  return p;
}

std::vector<Index> MultiViewDesign::group_sizes() const {
  std::vector<Index> sizes;
  for (const auto& b : x_blocks) sizes.push_back(b.cols());
  return sizes;
}

Matrix MultiViewDesign::concatenated() const {
  Matrix x(n(), p());
  Index col = 0;
  for (const auto& b : x_blocks) {
    x.middleCols(col, b.cols()) = b;
    col += b.cols();
  }
  return x;
}

MultiViewDesign MultiViewDesign::subset_rows(const std::vector<Index>& rows) const {
  MultiViewDesign out;
  out.has_intercept = has_intercept;
  out.group_names = group_names;
  const auto idx = Eigen::Map<const Eigen::Matrix<Index, Eigen::Dynamic, 1>>(
      rows.data(), static_cast<Index>(rows.size()));
  for (const auto& b : x_blocks) out.x_blocks.push_back(b(idx, Eigen::all));
  if (controls) out.controls = (*controls)(idx, Eigen::all);
  return out;
}

void MultiViewDesign::validate() const {
  if (x_blocks.empty()) throw ValidationError("design has no groups");
  const Index rows = n();
  for (std::size_t k = 0; k < x_blocks.size(); ++k) {
    if (x_blocks[k].rows() != rows)
      throw ValidationError("group " + std::to_string(k) + " has " +
                            std::to_string(x_blocks[k].rows()) + " rows, expected " +
                            std::to_string(rows));
    if (x_blocks[k].cols() == 0)
      throw ValidationError("group " + std::to_string(k) + " has no columns");
    if (!x_blocks[k].allFinite())
      throw ValidationError("group " + std::to_string(k) + " has non-finite entries");
  }
  if (controls && controls->rows() != rows)
    throw ValidationError("controls have " + std::to_string(controls->rows()) +
                          " rows, design has " + std::to_string(rows));
  if (!group_names.empty() && group_names.size() != x_blocks.size())
    throw ValidationError("group name count does not match group count");
}

Matrix replace_zeros(const Matrix& counts, double fill) {
  if (!(fill > 0.0)) throw ValidationError("zero-replacement fill must be positive");
  Matrix out = counts;
  for (Index j = 0; j < out.cols(); ++j)
    for (Index i = 0; i < out.rows(); ++i) {
      const double v = out(i, j);
      if (v < 0.0 || std::isnan(v)) throw ValidationError("negative entry at " + at(i, j));
      if (v == 0.0) out(i, j) = fill;
    }
  return out;
}

SubCompositionalDataset to_compositions(std::vector<Matrix> blocks,
                                        std::vector<std::string> group_names) {
  if (blocks.empty()) throw ValidationError("no composition blocks");
  const Index n = blocks.front().rows();
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    Matrix& b = blocks[k];
    if (b.rows() != n) throw ValidationError("blocks disagree on sample count");
    if ((b.array() < 0.0).any())
      throw ValidationError("negative entry in block " + std::to_string(k));
    const Vector sums = b.rowwise().sum();
    for (Index i = 0; i < n; ++i)
      if (!(sums(i) > 0.0))
        throw ValidationError("zero row sum in block " + std::to_string(k) + " row " +
                              std::to_string(i));
    b.array().colwise() /= sums.array();
  }
  if (group_names.empty())
    for (std::size_t k = 0; k < blocks.size(); ++k) group_names.push_back("G" + std::to_string(k + 1));
  if (group_names.size() != blocks.size())
    throw ValidationError("group name count does not match block count");
  return {std::move(blocks), std::move(group_names)};
}

std::vector<Matrix> split_columns(const Matrix& wide, const std::vector<Index>& sizes) {
  Index total = 0;
  for (Index s : sizes) {
    if (s <= 0) throw ValidationError("group sizes must be positive");
    total += s;
  }
  if (total != wide.cols())
    throw ValidationError("group sizes sum to " + std::to_string(total) + " but data has " +
                          std::to_string(wide.cols()) + " columns");
  std::vector<Matrix> out;
  Index col = 0;
  for (Index s : sizes) {
    out.push_back(wide.middleCols(col, s));
    col += s;
  }
  return out;
}

MultiViewDesign clr_design(const SubCompositionalDataset& data, std::optional<Matrix> controls,
                           bool has_intercept) {
  MultiViewDesign design;
  design.group_names = data.group_names;
  design.has_intercept = has_intercept;
  for (std::size_t k = 0; k < data.blocks.size(); ++k) {
    const Matrix& z = data.blocks[k];
    if (!(z.array() > 0.0).all())
      throw ValidationError("nonpositive composition in block " + std::to_string(k));
    Matrix x = z.array().log().matrix();
    x.colwise() -= x.rowwise().mean();
    design.x_blocks.push_back(std::move(x));
  }
  design.controls = std::move(controls);
  design.validate();
  return design;
}

Vector clr_inverse(const Vector& clr_row) {
  Vector e = clr_row.array().exp().matrix();
  return e / e.sum();
}

}  // namespace subviews
