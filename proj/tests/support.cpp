#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

namespace subviews::testing {

Matrix gaussian(Rng& rng, Index rows, Index cols) {
  std::normal_distribution<double> z;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = z(rng);
  return m;
}

MultiViewDesign gaussian_design(Rng& rng, Index n, const std::vector<Index>& sizes,
                                bool intercept) {
  MultiViewDesign d;
  for (Index s : sizes) d.x_blocks.push_back(gaussian(rng, n, s));
  d.has_intercept = intercept;
  return d;
}

MultiViewDesign compositional_design(Rng& rng, Index n, const std::vector<Index>& sizes,
                                     bool intercept) {
  std::vector<Matrix> blocks;
  for (Index s : sizes) blocks.push_back(gaussian(rng, n, s).array().exp().matrix());
  return clr_design(to_compositions(std::move(blocks)), std::nullopt, intercept);
}

Matrix gram_schmidt_projector(const Matrix& m, double tol) {
  const double scale = m.colwise().norm().maxCoeff();
  std::vector<Vector> basis;
  for (Index j = 0; j < m.cols(); ++j) {
    Vector v = m.col(j);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& u : basis) v -= u.dot(v) * u;
    const double norm = v.norm();
    if (norm > tol * scale) basis.push_back(v / norm);
  }
  Matrix p = Matrix::Zero(m.rows(), m.rows());
  for (const auto& u : basis) p += u * u.transpose();
  return p;
}

Matrix ols(const Matrix& x, const Matrix& y) {
  return (x.transpose() * x).ldlt().solve(x.transpose() * y);
}

std::vector<double> reference_weights(const std::vector<Matrix>& blocks, Index q, double eps) {
  const double n = static_cast<double>(blocks.front().rows());
  const double big_k = static_cast<double>(blocks.size());
  std::vector<double> w;
  for (const auto& b : blocks) {
    Eigen::JacobiSVD<Matrix> svd(b);
    const double d1 = svd.singularValues()(0);
    const double pk = static_cast<double>(b.cols());
    w.push_back(d1 * (std::sqrt(pk * q) + std::sqrt(2.0 * std::log(big_k / eps))) / (n * q));
  }
  return w;
}

namespace {

Matrix svt(const Matrix& m, double tau) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector d = (svd.singularValues().array() - tau).max(0.0).matrix();
  return svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
}

Matrix block_prox(const Matrix& m, const std::vector<Index>& sizes, const std::vector<double>& tau,
                  double step) {
  Matrix out(m.rows(), m.cols());
  Index off = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    out.middleRows(off, sizes[k]) = svt(m.middleRows(off, sizes[k]), step * tau[k]);
    off += sizes[k];
  }
  return out;
}

double nuclear(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues().sum();
}

}  // namespace

double profiled_objective(const Matrix& x, const Matrix& y, const std::vector<Index>& sizes,
                          const std::vector<double>& tau, const Matrix& b) {
  const double nq = static_cast<double>(y.size());
  double pen = 0.0;
  Index off = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    pen += tau[k] * nuclear(b.middleRows(off, sizes[k]));
    off += sizes[k];
  }
  return (y - x * b).norm() / std::sqrt(nq) + pen;
}

ReferenceFit proximal_gradient_reference(const Matrix& x, const Matrix& y,
                                         const std::vector<Index>& sizes,
                                         const std::vector<double>& tau, int iterations) {
  const double sqrt_nq = std::sqrt(static_cast<double>(y.size()));
  auto smooth = [&](const Matrix& b) { return (y - x * b).norm() / sqrt_nq; };
  auto grad = [&](const Matrix& b) {
    const Matrix r = y - x * b;
    return Matrix(-(x.transpose() * r) / (r.norm() * sqrt_nq));
  };
  auto full = [&](const Matrix& b) { return profiled_objective(x, y, sizes, tau, b); };

  Matrix b = Matrix::Zero(x.cols(), y.cols());
  Matrix z = b;
  double t = 1.0;
  double lip = 1.0;
  double f_prev = full(b);
  for (int it = 0; it < iterations; ++it) {
    const double fz = smooth(z);
    const Matrix g = grad(z);
    Matrix next;
    for (;;) {
      next = block_prox(z - g / lip, sizes, tau, 1.0 / lip);
      const Matrix d = next - z;
      if (smooth(next) <= fz + g.cwiseProduct(d).sum() + 0.5 * lip * d.squaredNorm() + 1e-15)
        break;
      lip *= 2.0;
    }
    lip *= 0.95;
    const double f_next = full(next);
    if (f_next > f_prev) {
      // Restart momentum.
      t = 1.0;
      z = b;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = next + ((t - 1.0) / t_next) * (next - b);
    b = next;
    t = t_next;
    f_prev = f_next;
  }
  ReferenceFit out;
  out.b = b;
  out.objective = full(b);
  out.sigma = smooth(b);
  return out;
}

double kkt_violation(const Matrix& x, const Matrix& y, const std::vector<Index>& sizes,
                     const std::vector<double>& tau, const Matrix& b) {
  const double nq = static_cast<double>(y.size());
  const Matrix r = y - x * b;
  const double sigma = r.norm() / std::sqrt(nq);
  double worst = 0.0;
  Index off = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const Matrix xk = x.middleCols(off, sizes[k]);
    const Matrix bk = b.middleRows(off, sizes[k]);
    off += sizes[k];
    const Matrix corr = xk.transpose() * r / (nq * sigma);
    if (tau[k] == 0.0) {
      worst = std::max(worst, corr.norm());
      continue;
    }
    const Matrix g = corr / tau[k];
    Eigen::JacobiSVD<Matrix> svd(g);
    worst = std::max(worst, svd.singularValues()(0) - 1.0);
    const double nn = nuclear(bk);
    if (nn > 0.0) worst = std::max(worst, 1.0 - g.cwiseProduct(bk).sum() / nn);
  }
  return worst;
}

std::vector<double> bh_reference(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<double> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double best = 1.0;
    for (std::size_t j = 0; j < m; ++j)
      if (sorted[j] >= p[i]) {
        // For ties the largest rank j among equal values gives the smallest bound.
        std::size_t rank = j + 1;
        while (rank < m && sorted[rank] == sorted[j]) ++rank;
        best = std::min(best, static_cast<double>(m) * sorted[j] / static_cast<double>(rank));
      }
    out[i] = best;
  }
  return out;
}

std::string temp_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("subviews_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace subviews::testing
