#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nsg/geometry.hpp"
#include "nsg/rng.hpp"

namespace nsg {

// Deterministic probe of Conv(matrices): the vertices first, then `count -
// |matrices|` flat-Dirichlet convex combinations. Under-approximates the
// hull by construction; extreme points are covered by the vertex block.
inline std::vector<Mat> hull_matrix_sample(const std::vector<Mat>& matrices,
                                           std::uint64_t seed, int count) {
  if (matrices.empty()) throw std::invalid_argument("hull_matrix_sample: empty list");
  if (count < 1) throw std::invalid_argument("hull_matrix_sample: count < 1");
  const Eigen::Index rows = matrices[0].rows(), cols = matrices[0].cols();
  for (const Mat& m : matrices)
    if (m.rows() != rows || m.cols() != cols)
      throw std::invalid_argument("hull_matrix_sample: shape mismatch");

  std::vector<Mat> out;
  out.reserve(count);
  const int mcount = static_cast<int>(matrices.size());
  for (int i = 0; i < mcount && static_cast<int>(out.size()) < count; ++i)
    out.push_back(matrices[i]);
  for (int j = static_cast<int>(out.size()); j < count; ++j) {
    Rng rng = Rng::derived(seed, static_cast<std::uint64_t>(j));
    std::vector<double> lambda = rng.dirichlet(mcount);
    Mat combo = Mat::Zero(rows, cols);
    for (int i = 0; i < mcount; ++i) combo += lambda[i] * matrices[i];
    out.push_back(std::move(combo));
  }
  return out;
}

inline double min_singular_value(const Mat& M) {
  if (M.size() == 0) throw std::invalid_argument("min_singular_value: empty matrix");
  if (!M.allFinite()) throw std::invalid_argument("min_singular_value: non-finite entries");
  Eigen::JacobiSVD<Mat> svd(M);
  return svd.singularValues().minCoeff();
}

// Numerical rank with the relative threshold sigma < 1e-8 * sigma_max.
inline int numerical_rank(const Mat& M, double rel_threshold = 1e-8) {
  Eigen::JacobiSVD<Mat> svd(M);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  double cutoff = rel_threshold * sv(0);
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++r;
  return r;
}

// k+1 vectors in R^{k+1} that are pairwise near-orthonormal to within eps yet
// only span a k-dimensional subspace: e_1..e_k plus sum_j (eps/2) e_j. The
// choice of k keeps the norm defect of the last vector below eps^2.
inline std::vector<Vec> near_orthonormal_dependent(double eps) {
  if (!(eps > 0.0) || !(eps < 1.0))
    throw std::domain_error("near_orthonormal_dependent: eps must lie in (0, 1)");
  double bound = 4.0 * (1.0 - eps * eps) / (eps * eps);
  int k = static_cast<int>(std::ceil(bound - 1e-9));
  std::vector<Vec> out;
  out.reserve(k + 1);
  for (int i = 0; i < k; ++i) {
    Vec e = Vec::Zero(k + 1);
    e[i] = 1.0;
    out.push_back(std::move(e));
  }
  Vec last = Vec::Zero(k + 1);
  for (int j = 0; j < k; ++j) last[j] = eps / 2.0;
  out.push_back(std::move(last));
  return out;
}

// Convex combinations of two maps fixing the hyperplane x_n = 0 and moving
// the normal to the positive side stay full-rank; reports the smallest
// singular value seen along a lambda grid.
inline double hyperplane_convex_rank_margin(const Mat& A, const Mat& B, int grid) {
  if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows())
    throw std::invalid_argument("hyperplane_convex_rank_margin: need square matrices of equal size");
  if (grid < 1) throw std::invalid_argument("hyperplane_convex_rank_margin: grid < 1");
  const Eigen::Index n = A.rows();
  const double tol = 1e-10;
  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    Vec ej = Vec::Zero(n);
    ej[j] = 1.0;
    if ((A.col(j) - ej).lpNorm<Eigen::Infinity>() > tol)
      throw std::domain_error("hyperplane_convex_rank_margin: A does not restrict to the identity on the hyperplane");
    if ((B.col(j) - ej).lpNorm<Eigen::Infinity>() > tol)
      throw std::domain_error("hyperplane_convex_rank_margin: B does not restrict to the identity on the hyperplane");
  }
  if (!(A(n - 1, n - 1) > tol))
    throw std::domain_error("hyperplane_convex_rank_margin: positive normal component violated (A)");
  if (!(B(n - 1, n - 1) > tol))
    throw std::domain_error("hyperplane_convex_rank_margin: positive normal component violated (B)");

  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    double lambda = static_cast<double>(i) / grid;
    margin = std::min(margin, min_singular_value(lambda * A + (1.0 - lambda) * B));
  }
  return margin;
}

}  // namespace nsg
