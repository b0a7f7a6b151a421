// Test-only brute-force oracles, kept independent of the library code paths
// they validate.
#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "nsg/geometry.hpp"

namespace nsg_test {

// Minimum norm over the hull by exhaustive simplex-grid search; resolution is
// the weight-grid step. Supports 2-4 points.
inline double brute_force_min_norm(const std::vector<nsg::Vec>& pts, double resolution) {
  const int m = static_cast<int>(pts.size());
  const int N = static_cast<int>(1.0 / resolution + 0.5);
  double best = std::numeric_limits<double>::infinity();
  if (m == 1) return pts[0].norm();
  if (m == 2) {
    for (int i = 0; i <= N; ++i) {
      double a = static_cast<double>(i) / N;
      best = std::min(best, (a * pts[0] + (1.0 - a) * pts[1]).norm());
    }
    return best;
  }
  if (m == 3) {
    for (int i = 0; i <= N; ++i)
      for (int j = 0; j <= N - i; ++j) {
        double a = static_cast<double>(i) / N, b = static_cast<double>(j) / N;
        best = std::min(best, (a * pts[0] + b * pts[1] + (1.0 - a - b) * pts[2]).norm());
      }
    return best;
  }
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= N - i; ++j)
      for (int k = 0; k <= N - i - j; ++k) {
        double a = static_cast<double>(i) / N, b = static_cast<double>(j) / N,
               c = static_cast<double>(k) / N;
        best = std::min(best,
                        (a * pts[0] + b * pts[1] + c * pts[2] + (1.0 - a - b - c) * pts[3]).norm());
      }
  return best;
}

// Smallest singular value of [[s,1],[2,t]] over the grid |s|,|t| <= 1.
inline double planar_family_min_sigma(int steps) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= steps; ++i) {
    double s = -1.0 + 2.0 * i / steps;
    for (int j = 0; j <= steps; ++j) {
      double t = -1.0 + 2.0 * j / steps;
      Eigen::Matrix2d M;
      M << s, 1.0, 2.0, t;
      Eigen::JacobiSVD<Eigen::Matrix2d> svd(M);
      best = std::min(best, svd.singularValues().minCoeff());
    }
  }
  return best;
}

// min |det| over the same family.
inline double planar_family_min_abs_det(int steps) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= steps; ++i) {
    double s = -1.0 + 2.0 * i / steps;
    for (int j = 0; j <= steps; ++j) {
      double t = -1.0 + 2.0 * j / steps;
      best = std::min(best, std::abs(s * t - 2.0));
    }
  }
  return best;
}

// High-resolution polar quadrature of the mollifier over its support ball
// (dimensions 1-3), used as the normalization oracle.
inline double polar_density_integral(int dim, double epsilon, double normalizer) {
  const int nr = 4000;
  double total = 0.0;
  for (int i = 0; i < nr; ++i) {
    double r = (i + 0.5) / nr;  // unit radius
    double rho = normalizer * std::exp(1.0 / (r * r - 1.0));
    double shell;
    if (dim == 1) shell = 2.0;
    else if (dim == 2) shell = 2.0 * nsg::kPi * (r * epsilon);
    else shell = 4.0 * nsg::kPi * (r * epsilon) * (r * epsilon);
    total += shell * rho * (epsilon / nr);
  }
  return total;
}

}  // namespace nsg_test
