#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsg/geometry.hpp"

namespace nsg {

struct MinNormResult {
  Vec witness;
  double distance = 0.0;
  std::vector<double> weights;
  int iterations = 0;
  double gap = 0.0;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& msg, double gap)
      : std::runtime_error(msg + " (last duality gap " + std::to_string(gap) + ")"),
        last_gap(gap) {}
  double last_gap;
};

// Minimum-norm point of conv(points) by Gilbert / Frank-Wolfe descent with
// away steps and exact line search. Stops on the duality gap
// g = <x, x - s>, which bounds ||x - x*||^2, so gap <= tol^2 certifies the
// witness within tol.
inline MinNormResult min_norm_in_hull(const std::vector<Vec>& points, double tol) {
  if (points.empty()) throw std::invalid_argument("min_norm_in_hull: empty point list");
  if (!(tol > 0.0)) throw std::invalid_argument("min_norm_in_hull: tol must be positive");
  const int m = static_cast<int>(points.size());
  const Eigen::Index d = points[0].size();
  double scale2 = 0.0;
  for (const Vec& p : points) {
    if (p.size() != d) throw std::invalid_argument("min_norm_in_hull: dimension mismatch");
    if (!p.allFinite()) throw std::invalid_argument("min_norm_in_hull: non-finite point");
    scale2 = std::max(scale2, p.squaredNorm());
  }

  const int max_iters = 100000;
  const double stop_gap = std::max(tol * tol, 64.0 * 1e-16 * (1.0 + scale2));

  std::vector<double> w(m, 0.0);
  int start = 0;
  for (int i = 1; i < m; ++i)
    if (points[i].squaredNorm() < points[start].squaredNorm()) start = i;
  w[start] = 1.0;
  Vec x = points[start];

  auto rebuild = [&]() {
    Vec y = Vec::Zero(d);
    for (int i = 0; i < m; ++i)
      if (w[i] > 0.0) y += w[i] * points[i];
    return y;
  };

  double gap = 0.0;
  int it = 0;
  for (; it < max_iters; ++it) {
    int s = 0;
    double best = x.dot(points[0]);
    for (int i = 1; i < m; ++i) {
      double v = x.dot(points[i]);
      if (v < best) { best = v; s = i; }
    }
    gap = x.squaredNorm() - best;
    if (gap <= stop_gap) break;

    int a = -1;
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      if (w[i] <= 0.0) continue;
      double v = x.dot(points[i]);
      if (v > worst) { worst = v; a = i; }
    }

    // pick the steeper descent direction
    Vec d_fw = points[s] - x;
    bool use_away = false;
    if (a >= 0 && w[a] < 1.0) {
      // away direction x - p_a; steeper when <x, p_a> - <x,x> > <x,x> - <x, p_s>
      if (worst - x.squaredNorm() > x.squaredNorm() - best) use_away = true;
    }

    if (!use_away) {
      double denom = d_fw.squaredNorm();
      if (denom <= 0.0) break;
      double gamma = std::min(1.0, std::max(0.0, -x.dot(d_fw) / denom));
      if (gamma <= 0.0) break;
      for (double& wi : w) wi *= (1.0 - gamma);
      w[s] += gamma;
      x += gamma * d_fw;
    } else {
      Vec d_aw = x - points[a];
      double denom = d_aw.squaredNorm();
      if (denom <= 0.0) break;
      double gmax = w[a] / (1.0 - w[a]);
      double gamma = std::min(gmax, std::max(0.0, -x.dot(d_aw) / denom));
      if (gamma <= 0.0) break;
      for (double& wi : w) wi *= (1.0 + gamma);
      w[a] -= gamma;
      if (w[a] < 1e-16) w[a] = 0.0;
      x += gamma * d_aw;
    }

    if ((it & 63) == 63) x = rebuild();  // fight drift
  }

  if (it >= max_iters && gap > stop_gap)
    throw ConvergenceError("min_norm_in_hull: no convergence within iteration cap", gap);

  // clean the weights and make the witness reproduce them exactly
  double wsum = 0.0;
  for (double& wi : w) {
    if (wi < 0.0) wi = 0.0;
    wsum += wi;
  }
  for (double& wi : w) wi /= wsum;
  x = rebuild();

  MinNormResult res;
  res.witness = x;
  res.distance = x.norm();
  res.weights = std::move(w);
  res.iterations = it;
  res.gap = gap;
  return res;
}

}  // namespace nsg
