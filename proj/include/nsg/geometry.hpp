#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "nsg/rng.hpp"

namespace nsg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Unit vector with a normalizing constructor; |norm - 1| <= 1e-12 afterwards.
struct UnitVector {
  Vec coords;

  explicit UnitVector(Vec v) {
    double n = v.norm();
    if (!(n > 1e-14) || !v.allFinite())
      throw std::invalid_argument("UnitVector: zero or non-finite vector");
    coords = v / n;
  }

  int dim() const { return static_cast<int>(coords.size()); }
};

// Arc of a great circle: t -> base cos t + tangent sin t.
struct GeodesicSegment {
  UnitVector base;
  UnitVector tangent;
  double length;

  GeodesicSegment(UnitVector b, UnitVector t, double len = kPi)
      : base(std::move(b)), tangent(std::move(t)), length(len) {
    if (base.dim() != tangent.dim())
      throw std::invalid_argument("GeodesicSegment: dimension mismatch");
    if (std::abs(base.coords.dot(tangent.coords)) > 1e-12)
      throw std::invalid_argument("GeodesicSegment: base and tangent not orthogonal");
    if (!(length > 0.0) || length > kPi + 1e-12)
      throw std::invalid_argument("GeodesicSegment: length outside (0, pi]");
  }
};

inline Vec geodesic_point(const GeodesicSegment& g, double t) {
  if (t < 0.0 || t > g.length)
    throw std::domain_error("geodesic_point: t outside [0, length]");
  return g.base.coords * std::cos(t) + g.tangent.coords * std::sin(t);
}

// Evaluation off the parameter interval; valid since the circle is global.
inline Vec geodesic_point_extended(const GeodesicSegment& g, double t) {
  return g.base.coords * std::cos(t) + g.tangent.coords * std::sin(t);
}

inline double angle(const Vec& u, const Vec& v) {
  double nu = u.norm(), nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0))
    throw std::domain_error("angle: zero vector");
  double c = u.dot(v) / (nu * nv);
  c = std::max(-1.0, std::min(1.0, c));
  return std::acos(c);
}

inline std::pair<Vec, Vec> random_orthonormal_pair(int dim, Rng& rng) {
  if (dim < 2) throw std::invalid_argument("random_orthonormal_pair: dim < 2");
  Vec v = rng.unit(dim);
  for (int attempt = 0; attempt < 64; ++attempt) {
    Vec w = rng.gaussian(dim);
    w -= w.dot(v) * v;
    double nw = w.norm();
    if (nw > 1e-10) return {v, w / nw};
  }
  throw std::runtime_error("random_orthonormal_pair: degenerate draws");
}

inline GeodesicSegment random_geodesic(int dim, Rng& rng) {
  auto [v, w] = random_orthonormal_pair(dim, rng);
  return GeodesicSegment(UnitVector(v), UnitVector(w));
}

}  // namespace nsg
