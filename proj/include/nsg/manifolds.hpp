#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsg/geometry.hpp"
#include "nsg/min_norm.hpp"
#include "nsg/parallel.hpp"
#include "nsg/rng.hpp"

namespace nsg {

// Chart-cover description consumed by the smoothing machinery.
struct CoverSpec {
  std::vector<Vec> centers;
  double radius = 0.0;
  double support_radius = 0.0;
};

// Model space with exact distance and minimal-geodesic oracles. Tangent
// vectors at a point are given in coordinates of tangent_frame(x), an
// orthonormal basis of T_x.
class ModelManifold {
 public:
  virtual ~ModelManifold() = default;

  virtual std::string kind() const = 0;
  virtual int dim() const = 0;
  virtual int point_dim() const = 0;

  virtual double distance(const Vec& x, const Vec& y) const = 0;
  virtual Mat tangent_frame(const Vec& x) const = 0;

  // Unit tangent vectors (frame coordinates at x) of minimal geodesics from
  // x to p; several entries when the minimizer is not unique.
  virtual std::vector<Vec> minimal_directions(const Vec& p, const Vec& x) const = 0;

  virtual Vec exp_point(const Vec& x, const Vec& v_frame) const = 0;
  virtual Vec log_point(const Vec& x, const Vec& y) const = 0;
  // Differential of q -> log_point(center, q), frame coords at q to chart coords.
  virtual Mat log_differential(const Vec& center, const Vec& q) const = 0;
  virtual Vec parallel_transport(const Vec& from, const Vec& to, const Vec& v_frame) const = 0;

  virtual double max_chart_radius() const = 0;
  virtual CoverSpec default_cover() const = 0;

  virtual Vec random_point(Rng& rng) const = 0;

  int antipodal_direction_count = 64;
};

class RoundSphere final : public ModelManifold {
 public:
  explicit RoundSphere(int n) : n_(n) {
    if (n < 1) throw std::invalid_argument("RoundSphere: dimension must be >= 1");
  }

  std::string kind() const override { return "round-sphere"; }
  int dim() const override { return n_; }
  int point_dim() const override { return n_ + 1; }

  double distance(const Vec& x, const Vec& y) const override {
    double c = x.dot(y) / (x.norm() * y.norm());
    return std::acos(std::max(-1.0, std::min(1.0, c)));
  }

  Mat tangent_frame(const Vec& x) const override {
    const int N = n_ + 1;
    Vec p = x / x.norm();
    int skip = 0;
    for (int i = 1; i < N; ++i)
      if (std::abs(p[i]) > std::abs(p[skip])) skip = i;
    Mat frame(N, n_);
    int col = 0;
    for (int j = 0; j < N; ++j) {
      if (j == skip) continue;
      Vec v = Vec::Zero(N);
      v[j] = 1.0;
      v -= v.dot(p) * p;
      for (int c = 0; c < col; ++c) v -= v.dot(frame.col(c)) * frame.col(c);
      frame.col(col++) = v / v.norm();
    }
    return frame;
  }

  std::vector<Vec> minimal_directions(const Vec& p, const Vec& x) const override {
    double theta = distance(p, x);
    if (theta < 1e-12)
      throw std::domain_error("minimal_directions: x equals p");
    Mat frame = tangent_frame(x);
    if (theta > kPi - 1e-9) {
      // antipode: every direction starts a minimal geodesic
      std::vector<Vec> dirs;
      if (n_ == 1) {
        Vec a(1), b(1);
        a << 1.0;
        b << -1.0;
        dirs = {a, b};
      } else if (n_ == 2) {
        dirs.reserve(antipodal_direction_count);
        for (int k = 0; k < antipodal_direction_count; ++k) {
          double phi = 2.0 * kPi * k / antipodal_direction_count;
          Vec d(2);
          d << std::cos(phi), std::sin(phi);
          dirs.push_back(d);
        }
      } else {
        Rng rng(0x5f5e100);
        dirs.reserve(antipodal_direction_count);
        for (int k = 0; k < antipodal_direction_count; ++k) dirs.push_back(rng.unit(n_));
      }
      return dirs;
    }
    Vec px = x / x.norm();
    Vec toward = (p / p.norm() - std::cos(theta) * px) / std::sin(theta);
    return {frame.transpose() * toward};
  }

  Vec exp_point(const Vec& x, const Vec& v_frame) const override {
    Vec p = x / x.norm();
    double r = v_frame.norm();
    if (r < 1e-300) return p;
    Vec t = tangent_frame(x) * (v_frame / r);
    return std::cos(r) * p + std::sin(r) * t;
  }

  Vec log_point(const Vec& x, const Vec& y) const override {
    double theta = distance(x, y);
    if (theta < 1e-14) return Vec::Zero(n_);
    if (theta > kPi - 1e-9)
      throw std::domain_error("log_point: antipodal pair");
    Vec px = x / x.norm();
    Vec w = (y / y.norm() - std::cos(theta) * px) / std::sin(theta);
    return theta * (tangent_frame(x).transpose() * w);
  }

  Mat log_differential(const Vec& center, const Vec& q) const override {
    Mat Ec = tangent_frame(center);
    Mat Fq = tangent_frame(q);
    Vec x = log_point(center, q);
    double r = x.norm();
    if (r < 1e-8) return Ec.transpose() * Fq;
    Vec u = x / r;
    Vec c = center / center.norm();
    Vec udir = Ec * u;
    Vec gdot = -std::sin(r) * c + std::cos(r) * udir;  // geodesic velocity at q
    // radial component passes through; the orthogonal block is scaled by
    // r / sin r (inverse of the sphere Jacobi factor) and is transport-invariant
    Mat proj = Mat::Identity(n_ + 1, n_ + 1) - gdot * gdot.transpose();
    return u * (gdot.transpose() * Fq) +
           (r / std::sin(r)) * (Ec.transpose() * (proj * Fq));
  }

  Vec parallel_transport(const Vec& from, const Vec& to, const Vec& v_frame) const override {
    double theta = distance(from, to);
    Vec a = from / from.norm();
    Vec v = tangent_frame(from) * v_frame;
    if (theta < 1e-12) return tangent_frame(to).transpose() * v;
    if (theta > kPi - 1e-9)
      throw std::domain_error("parallel_transport: antipodal pair");
    Vec b = to / to.norm();
    Vec w = (b - std::cos(theta) * a) / std::sin(theta);       // unit tangent at `from`
    Vec wq = -std::sin(theta) * a + std::cos(theta) * w;       // transported direction
    Vec out = v + v.dot(w) * (wq - w);
    return tangent_frame(to).transpose() * out;
  }

  double max_chart_radius() const override { return kPi - 1e-6; }

  CoverSpec default_cover() const override {
    CoverSpec cover;
    const int N = n_ + 1;
    for (int i = 0; i < N; ++i) {
      Vec e = Vec::Zero(N);
      e[i] = 1.0;
      cover.centers.push_back(e);
      cover.centers.push_back(-e);
    }
    cover.radius = 1.5;
    cover.support_radius = 1.2;
    return cover;
  }

  Vec random_point(Rng& rng) const override { return rng.unit(n_ + 1); }

 private:
  int n_;
};

class FlatTorus final : public ModelManifold {
 public:
  explicit FlatTorus(int n) : n_(n) {
    if (n < 1) throw std::invalid_argument("FlatTorus: dimension must be >= 1");
  }

  std::string kind() const override { return "flat-torus"; }
  int dim() const override { return n_; }
  int point_dim() const override { return n_; }

  static Vec wrap(const Vec& x) {
    Vec y = x;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      y[i] -= std::floor(y[i]);
      if (y[i] >= 1.0) y[i] = 0.0;
    }
    return y;
  }

  double distance(const Vec& x, const Vec& y) const override {
    double s = 0.0;
    for (int i = 0; i < n_; ++i) {
      double d = std::abs(y[i] - x[i]);
      d -= std::floor(d);
      d = std::min(d, 1.0 - d);
      s += d * d;
    }
    return std::sqrt(s);
  }

  Mat tangent_frame(const Vec&) const override { return Mat::Identity(n_, n_); }

  std::vector<Vec> minimal_directions(const Vec& p, const Vec& x) const override {
    // enumerate lattice lifts of p in the +-1 shell around x
    Vec delta0 = wrap(p) - wrap(x);
    std::vector<Vec> offsets;
    int combos = 1;
    for (int i = 0; i < n_; ++i) combos *= 3;
    double best = std::numeric_limits<double>::infinity();
    std::vector<Vec> cands;
    for (int c = 0; c < combos; ++c) {
      Vec off = delta0;
      int rem = c;
      for (int i = 0; i < n_; ++i) {
        off[i] += (rem % 3) - 1;
        rem /= 3;
      }
      double d = off.norm();
      cands.push_back(off);
      best = std::min(best, d);
    }
    if (best < 1e-12) throw std::domain_error("minimal_directions: x equals p");
    std::vector<Vec> dirs;
    for (const Vec& off : cands)
      if (off.norm() <= best + 1e-9) dirs.push_back(off / off.norm());
    return dirs;
  }

  Vec exp_point(const Vec& x, const Vec& v_frame) const override {
    return wrap(x + v_frame);
  }

  Vec log_point(const Vec& x, const Vec& y) const override {
    Vec d = wrap(y) - wrap(x);
    for (int i = 0; i < n_; ++i) d[i] -= std::floor(d[i] + 0.5);
    return d;
  }

  Mat log_differential(const Vec&, const Vec&) const override {
    return Mat::Identity(n_, n_);
  }

  Vec parallel_transport(const Vec&, const Vec&, const Vec& v_frame) const override {
    return v_frame;
  }

  double max_chart_radius() const override { return 0.5 - 1e-9; }

  CoverSpec default_cover() const override {
    CoverSpec cover;
    int combos = 1;
    for (int i = 0; i < n_; ++i) combos *= 3;
    for (int c = 0; c < combos; ++c) {
      Vec center(n_);
      int rem = c;
      for (int i = 0; i < n_; ++i) {
        center[i] = ((rem % 3) + 0.5) / 3.0;
        rem /= 3;
      }
      cover.centers.push_back(center);
    }
    cover.radius = 0.49;
    cover.support_radius = 0.35;
    return cover;
  }

  Vec random_point(Rng& rng) const override {
    Vec p(n_);
    for (int i = 0; i < n_; ++i) p[i] = rng.uniform();
    return p;
  }

 private:
  int n_;
};

struct CritReport {
  Vec point;
  bool critical = false;
  double margin = 0.0;
  std::vector<Vec> directions_used;
  bool angle_test_agrees = true;
};

namespace detail {

inline std::vector<Vec> direction_grid(const ModelManifold& man, int count) {
  std::vector<Vec> grid;
  int n = man.dim();
  if (n == 1) {
    Vec a(1), b(1);
    a << 1.0;
    b << -1.0;
    grid = {a, b};
  } else if (n == 2) {
    grid.reserve(count);
    for (int k = 0; k < count; ++k) {
      double phi = 2.0 * kPi * k / count;
      Vec d(2);
      d << std::cos(phi), std::sin(phi);
      grid.push_back(d);
    }
  } else {
    Rng rng(0xd1ce);
    grid.reserve(2 * count);
    for (int k = 0; k < 2 * count; ++k) grid.push_back(rng.unit(n));
  }
  return grid;
}

}  // namespace detail

// Criticality of d_p at x in the Clarke sense. The gradient samples of d_p
// are the reversed minimal directions; the margin is the distance from the
// origin to their hull. The Grove-Shiohama angle form is evaluated on a
// direction grid as an independent classification.
inline CritReport gs_critical(const ModelManifold& man, const Vec& p, const Vec& x,
                              double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("gs_critical: tol must be positive");
  std::vector<Vec> toward = man.minimal_directions(p, x);
  std::vector<Vec> grads;
  grads.reserve(toward.size());
  for (const Vec& d : toward) grads.push_back(-d);

  CritReport rep;
  rep.point = x;
  rep.directions_used = toward;
  MinNormResult res = min_norm_in_hull(grads, std::max(1e-9, tol / 10.0));
  rep.margin = res.distance;
  rep.critical = rep.margin <= tol;

  // angle form: non-critical iff some direction makes an obtuse angle with
  // every minimal geodesic
  double best = -std::numeric_limits<double>::infinity();
  for (const Vec& v : detail::direction_grid(man, 64)) {
    double closest = -std::numeric_limits<double>::infinity();
    for (const Vec& d : toward) closest = std::max(closest, v.dot(d));
    best = std::max(best, -closest);
  }
  bool angle_critical = best <= tol;
  rep.angle_test_agrees = (angle_critical == rep.critical);
  return rep;
}

inline std::vector<CritReport> crit_scan(const ModelManifold& man, const Vec& p,
                                         const std::vector<Vec>& grid, double tol) {
  std::vector<CritReport> all(grid.size());
  std::vector<char> keep(grid.size(), 0);
  parallel_for(grid.size(), [&](std::size_t i) {
    if (man.distance(p, grid[i]) <= 10.0 * tol) return;
    all[i] = gs_critical(man, p, grid[i], tol);
    keep[i] = all[i].critical ? 1 : 0;
  });
  std::vector<CritReport> hits;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (keep[i]) hits.push_back(std::move(all[i]));
  return hits;
}

struct BisectorSample {
  std::vector<Vec> points;
  double tol = 0.0;
};

inline BisectorSample bisector_sample(const ModelManifold& man, const Vec& p,
                                      const Vec& q, const std::vector<Vec>& grid,
                                      double tol) {
  if (man.distance(p, q) < 1e-12)
    throw std::domain_error("bisector_sample: p and q coincide");
  BisectorSample out;
  out.tol = tol;
  for (const Vec& x : grid)
    if (std::abs(man.distance(p, x) - man.distance(q, x)) <= tol)
      out.points.push_back(x);
  return out;
}

struct TwistedConditions {
  bool cond_18 = false;
  bool cond_19 = false;
  double worst_angle = 0.0;
  std::vector<Vec> witnesses_18;
  std::vector<Vec> witnesses_19;
  bool bisector_empty = false;
};

// Hypotheses of the twisted-sphere construction: no critical points of d_p
// strictly inside its domain half (and symmetrically for q), and obtuse
// angles between the geodesic directions to p and to q on the bisector.
inline TwistedConditions twisted_conditions_check(const ModelManifold& man,
                                                  const Vec& p, const Vec& q,
                                                  const std::vector<Vec>& grid,
                                                  double tol) {
  if (man.distance(p, q) < 1e-12)
    throw std::domain_error("twisted_conditions_check: p and q coincide");
  TwistedConditions out;

  std::vector<Vec> dom_p, dom_q;
  for (const Vec& x : grid) {
    double dp = man.distance(p, x), dq = man.distance(q, x);
    if (dp < dq) dom_p.push_back(x);
    else if (dq < dp) dom_q.push_back(x);
  }
  for (const CritReport& r : crit_scan(man, p, dom_p, tol))
    out.witnesses_18.push_back(r.point);
  for (const CritReport& r : crit_scan(man, q, dom_q, tol))
    out.witnesses_18.push_back(r.point);
  out.cond_18 = out.witnesses_18.empty();

  BisectorSample bis = bisector_sample(man, p, q, grid, tol);
  out.bisector_empty = bis.points.empty();
  double worst = kPi;
  for (const Vec& x : bis.points) {
    auto to_p = man.minimal_directions(p, x);
    auto to_q = man.minimal_directions(q, x);
    for (const Vec& a : to_p)
      for (const Vec& b : to_q) {
        double ang = angle(a, b);
        if (ang < worst) worst = ang;
        if (!(ang > kPi / 2.0)) out.witnesses_19.push_back(x);
      }
  }
  out.worst_angle = worst;
  out.cond_19 = !out.bisector_empty && out.witnesses_19.empty();
  if (out.bisector_empty) out.cond_19 = true;
  return out;
}

// Uniform grid over the torus, k points per axis.
inline std::vector<Vec> torus_grid(const FlatTorus& man, int per_axis) {
  int n = man.dim();
  long total = 1;
  for (int i = 0; i < n; ++i) total *= per_axis;
  std::vector<Vec> grid;
  grid.reserve(total);
  for (long c = 0; c < total; ++c) {
    Vec x(n);
    long rem = c;
    for (int i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rem % per_axis) / per_axis;
      rem /= per_axis;
    }
    grid.push_back(x);
  }
  return grid;
}

// Geodesic-polar grid on S^2 (latitude rows, longitude columns), poles included.
inline std::vector<Vec> sphere_polar_grid(int per_axis) {
  std::vector<Vec> grid;
  grid.reserve(static_cast<std::size_t>(per_axis) * per_axis + 2);
  Vec north(3), south(3);
  north << 0, 0, 1;
  south << 0, 0, -1;
  grid.push_back(north);
  grid.push_back(south);
  for (int i = 1; i < per_axis; ++i) {
    double theta = kPi * i / per_axis;
    for (int j = 0; j < per_axis; ++j) {
      double phi = 2.0 * kPi * j / per_axis;
      Vec x(3);
      x << std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
          std::cos(theta);
      grid.push_back(x);
    }
  }
  return grid;
}

// Band around the S^2 equator: |latitude| <= half_width (radians).
inline std::vector<Vec> sphere_band_grid(double half_width, int lon_count, int lat_count) {
  std::vector<Vec> grid;
  grid.reserve(static_cast<std::size_t>(lon_count) * lat_count);
  for (int i = 0; i < lat_count; ++i) {
    double lat = lat_count == 1 ? 0.0 : -half_width + 2.0 * half_width * i / (lat_count - 1);
    for (int j = 0; j < lon_count; ++j) {
      double phi = 2.0 * kPi * j / lon_count;
      Vec x(3);
      x << std::cos(lat) * std::cos(phi), std::cos(lat) * std::sin(phi), std::sin(lat);
      grid.push_back(x);
    }
  }
  return grid;
}

}  // namespace nsg
