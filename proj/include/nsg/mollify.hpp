#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsg/clarke.hpp"
#include "nsg/geometry.hpp"
#include "nsg/manifolds.hpp"
#include "nsg/parallel.hpp"
#include "nsg/rng.hpp"

namespace nsg {

namespace quadr {

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    w[n - 1 - i] = w[i];
  }
}

inline double unit_sphere_area(int n) {  // area of S^{n-1} in R^n
  if (n == 1) return 2.0;
  return 2.0 * std::pow(kPi, n / 2.0) / std::tgamma(n / 2.0);
}

inline double bump_profile(double r) {  // unnormalized, support r < 1
  if (r >= 1.0) return 0.0;
  return std::exp(1.0 / (r * r - 1.0));
}

inline double bump_profile_derivative(double r) {
  if (r >= 1.0) return 0.0;
  double denom = r * r - 1.0;
  return bump_profile(r) * (-2.0 * r / (denom * denom));
}

// integral of bump_profile(r) r^{n-1} over (0, 1), machine accurate
inline double radial_bump_integral(int n) {
  std::vector<double> x, w;
  gauss_legendre(200, x, w);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double r = 0.5 * (x[i] + 1.0);
    s += 0.5 * w[i] * bump_profile(r) * std::pow(r, n - 1);
  }
  return s;
}

}  // namespace quadr

// Smooth bump supported in the closed epsilon-ball with unit integral.
struct Mollifier {
  double epsilon = 0.0;
  int dimension = 0;
  double normalizer = 0.0;  // rho_eps(y) = normalizer * exp(1/((|y|/eps)^2 - 1))
};

inline Mollifier make_mollifier(double epsilon, int dimension) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("make_mollifier: epsilon must be positive");
  if (dimension < 1) throw std::invalid_argument("make_mollifier: dimension must be >= 1");
  Mollifier m;
  m.epsilon = epsilon;
  m.dimension = dimension;
  double mass = quadr::unit_sphere_area(dimension) * quadr::radial_bump_integral(dimension);
  m.normalizer = 1.0 / (mass * std::pow(epsilon, dimension));
  return m;
}

inline double mollifier_density(const Mollifier& m, const Vec& y) {
  double r = y.norm() / m.epsilon;
  if (r >= 1.0) return 0.0;
  return m.normalizer * quadr::bump_profile(r);
}

// Quadrature nodes over the unit ball plus cached mollifier weights. The
// cached weights are rescaled so the rule applied to the density is exactly
// one, which makes smoothing of constants exact.
struct QuadratureRule {
  enum class Kind { gauss, monte_carlo };
  Kind kind = Kind::gauss;
  int dimension = 0;
  std::vector<Vec> nodes;            // points of the closed unit ball
  std::vector<double> weights;       // plain dy weights
  std::vector<double> wdensity;      // weights * rho_hat(node), rescaled, sum = 1
  std::vector<Vec> wdgrad;           // weights * rho_hat'(|node|) * node/|node|, same rescale
  std::uint64_t seed = 0;
};

namespace quadr {

inline double rho_hat_normalizer(int n) {
  return 1.0 / (unit_sphere_area(n) * radial_bump_integral(n));
}

inline void finalize_rule(QuadratureRule& rule) {
  const int n = rule.dimension;
  const double c1 = rho_hat_normalizer(n);
  const std::size_t m = rule.nodes.size();
  rule.wdensity.resize(m);
  rule.wdgrad.resize(m);
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double r = rule.nodes[j].norm();
    rule.wdensity[j] = rule.weights[j] * c1 * bump_profile(r);
    Vec dir = r > 1e-300 ? Vec(rule.nodes[j] / r) : Vec(Vec::Zero(n));
    rule.wdgrad[j] = rule.weights[j] * c1 * bump_profile_derivative(r) * dir;
    total += rule.wdensity[j];
  }
  for (std::size_t j = 0; j < m; ++j) {
    rule.wdensity[j] /= total;
    rule.wdgrad[j] /= total;
  }
}

}  // namespace quadr

// Product Gauss rule in polar form; the radial factor carries the bump's
// boundary flatness, which plain tensor grids resolve poorly.
inline QuadratureRule make_gauss_rule(int dimension) {
  if (dimension < 1 || dimension > 3)
    throw std::invalid_argument("make_gauss_rule: gauss rule covers dimensions 1-3");
  QuadratureRule rule;
  rule.kind = QuadratureRule::Kind::gauss;
  rule.dimension = dimension;

  std::vector<double> xr, wr;
  quadr::gauss_legendre(48, xr, wr);
  std::vector<double> r(xr.size()), rw(xr.size());
  for (std::size_t i = 0; i < xr.size(); ++i) {
    r[i] = 0.5 * (xr[i] + 1.0);
    rw[i] = 0.5 * wr[i];
  }

  if (dimension == 1) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      for (double sgn : {-1.0, 1.0}) {
        Vec z(1);
        z << sgn * r[i];
        rule.nodes.push_back(z);
        rule.weights.push_back(rw[i]);
      }
    }
  } else if (dimension == 2) {
    const int na = 64;
    for (std::size_t i = 0; i < r.size(); ++i) {
      for (int k = 0; k < na; ++k) {
        double phi = 2.0 * kPi * (k + 0.5) / na;
        Vec z(2);
        z << r[i] * std::cos(phi), r[i] * std::sin(phi);
        rule.nodes.push_back(z);
        rule.weights.push_back(rw[i] * r[i] * 2.0 * kPi / na);
      }
    }
  } else {
    std::vector<double> xc, wc;
    quadr::gauss_legendre(24, xc, wc);
    const int np = 48;
    for (std::size_t i = 0; i < r.size(); ++i) {
      for (std::size_t c = 0; c < xc.size(); ++c) {
        double u = xc[c];
        double s = std::sqrt(std::max(0.0, 1.0 - u * u));
        for (int k = 0; k < np; ++k) {
          double phi = 2.0 * kPi * (k + 0.5) / np;
          Vec z(3);
          z << r[i] * s * std::cos(phi), r[i] * s * std::sin(phi), r[i] * u;
          rule.nodes.push_back(z);
          rule.weights.push_back(rw[i] * r[i] * r[i] * wc[c] * 2.0 * kPi / np);
        }
      }
    }
  }
  quadr::finalize_rule(rule);
  return rule;
}

// Seeded Monte Carlo rule drawing nodes from the mollifier distribution
// itself (inverse-CDF radius, uniform direction).
inline QuadratureRule make_monte_carlo_rule(int dimension, int count = 200000,
                                            std::uint64_t seed = 0) {
  if (dimension < 1 || dimension > 5)
    throw std::invalid_argument("make_monte_carlo_rule: dimensions above 5 are rejected");
  if (count < 1) throw std::invalid_argument("make_monte_carlo_rule: count < 1");
  QuadratureRule rule;
  rule.kind = QuadratureRule::Kind::monte_carlo;
  rule.dimension = dimension;
  rule.seed = seed;

  // radial CDF table of rho_hat(r) r^{n-1} S_{n-1}
  const int table = 4096;
  std::vector<double> cdf(table + 1, 0.0);
  double h = 1.0 / table;
  double acc = 0.0;
  double prev = 0.0;
  for (int i = 1; i <= table; ++i) {
    double ri = i * h;
    double fi = quadr::bump_profile(ri) * std::pow(ri, dimension - 1);
    acc += 0.5 * h * (prev + fi);
    prev = fi;
    cdf[i] = acc;
  }
  for (double& v : cdf) v /= acc;

  auto radius_from = [&](double u) {
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    int hi = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), table));
    int lo = hi - 1;
    double span = cdf[hi] - cdf[lo];
    double frac = span > 0 ? (u - cdf[lo]) / span : 0.0;
    return (lo + frac) * h;
  };

  const double c1 = quadr::rho_hat_normalizer(dimension);
  rule.nodes.reserve(count);
  rule.weights.reserve(count);
  for (int j = 0; j < count; ++j) {
    Rng rng = Rng::derived(seed, static_cast<std::uint64_t>(j));
    double r = std::max(1e-9, radius_from(rng.uniform()));
    Vec z = r * rng.unit(dimension);
    rule.nodes.push_back(z);
    rule.weights.push_back(1.0 / (count * c1 * quadr::bump_profile(r)));
  }
  quadr::finalize_rule(rule);
  return rule;
}

// Raw application of the rule to the (unit) mollifier density; should be 1.
inline double integrate_unit_density(const QuadratureRule& rule) {
  const double c1 = quadr::rho_hat_normalizer(rule.dimension);
  double s = 0.0;
  for (std::size_t j = 0; j < rule.nodes.size(); ++j)
    s += rule.weights[j] * c1 * quadr::bump_profile(rule.nodes[j].norm());
  return s;
}

// Exponential chart around a center; tangent coordinates are frame
// coordinates at the center. support_radius < radius leaves the margin that
// keeps mollification inside the chart.
struct Chart {
  const ModelManifold* man = nullptr;
  Vec center;
  double radius = 0.0;
  double support_radius = 0.0;
  double exp_lip = 1.0;

  Vec exp(const Vec& x) const { return man->exp_point(center, x); }
  Vec log(const Vec& q) const { return man->log_point(center, q); }
  Mat log_diff(const Vec& q) const { return man->log_differential(center, q); }
};

inline Chart make_chart(const ModelManifold& man, const Vec& center, double radius,
                        double support_radius, double exp_lip = 1.0) {
  if (!(radius > 0.0) || radius > man.max_chart_radius())
    throw std::invalid_argument("make_chart: radius outside (0, max chart radius]");
  if (!(support_radius > 0.0) || !(support_radius < radius))
    throw std::invalid_argument("make_chart: need 0 < support_radius < radius");
  Chart c;
  c.man = &man;
  c.center = center;
  c.radius = radius;
  c.support_radius = support_radius;
  c.exp_lip = exp_lip;
  return c;
}

// Normalized smooth radial bumps subordinate to the chart cover.
struct PartitionOfUnity {
  const ModelManifold* man = nullptr;
  std::vector<Chart> charts;

  // raw bump and its radial derivative
  static double bump(double d, double s) {
    if (d >= s) return 0.0;
    double t = d / s;
    return std::exp(1.0 - 1.0 / (1.0 - t * t));
  }
  static double bump_ddist(double d, double s) {
    if (d >= s) return 0.0;
    double t = d / s;
    double denom = 1.0 - t * t;
    return bump(d, s) * (-2.0 * t / (denom * denom)) / s;
  }

  std::vector<double> values(const Vec& q) const {
    std::vector<double> psi(charts.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < charts.size(); ++i) {
      double d = man->distance(charts[i].center, q);
      psi[i] = bump(d, charts[i].support_radius);
      total += psi[i];
    }
    if (total > 0.0)
      for (double& v : psi) v /= total;
    return psi;
  }

  // psi_i and their gradients in frame coordinates at q
  void values_and_gradients(const Vec& q, std::vector<double>& psi,
                            std::vector<Vec>& grad) const {
    const std::size_t m = charts.size();
    const int n = man->dim();
    std::vector<double> b(m, 0.0);
    std::vector<Vec> db(m, Vec::Zero(n));
    double total = 0.0;
    Vec dtotal = Vec::Zero(n);
    for (std::size_t i = 0; i < m; ++i) {
      double d = man->distance(charts[i].center, q);
      b[i] = bump(d, charts[i].support_radius);
      if (b[i] > 0.0 && d > 1e-12) {
        // gradient of the distance to the center: away-pointing unit vector
        Vec away = -man->minimal_directions(charts[i].center, q)[0];
        db[i] = bump_ddist(d, charts[i].support_radius) * away;
      }
      total += b[i];
      dtotal += db[i];
    }
    psi.assign(m, 0.0);
    grad.assign(m, Vec::Zero(n));
    if (total <= 0.0) return;
    for (std::size_t i = 0; i < m; ++i) {
      psi[i] = b[i] / total;
      grad[i] = (db[i] - psi[i] * dtotal) / total;
    }
  }
};

inline PartitionOfUnity make_partition(const ModelManifold& man,
                                       const std::vector<Vec>& centers, double radius,
                                       double support_radius, double exp_lip = 1.0) {
  PartitionOfUnity pou;
  pou.man = &man;
  for (const Vec& c : centers)
    pou.charts.push_back(make_chart(man, c, radius, support_radius, exp_lip));
  return pou;
}

inline PartitionOfUnity make_partition(const ModelManifold& man, const CoverSpec& spec) {
  return make_partition(man, spec.centers, spec.radius, spec.support_radius);
}

struct ManifoldFunction {
  std::function<double(const Vec&)> eval;
  double lip = 1.0;
};

struct ManifoldMap {
  std::function<Vec(const Vec&)> eval;
  int target_dim = 1;
  double lip = 1.0;
};

namespace detail {

inline void check_margins(const PartitionOfUnity& pou, double epsilon) {
  for (std::size_t i = 0; i < pou.charts.size(); ++i) {
    double margin = pou.charts[i].radius - pou.charts[i].support_radius;
    if (!(epsilon < margin))
      throw std::domain_error("smoothing: epsilon " + std::to_string(epsilon) +
                              " too large for chart " + std::to_string(i) +
                              " (margin " + std::to_string(margin) + ")");
  }
}

}  // namespace detail

// Chart-wise mollification glued by the partition of unity:
//   f_eps(q) = sum_i psi_i(q) * Int f(exp_i(log_i q - y)) rho_eps(y) dy.
struct SmoothedFunction {
  ManifoldFunction source;
  PartitionOfUnity pou;
  double epsilon = 0.0;
  QuadratureRule quad;
  Mollifier moll;
};

inline SmoothedFunction smooth_function(const ManifoldFunction& f,
                                        const PartitionOfUnity& pou, double epsilon,
                                        const QuadratureRule& quad) {
  if (quad.dimension != pou.man->dim())
    throw std::invalid_argument("smooth_function: quadrature dimension mismatch");
  detail::check_margins(pou, epsilon);
  SmoothedFunction sf;
  sf.source = f;
  sf.pou = pou;
  sf.epsilon = epsilon;
  sf.quad = quad;
  sf.moll = make_mollifier(epsilon, quad.dimension);
  return sf;
}

namespace detail {

inline double local_average(const SmoothedFunction& sf, const Chart& chart, const Vec& x) {
  double acc = 0.0;
  for (std::size_t j = 0; j < sf.quad.nodes.size(); ++j)
    acc += sf.quad.wdensity[j] *
           sf.source.eval(chart.exp(x - sf.epsilon * sf.quad.nodes[j]));
  return acc;
}

inline Vec local_average_gradient(const SmoothedFunction& sf, const Chart& chart,
                                  const Vec& x) {
  Vec acc = Vec::Zero(sf.quad.dimension);
  for (std::size_t j = 0; j < sf.quad.nodes.size(); ++j)
    acc += sf.quad.wdgrad[j] *
           sf.source.eval(chart.exp(x - sf.epsilon * sf.quad.nodes[j]));
  return acc / sf.epsilon;
}

}  // namespace detail

inline double evaluate(const SmoothedFunction& sf, const Vec& q) {
  std::vector<double> psi = sf.pou.values(q);
  double total = 0.0;
  for (double v : psi) total += v;
  if (!(total > 0.5))
    throw std::domain_error("evaluate: point outside the covered region");
  double out = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    if (psi[i] <= 0.0) continue;
    Vec x = sf.pou.charts[i].log(q);
    out += psi[i] * detail::local_average(sf, sf.pou.charts[i], x);
  }
  return out;
}

// Gradient in frame coordinates at q: differentiation under the quadrature
// (derivative of rho) plus the product rule over the partition.
inline Vec smoothed_gradient(const SmoothedFunction& sf, const Vec& q) {
  std::vector<double> psi;
  std::vector<Vec> dpsi;
  sf.pou.values_and_gradients(q, psi, dpsi);
  double total = 0.0;
  for (double v : psi) total += v;
  if (!(total > 0.5))
    throw std::domain_error("smoothed_gradient: point outside the covered region");
  Vec out = Vec::Zero(sf.pou.man->dim());
  for (std::size_t i = 0; i < psi.size(); ++i) {
    bool active = psi[i] > 0.0 || dpsi[i].norm() > 0.0;
    if (!active) continue;
    const Chart& chart = sf.pou.charts[i];
    Vec x = chart.log(q);
    double gi = detail::local_average(sf, chart, x);
    out += gi * dpsi[i];
    if (psi[i] > 0.0) {
      Vec grad_chart = detail::local_average_gradient(sf, chart, x);
      out += psi[i] * (chart.log_diff(q).transpose() * grad_chart);
    }
  }
  return out;
}

struct SupErrorReport {
  double max_abs_err = 0.0;
  double bound = 0.0;
  bool holds = false;
};

inline SupErrorReport sup_error_report(const SmoothedFunction& sf,
                                       const ManifoldFunction& f,
                                       const std::vector<Vec>& grid) {
  std::vector<double> errs(grid.size(), 0.0), bounds(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t i) {
    const Vec& q = grid[i];
    errs[i] = std::abs(evaluate(sf, q) - f.eval(q));
    std::vector<double> psi = sf.pou.values(q);
    double locallip = 0.0;
    for (std::size_t c = 0; c < psi.size(); ++c)
      locallip += psi[c] * sf.pou.charts[c].exp_lip;
    bounds[i] = sf.epsilon * f.lip * locallip;
  });
  SupErrorReport rep;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    rep.max_abs_err = std::max(rep.max_abs_err, errs[i]);
    rep.bound = std::max(rep.bound, bounds[i]);
  }
  rep.holds = rep.max_abs_err <= rep.bound + 1e-9;
  return rep;
}

struct SmoothedMap {
  ManifoldMap source;
  PartitionOfUnity pou;
  double epsilon = 0.0;
  QuadratureRule quad;
};

inline SmoothedMap smooth_map(const ManifoldMap& F, const PartitionOfUnity& pou,
                              double epsilon, const QuadratureRule& quad) {
  if (quad.dimension != pou.man->dim())
    throw std::invalid_argument("smooth_map: quadrature dimension mismatch");
  detail::check_margins(pou, epsilon);
  return SmoothedMap{F, pou, epsilon, quad};
}

inline Vec evaluate(const SmoothedMap& smF, const Vec& q) {
  std::vector<double> psi = smF.pou.values(q);
  double total = 0.0;
  for (double v : psi) total += v;
  if (!(total > 0.5))
    throw std::domain_error("evaluate: point outside the covered region");
  Vec out = Vec::Zero(smF.source.target_dim);
  for (std::size_t i = 0; i < psi.size(); ++i) {
    if (psi[i] <= 0.0) continue;
    const Chart& chart = smF.pou.charts[i];
    Vec x = chart.log(q);
    Vec acc = Vec::Zero(smF.source.target_dim);
    for (std::size_t j = 0; j < smF.quad.nodes.size(); ++j)
      acc += smF.quad.wdensity[j] *
             smF.source.eval(chart.exp(x - smF.epsilon * smF.quad.nodes[j]));
    out += psi[i] * acc;
  }
  return out;
}

// m x dim Jacobian in frame coordinates at q.
inline Mat jacobian(const SmoothedMap& smF, const Vec& q) {
  std::vector<double> psi;
  std::vector<Vec> dpsi;
  smF.pou.values_and_gradients(q, psi, dpsi);
  double total = 0.0;
  for (double v : psi) total += v;
  if (!(total > 0.5))
    throw std::domain_error("jacobian: point outside the covered region");
  const int m = smF.source.target_dim;
  const int n = smF.pou.man->dim();
  Mat out = Mat::Zero(m, n);
  for (std::size_t i = 0; i < psi.size(); ++i) {
    bool active = psi[i] > 0.0 || dpsi[i].norm() > 0.0;
    if (!active) continue;
    const Chart& chart = smF.pou.charts[i];
    Vec x = chart.log(q);
    Vec gi = Vec::Zero(m);
    Mat gchart = Mat::Zero(m, n);
    for (std::size_t j = 0; j < smF.quad.nodes.size(); ++j) {
      Vec val = smF.source.eval(chart.exp(x - smF.epsilon * smF.quad.nodes[j]));
      gi += smF.quad.wdensity[j] * val;
      gchart += val * smF.quad.wdgrad[j].transpose();
    }
    gchart /= smF.epsilon;
    out += gi * dpsi[i].transpose();
    if (psi[i] > 0.0) out += psi[i] * (gchart * chart.log_diff(q));
  }
  return out;
}

// Map-valued analogue of the sup-error bound: |F_eps - F| <= eps * Lip(F)
// weighted by the chart Lipschitz constants under the partition.
inline SupErrorReport sup_error_report(const SmoothedMap& smF, const ManifoldMap& F,
                                       const std::vector<Vec>& grid) {
  std::vector<double> errs(grid.size(), 0.0), bounds(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t i) {
    const Vec& q = grid[i];
    errs[i] = (evaluate(smF, q) - F.eval(q)).norm();
    std::vector<double> psi = smF.pou.values(q);
    double locallip = 0.0;
    for (std::size_t c = 0; c < psi.size(); ++c)
      locallip += psi[c] * smF.pou.charts[c].exp_lip;
    bounds[i] = smF.epsilon * F.lip * locallip;
  });
  SupErrorReport rep;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    rep.max_abs_err = std::max(rep.max_abs_err, errs[i]);
    rep.bound = std::max(rep.bound, bounds[i]);
  }
  rep.holds = rep.max_abs_err <= rep.bound + 1e-9;
  return rep;
}

struct LipschitzReport {
  double sup_directional = 0.0;
  double bound = 0.0;
  bool holds = false;
};

inline LipschitzReport lipschitz_report(const SmoothedMap& smF,
                                        const std::vector<Vec>& grid, double eta) {
  std::vector<double> sups(grid.size(), 0.0);
  parallel_for(grid.size(), [&](std::size_t i) {
    Eigen::JacobiSVD<Mat> svd(jacobian(smF, grid[i]));
    sups[i] = svd.singularValues().maxCoeff();
  });
  LipschitzReport rep;
  for (double s : sups) rep.sup_directional = std::max(rep.sup_directional, s);
  rep.bound = (1.0 + eta) * smF.source.lip;
  rep.holds = rep.sup_directional <= rep.bound;
  return rep;
}

// Immersion lower bound: for each direction u with a half-space certificate
// (V(u), delta(u)) of the sampled differential at p, the smoothed
// differential keeps <dF_eps(u), V(u)> positive on a ball around p.
inline double immersion_margin(const SmoothedMap& smF, const Vec& p, double r,
                               const std::vector<Vec>& direction_grid,
                               std::uint64_t seed = 2024) {
  const ModelManifold& man = *smF.pou.man;
  const int n = man.dim();
  if (direction_grid.empty())
    throw std::invalid_argument("immersion_margin: empty direction grid");

  // generalized differential of the map read through the chart at p
  LipschitzMapOracle local;
  local.eval = [&](const Vec& x) { return smF.source.eval(man.exp_point(p, x)); };
  local.lip_bound = smF.source.lip;
  const double h = 1e-6;
  local.jacobian_ae = [&, h](const Vec& x) -> std::optional<Mat> {
    Mat J(smF.source.target_dim, n);
    for (int c = 0; c < n; ++c) {
      Vec dx = Vec::Zero(n);
      dx[c] = h;
      J.col(c) = (local.eval(x + dx) - local.eval(x - dx)) / (2.0 * h);
    }
    return J;
  };
  SampleConfig cfg;
  cfg.radii = {r / 5.0, r / 50.0};
  cfg.per_radius = 64;
  cfg.seed = seed;
  GeneralizedDifferential gd = sample_generalized_differential(local, Vec::Zero(n), cfg);
  if (nonsingularity_margin(gd, 2000, seed) <= 1e-6)
    throw std::domain_error("immersion_margin: non-singularity certificate missing");

  std::vector<Vec> certs(direction_grid.size());
  for (std::size_t i = 0; i < direction_grid.size(); ++i) {
    ConeCertificate cert = cone_certificate(gd, UnitVector(direction_grid[i]));
    if (!(cert.delta > 0.0))
      throw std::domain_error("immersion_margin: non-singularity certificate missing");
    certs[i] = cert.direction;
  }

  // points of the ball around p, including p itself
  std::vector<Vec> qs;
  qs.push_back(p);
  Rng rng(seed ^ 0xba11u);
  for (int k = 0; k < 200; ++k) qs.push_back(man.exp_point(p, r * rng.in_unit_ball(n)));

  double margin = std::numeric_limits<double>::infinity();
  std::vector<double> local_min(qs.size(), std::numeric_limits<double>::infinity());
  parallel_for(qs.size(), [&](std::size_t k) {
    Mat J = jacobian(smF, qs[k]);
    for (std::size_t i = 0; i < direction_grid.size(); ++i) {
      Vec u_here = man.parallel_transport(p, qs[k], direction_grid[i]);
      local_min[k] = std::min(local_min[k], certs[i].dot(J * u_here));
    }
  });
  for (double v : local_min) margin = std::min(margin, v);
  return margin;
}

inline std::vector<Vec> zero_level_scan(const SmoothedFunction& sf,
                                        const std::vector<Vec>& grid, double tol) {
  std::vector<char> keep(grid.size(), 0);
  parallel_for(grid.size(), [&](std::size_t i) {
    keep[i] = std::abs(evaluate(sf, grid[i])) <= tol ? 1 : 0;
  });
  std::vector<Vec> out;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (keep[i]) out.push_back(grid[i]);
  return out;
}

struct ObtuseReport {
  double min_angle = 0.0;
  bool holds = false;
};

// Smooths d_p and d_q over the manifold's default cover and checks that
// their gradients stay obtuse on K, after verifying the geodesic-angle
// hypothesis pointwise.
inline ObtuseReport obtuse_gradient_report(const ModelManifold& man, const Vec& p,
                                           const Vec& q, const std::vector<Vec>& K_grid,
                                           double epsilon) {
  if (man.distance(p, q) < 1e-12)
    throw std::domain_error("obtuse_gradient_report: hypothesis degenerate (p = q)");
  for (const Vec& x : K_grid) {
    if (man.distance(p, x) < 1e-9 || man.distance(q, x) < 1e-9)
      throw std::domain_error("obtuse_gradient_report: K touches p or q");
    for (const Vec& a : man.minimal_directions(p, x))
      for (const Vec& b : man.minimal_directions(q, x))
        if (!(angle(a, b) > kPi / 2.0)) {
          std::string msg = "obtuse_gradient_report: hypothesis fails at (";
          for (Eigen::Index c = 0; c < x.size(); ++c)
            msg += (c ? "," : "") + std::to_string(x[c]);
          throw std::domain_error(msg + ")");
        }
  }

  PartitionOfUnity pou = make_partition(man, man.default_cover());
  QuadratureRule quad = make_gauss_rule(man.dim());
  ManifoldFunction dp{[&man, p](const Vec& x) { return man.distance(p, x); }, 1.0};
  ManifoldFunction dq{[&man, q](const Vec& x) { return man.distance(q, x); }, 1.0};
  SmoothedFunction sp = smooth_function(dp, pou, epsilon, quad);
  SmoothedFunction sq = smooth_function(dq, pou, epsilon, quad);

  std::vector<double> angles(K_grid.size(), kPi);
  parallel_for(K_grid.size(), [&](std::size_t i) {
    angles[i] = angle(smoothed_gradient(sp, K_grid[i]), smoothed_gradient(sq, K_grid[i]));
  });
  ObtuseReport rep;
  rep.min_angle = kPi;
  for (double a : angles) rep.min_angle = std::min(rep.min_angle, a);
  rep.holds = rep.min_angle > kPi / 2.0;
  return rep;
}

// Distance projection onto the unit sphere, defined on the tubular
// neighborhood |x| > 1/2.
inline UnitVector project_to_sphere(const Vec& x) {
  if (!(x.norm() > 0.5))
    throw std::domain_error("project_to_sphere: outside tubular neighborhood");
  return UnitVector(x);
}

}  // namespace nsg
