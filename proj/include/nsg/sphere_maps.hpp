#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsg/geometry.hpp"
#include "nsg/matrix_hull.hpp"
#include "nsg/parallel.hpp"
#include "nsg/rng.hpp"

namespace nsg {

// Odd smooth profile driving the latitude twist; defaults to z.
struct TwistProfile {
  std::function<double(double)> f = [](double z) { return z; };
  std::function<double(double)> df = [](double) { return 1.0; };
  std::function<double(double)> d2f = [](double) { return 0.0; };
};

// Smooth self-map of S^{n-1} from one of four parametric families.
// Derivatives are analytic where closed forms exist, otherwise central
// differences of the 0-homogeneous extension with step fd_step (projected to
// the tangent space of the image point).
struct SphereMap {
  enum class Family { identity, rotation, latitude_twist, normalized_perturbation };

  Family family = Family::identity;
  int ambient_dim = 3;
  Mat rotation_matrix;
  double amplitude = 0.0;
  TwistProfile profile;
  std::function<Vec(const Vec&)> field;  // tangent field for perturbations
  double fd_step = kPi / 512.0;

  static SphereMap identity(int n) {
    if (n < 2) throw std::invalid_argument("SphereMap: ambient dimension must be >= 2");
    SphereMap s;
    s.family = Family::identity;
    s.ambient_dim = n;
    return s;
  }

  static SphereMap rotation(const Mat& Q) {
    if (Q.rows() != Q.cols() || Q.rows() < 2)
      throw std::invalid_argument("SphereMap::rotation: need a square matrix");
    if ((Q.transpose() * Q - Mat::Identity(Q.rows(), Q.cols())).norm() > 1e-10)
      throw std::invalid_argument("SphereMap::rotation: matrix is not orthogonal");
    SphereMap s;
    s.family = Family::rotation;
    s.ambient_dim = static_cast<int>(Q.rows());
    s.rotation_matrix = Q;
    return s;
  }

  // Rotates the (e1, e2) plane by angle amplitude * profile(v_n).
  static SphereMap latitude_twist(int n, double amplitude, TwistProfile profile = {}) {
    if (n < 3)
      throw std::invalid_argument("SphereMap::latitude_twist: needs ambient dimension >= 3");
    SphereMap s;
    s.family = Family::latitude_twist;
    s.ambient_dim = n;
    s.amplitude = amplitude;
    s.profile = std::move(profile);
    return s;
  }

  static SphereMap normalized_perturbation(int n, std::function<Vec(const Vec&)> field,
                                           double amplitude, double h = kPi / 512.0) {
    if (n < 2) throw std::invalid_argument("SphereMap: ambient dimension must be >= 2");
    SphereMap s;
    s.family = Family::normalized_perturbation;
    s.ambient_dim = n;
    s.amplitude = amplitude;
    s.field = std::move(field);
    s.fd_step = h;
    return s;
  }

  bool has_analytic_differential() const {
    return family != Family::normalized_perturbation;
  }

  std::string family_name() const {
    switch (family) {
      case Family::identity: return "identity";
      case Family::rotation: return "rotation";
      case Family::latitude_twist: return "latitude-twist";
      case Family::normalized_perturbation: return "normalized-perturbation";
    }
    return "?";
  }

  Vec eval(const Vec& v) const {
    switch (family) {
      case Family::identity:
        return v;
      case Family::rotation:
        return rotation_matrix * v;
      case Family::latitude_twist: {
        double theta = amplitude * profile.f(v[ambient_dim - 1]);
        Vec out = v;
        double c = std::cos(theta), s = std::sin(theta);
        out[0] = c * v[0] - s * v[1];
        out[1] = s * v[0] + c * v[1];
        return out;
      }
      case Family::normalized_perturbation: {
        Vec x = field(v);
        x -= x.dot(v) * v;  // keep the field tangent
        Vec w = v + amplitude * x;
        double nw = w.norm();
        if (!(nw > 1e-12))
          throw std::runtime_error("SphereMap: perturbation collapses a point");
        return w / nw;
      }
    }
    throw std::logic_error("SphereMap::eval: unreachable");
  }

  // d sigma_v(w); w need not be tangent -- the 0-homogeneous extension is
  // differentiated, which agrees with the spherical differential on v-perp.
  Vec differential(const Vec& v, const Vec& w) const {
    switch (family) {
      case Family::identity:
        return w - w.dot(v) * v;
      case Family::rotation:
        return rotation_matrix * (w - w.dot(v) * v);
      case Family::latitude_twist: {
        Vec wt = w - w.dot(v) * v;
        double z = v[ambient_dim - 1];
        double theta = amplitude * profile.f(z);
        double dtheta = amplitude * profile.df(z) * wt[ambient_dim - 1];
        double c = std::cos(theta), s = std::sin(theta);
        Vec out = wt;
        out[0] = c * wt[0] - s * wt[1];
        out[1] = s * wt[0] + c * wt[1];
        // rotation-angle variation term: R'(theta) v * dtheta
        out[0] += dtheta * (-s * v[0] - c * v[1]);
        out[1] += dtheta * (c * v[0] - s * v[1]);
        return out;
      }
      case Family::normalized_perturbation: {
        Vec wt = w - w.dot(v) * v;
        double nw = wt.norm();
        if (nw < 1e-300) return Vec::Zero(ambient_dim);
        double h = fd_step;
        Vec dir = wt / nw;
        Vec plus = eval(Vec((v + h * dir).normalized()));
        Vec minus = eval(Vec((v - h * dir).normalized()));
        Vec d = (plus - minus) / (2.0 * h) * nw;
        Vec img = eval(v);
        return d - d.dot(img) * img;  // exact tangency at the image point
      }
    }
    throw std::logic_error("SphereMap::differential: unreachable");
  }

  // second derivative of c = sigma(gamma(t)) for the analytic families
  Vec curve_second_derivative(const GeodesicSegment& g, double t) const {
    Vec gam = geodesic_point_extended(g, t);
    Vec gd = -g.base.coords * std::sin(t) + g.tangent.coords * std::cos(t);
    Vec gdd = -gam;
    switch (family) {
      case Family::identity:
        return gdd;
      case Family::rotation:
        return rotation_matrix * gdd;
      case Family::latitude_twist: {
        const int n = ambient_dim;
        double z = gam[n - 1], zd = gd[n - 1], zdd = gdd[n - 1];
        double theta = amplitude * profile.f(z);
        double theta_d = amplitude * profile.df(z) * zd;
        double theta_dd =
            amplitude * (profile.d2f(z) * zd * zd + profile.df(z) * zdd);
        double c = std::cos(theta), s = std::sin(theta);
        auto rot = [&](const Vec& x) {
          Vec y = x;
          y[0] = c * x[0] - s * x[1];
          y[1] = s * x[0] + c * x[1];
          return y;
        };
        auto rot_p = [&](const Vec& x) {  // dR/dtheta applied to x
          Vec y = Vec::Zero(n);
          y[0] = -s * x[0] - c * x[1];
          y[1] = c * x[0] - s * x[1];
          return y;
        };
        auto rot_pp = [&](const Vec& x) {  // d2R/dtheta2
          Vec y = Vec::Zero(n);
          y[0] = -c * x[0] + s * x[1];
          y[1] = -s * x[0] - c * x[1];
          return y;
        };
        return rot(gdd) + 2.0 * theta_d * rot_p(gd) + theta_dd * rot_p(gam) +
               theta_d * theta_d * rot_pp(gam);
      }
      case Family::normalized_perturbation:
        throw std::invalid_argument(
            "curve_second_derivative: no analytic differential for this family");
    }
    throw std::logic_error("unreachable");
  }
};

enum class DerivMode { analytic, fd };

// Grid samples of c = sigma(gamma), its derivatives, and the comparison
// curve cbar(t) = c(0) cos t + c'(0) sin t. Endpoint derivatives stay
// central because the geodesic extends beyond [0, pi].
struct CurveSamples {
  std::vector<double> t;
  std::vector<Vec> c, c_dot, c_ddot, cbar, cbar_dot;
  double h = 0.0;
};

inline CurveSamples curve_samples(const SphereMap& sigma, const GeodesicSegment& g,
                                  double h, DerivMode mode) {
  if (sigma.ambient_dim != g.base.dim())
    throw std::invalid_argument("curve_samples: dimension mismatch");
  double steps_d = kPi / h;
  int m = static_cast<int>(std::llround(steps_d));
  if (std::abs(m * h - kPi) > 1e-9)
    throw std::invalid_argument("curve_samples: h must divide pi");
  if (m < 64) throw std::invalid_argument("curve_samples: need at least 64 steps");
  if (mode == DerivMode::analytic && !sigma.has_analytic_differential())
    throw std::invalid_argument("curve_samples: analytic mode unavailable for this family");

  CurveSamples cs;
  cs.h = h;
  cs.t.resize(m + 1);
  cs.c.resize(m + 1);
  cs.c_dot.resize(m + 1);
  cs.c_ddot.resize(m + 1);
  cs.cbar.resize(m + 1);
  cs.cbar_dot.resize(m + 1);

  auto curve = [&](double t) { return sigma.eval(geodesic_point_extended(g, t)); };

  for (int j = 0; j <= m; ++j) {
    double tj = j * h;
    cs.t[j] = tj;
    cs.c[j] = curve(tj);
    if (mode == DerivMode::analytic) {
      Vec gd = -g.base.coords * std::sin(tj) + g.tangent.coords * std::cos(tj);
      cs.c_dot[j] = sigma.differential(geodesic_point_extended(g, tj), gd);
      cs.c_ddot[j] = sigma.curve_second_derivative(g, tj);
    } else {
      Vec plus = curve(tj + h), minus = curve(tj - h);
      cs.c_dot[j] = (plus - minus) / (2.0 * h);
      cs.c_ddot[j] = (plus - 2.0 * cs.c[j] + minus) / (h * h);
    }
  }
  for (int j = 0; j <= m; ++j) {
    double tj = cs.t[j];
    cs.cbar[j] = cs.c[0] * std::cos(tj) + cs.c_dot[0] * std::sin(tj);
    cs.cbar_dot[j] = -cs.c[0] * std::sin(tj) + cs.c_dot[0] * std::cos(tj);
  }
  return cs;
}

// Composite Simpson value of the weighted curvature defect
// int_0^pi e^{-t} |c''(t) + c(t)| dt.
inline double alpha_integral(const CurveSamples& cs) {
  const std::size_t m = cs.t.size() - 1;
  if (m % 2 != 0) throw std::invalid_argument("alpha_integral: need an even step count");
  auto f = [&](std::size_t j) {
    return std::exp(-cs.t[j]) * (cs.c_ddot[j] + cs.c[j]).norm();
  };
  double s = f(0) + f(m);
  for (std::size_t j = 1; j < m; j += 2) s += 4.0 * f(j);
  for (std::size_t j = 2; j < m; j += 2) s += 2.0 * f(j);
  return s * cs.h / 3.0;
}

// Gronwall comparison of c against the great-circle solution cbar, plus the
// bound chain it feeds: the cos-projection bound, the speed pinch
// | |c'(0)| - 1 | <= alpha, and positivity of <cbar, c>.
struct GronwallReport {
  double max_lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  double alpha = 0.0;                  // e^pi * alpha-integral
  double chain_cos_min_slack = 0.0;    // min over grid of lhs - rhs of the cos bound
  bool chain_speed_ok = false;
  double chain_speed_dev = 0.0;
  double chain_inner_min = 0.0;        // min <cbar, c>
  bool chain_ok = false;
};

inline GronwallReport gronwall_check(const CurveSamples& cs, double tolerance = 1e-7) {
  GronwallReport rep;
  double integral = alpha_integral(cs);
  rep.rhs = std::exp(kPi) * integral;
  rep.alpha = rep.rhs;
  double max_lhs = 0.0;
  double cos_slack = std::numeric_limits<double>::infinity();
  double inner_min = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cs.t.size(); ++j) {
    double lhs = std::sqrt((cs.c[j] - cs.cbar[j]).squaredNorm() +
                           (cs.c_dot[j] - cs.cbar_dot[j]).squaredNorm());
    max_lhs = std::max(max_lhs, lhs);
    double th = cs.t[j];
    double lhs_cos = cs.c[0].dot(cs.c[j]) * std::cos(th);
    double rhs_cos = std::cos(th) * std::cos(th) - rep.alpha * std::abs(std::cos(th));
    cos_slack = std::min(cos_slack, lhs_cos - rhs_cos);
    inner_min = std::min(inner_min, cs.cbar[j].dot(cs.c[j]));
  }
  rep.max_lhs = max_lhs;
  rep.holds = max_lhs <= rep.rhs + tolerance;
  rep.chain_cos_min_slack = cos_slack;
  rep.chain_speed_dev = std::abs(cs.c_dot[0].norm() - 1.0);
  rep.chain_speed_ok = rep.chain_speed_dev <= rep.alpha + tolerance;
  rep.chain_inner_min = inner_min;
  rep.chain_ok = rep.holds && cos_slack >= -tolerance && rep.chain_speed_ok &&
                 inner_min > 0.0;
  return rep;
}

// Bi-Lipschitz constant estimate from chordal pair ratios, optionally
// tightened by extreme singular values of the differential over a point grid
// with local refinement. Both routes under-approximate, so the max is kept.
inline double bilip_estimate(const SphereMap& sigma, int pairs, std::uint64_t seed,
                             bool use_differential) {
  const int n = sigma.ambient_dim;
  std::vector<double> hi(pairs, 1.0), lo(pairs, 1.0);
  parallel_for(pairs, [&](std::size_t i) {
    Rng rng = Rng::derived(seed, i);
    Vec u = rng.unit(n), v = rng.unit(n);
    double den = (u - v).norm();
    if (den < 1e-9) return;
    double num = (sigma.eval(u) - sigma.eval(v)).norm();
    if (num < 1e-15)
      throw std::runtime_error("bilip_estimate: map collapses a sampled pair");
    hi[i] = num / den;
    lo[i] = num / den;
  });
  double max_ratio = 1e-300, min_ratio = 1e300;
  for (int i = 0; i < pairs; ++i) {
    max_ratio = std::max(max_ratio, hi[i]);
    min_ratio = std::min(min_ratio, lo[i]);
  }
  double L = std::max(max_ratio, 1.0 / min_ratio);

  if (use_differential) {
    auto extremes = [&](const Vec& v) {
      Mat frame(n, n - 1);
      int skip = 0;
      for (int i = 1; i < n; ++i)
        if (std::abs(v[i]) > std::abs(v[skip])) skip = i;
      int col = 0;
      for (int j = 0; j < n; ++j) {
        if (j == skip) continue;
        Vec e = Vec::Zero(n);
        e[j] = 1.0;
        e -= e.dot(v) * v;
        for (int c = 0; c < col; ++c) e -= e.dot(frame.col(c)) * frame.col(c);
        frame.col(col++) = e / e.norm();
      }
      Mat D(n, n - 1);
      for (int c = 0; c < n - 1; ++c) D.col(c) = sigma.differential(v, frame.col(c));
      Eigen::JacobiSVD<Mat> svd(D);
      return std::pair<double, double>(svd.singularValues().maxCoeff(),
                                       svd.singularValues().minCoeff());
    };

    const int grid = 4096;
    double best_max = 0.0, best_min = 1e300;
    Vec argmax, argmin;
    for (int k = 0; k < grid; ++k) {
      Rng rng = Rng::derived(seed ^ 0x9e1ful, k);
      Vec v = rng.unit(n);
      auto [smax, smin] = extremes(v);
      if (smax > best_max) { best_max = smax; argmax = v; }
      if (smin < best_min) { best_min = smin; argmin = v; }
    }
    // local hill climbing sharpens the grid extremes
    auto refine = [&](Vec v, bool maximize) {
      double radius = 0.3;
      double best = maximize ? extremes(v).first : -extremes(v).second;
      Rng rng(seed ^ 0xf00du);
      for (int step = 0; step < 160; ++step) {
        Vec cand = (v + radius * rng.gaussian(n)).normalized();
        double val = maximize ? extremes(cand).first : -extremes(cand).second;
        if (val > best) { best = val; v = cand; }
        radius *= 0.96;
      }
      return maximize ? best : -best;
    };
    best_max = std::max(best_max, refine(argmax, true));
    best_min = std::min(best_min, refine(argmin, false));
    L = std::max({L, best_max, 1.0 / best_min});
  }
  return L;
}

struct ConditionEntry {
  std::string name;
  bool satisfied = false;
  double margin = 0.0;
  Vec worst_base, worst_tangent;  // geodesic attaining the binding value
};

struct ConditionReport {
  std::vector<ConditionEntry> entries;
  std::vector<double> constants;  // K^2, dimension threshold, alpha threshold
  double lipb = 1.0;
  double max_ddot_sq = 0.0;
  double max_alpha_integral = 0.0;
  double identity_residual_max = 0.0;
  bool corollary_implication_ok = true;
  bool all_satisfied = false;
};

inline double condition_K_squared() {
  double K = (std::sqrt(2.0) - 1.0) / (2.0 * (std::exp(kPi) - 1.0));
  return K * K;
}

inline double alpha_threshold() {
  return std::exp(-kPi) * (1.0 - 1.0 / std::sqrt(2.0));
}

// Checks the sphere-theorem conditions over sampled geodesics: the two-part
// almost-isometry/curvature condition, the dimension-dependent bound, the
// acute comparison-angle condition, the curvature identity residual, and the
// implication from the first condition to the alpha-integral bound.
inline ConditionReport check_conditions(const SphereMap& sigma, int n,
                                        int geodesic_count, std::uint64_t seed,
                                        double h = kPi / 256.0) {
  if (geodesic_count < 1)
    throw std::invalid_argument("check_conditions: geodesic_count < 1");
  if (n != sigma.ambient_dim)
    throw std::invalid_argument("check_conditions: n must match the ambient dimension");

  ConditionReport rep;
  const double K2 = condition_K_squared();
  const double dim_threshold = 1.0 / std::sqrt(8.0 / kPi * (n - 1));
  const double a_threshold = alpha_threshold();
  rep.constants = {K2, dim_threshold, a_threshold};

  rep.lipb = bilip_estimate(sigma, 100000, seed ^ 0xb111u, true);

  DerivMode mode = sigma.has_analytic_differential() ? DerivMode::analytic : DerivMode::fd;

  struct PerGeo {
    double max_ddot_sq = 0.0;
    double max_angle = 0.0;
    double alpha_int = 0.0;
    double residual = 0.0;
  };
  std::vector<PerGeo> stats(geodesic_count);
  std::vector<GeodesicSegment> geos;
  geos.reserve(geodesic_count);
  for (int g = 0; g < geodesic_count; ++g) {
    Rng rng = Rng::derived(seed, static_cast<std::uint64_t>(g));
    geos.push_back(random_geodesic(n, rng));
  }
  parallel_for(geodesic_count, [&](std::size_t g) {
    CurveSamples cs = curve_samples(sigma, geos[g], h, mode);
    PerGeo st;
    for (std::size_t j = 0; j < cs.t.size(); ++j) {
      st.max_ddot_sq = std::max(st.max_ddot_sq, cs.c_ddot[j].squaredNorm());
      st.max_angle = std::max(st.max_angle, angle(cs.cbar[j], cs.c[j]));
      double lhs = (cs.c_ddot[j] + cs.c[j]).squaredNorm();
      double rhs = cs.c_ddot[j].squaredNorm() - 2.0 * cs.c_dot[j].squaredNorm() + 1.0;
      st.residual = std::max(st.residual, std::abs(lhs - rhs));
    }
    st.alpha_int = alpha_integral(cs);
    stats[g] = st;
  });

  int worst_ddot = 0, worst_angle = 0, worst_alpha = 0;
  for (int g = 0; g < geodesic_count; ++g) {
    if (stats[g].max_ddot_sq > stats[worst_ddot].max_ddot_sq) worst_ddot = g;
    if (stats[g].max_angle > stats[worst_angle].max_angle) worst_angle = g;
    if (stats[g].alpha_int > stats[worst_alpha].alpha_int) worst_alpha = g;
    rep.identity_residual_max = std::max(rep.identity_residual_max, stats[g].residual);
  }
  rep.max_ddot_sq = stats[worst_ddot].max_ddot_sq;
  rep.max_alpha_integral = stats[worst_alpha].alpha_int;

  auto entry = [&](const std::string& name, double margin, int geo_idx) {
    ConditionEntry e;
    e.name = name;
    e.margin = margin;
    e.satisfied = margin >= 0.0;
    e.worst_base = geos[geo_idx].base.coords;
    e.worst_tangent = geos[geo_idx].tangent.coords;
    return e;
  };

  const double inv_l2 = 1.0 / (rep.lipb * rep.lipb);
  rep.entries.push_back(entry("(1.5a)", inv_l2 - (1.0 - K2), worst_ddot));
  rep.entries.push_back(entry("(1.5b)", inv_l2 + K2 - rep.max_ddot_sq, worst_ddot));
  rep.entries.push_back(
      entry("(1.6)", 1.0 + dim_threshold - rep.lipb * rep.lipb, worst_ddot));
  rep.entries.push_back(
      entry("(1.7)", kPi / 2.0 - stats[worst_angle].max_angle, worst_angle));

  bool cond15 = rep.entries[0].satisfied && rep.entries[1].satisfied;
  rep.corollary_implication_ok =
      !cond15 || rep.max_alpha_integral <= a_threshold + 1e-9;

  rep.all_satisfied = true;
  for (const auto& e : rep.entries) rep.all_satisfied = rep.all_satisfied && e.satisfied;
  return rep;
}

// Degree-one homogeneous extension |v| sigma(v/|v|).
inline Vec radial_extension_eval(const SphereMap& sigma, const Vec& v) {
  double nv = v.norm();
  if (nv < 1e-300) return Vec::Zero(sigma.ambient_dim);
  return nv * sigma.eval(v / nv);
}

// The linear map A_v: radial line to the ray through sigma(v), v-perp by the
// spherical differential. Columns assembled in an adapted orthonormal basis.
inline Mat a_v_matrix(const SphereMap& sigma, const UnitVector& v) {
  const int n = sigma.ambient_dim;
  const Vec& vc = v.coords;
  Mat A = sigma.eval(vc) * vc.transpose();
  // orthonormal basis of v-perp
  int skip = 0;
  for (int i = 1; i < n; ++i)
    if (std::abs(vc[i]) > std::abs(vc[skip])) skip = i;
  std::vector<Vec> basis;
  for (int j = 0; j < n; ++j) {
    if (j == skip) continue;
    Vec e = Vec::Zero(n);
    e[j] = 1.0;
    e -= e.dot(vc) * vc;
    for (const Vec& b : basis) e -= e.dot(b) * b;
    e /= e.norm();
    basis.push_back(e);
    A += sigma.differential(vc, e) * e.transpose();
  }
  return A;
}

struct ExtensionMargin {
  double margin = 0.0;             // min over (v, u) of <A_v u, sigma(u)>
  double hull_min_singular = 0.0;  // min singular value over sampled Conv{A_v}
};

inline ExtensionMargin extension_nonsingularity_margin(const SphereMap& sigma,
                                                       int sample_count, int hull_count,
                                                       std::uint64_t seed) {
  if (sample_count < 1)
    throw std::invalid_argument("extension_nonsingularity_margin: sample_count < 1");
  const int n = sigma.ambient_dim;
  std::vector<double> mins(sample_count, std::numeric_limits<double>::infinity());
  std::vector<Mat> avs(sample_count);
  parallel_for(sample_count, [&](std::size_t k) {
    Rng rng = Rng::derived(seed, k);
    Vec v = rng.unit(n);
    Mat A = a_v_matrix(sigma, UnitVector(v));
    avs[k] = A;
    // probe u along a geodesic grid from v
    Vec w = rng.gaussian(n);
    w -= w.dot(v) * v;
    double nw = w.norm();
    if (nw < 1e-10) return;
    w /= nw;
    for (int j = 0; j <= 64; ++j) {
      double t = kPi * j / 64.0;
      Vec u = v * std::cos(t) + w * std::sin(t);
      mins[k] = std::min(mins[k], (A * u).dot(sigma.eval(u)));
    }
  });
  ExtensionMargin out;
  out.margin = std::numeric_limits<double>::infinity();
  for (double m : mins) out.margin = std::min(out.margin, m);
  out.hull_min_singular = std::numeric_limits<double>::infinity();
  for (const Mat& M : hull_matrix_sample(avs, seed ^ 0x4a11u,
                                         sample_count + hull_count))
    out.hull_min_singular = std::min(out.hull_min_singular, min_singular_value(M));
  return out;
}

struct ExtensionBilip {
  bool holds = false;
  double worst_upper = 1.0;
  double worst_lower = 1.0;
  double lipb_used = 1.0;
  bool reestimated = false;
};

// Sandwich check for the radial extension: every sampled pair ratio must lie
// within [1/Lipb - 1e-6, Lipb + 1e-6]. A violation triggers one
// re-estimation of Lipb with ten times the pairs.
inline ExtensionBilip extension_bilip_check(const SphereMap& sigma, int pairs,
                                            std::uint64_t seed) {
  const int n = sigma.ambient_dim;
  auto sample_ratios = [&](std::uint64_t s, double& up, double& down) {
    std::vector<double> his(pairs, 1.0), los(pairs, 1.0);
    parallel_for(pairs, [&](std::size_t i) {
      Rng rng = Rng::derived(s, i);
      int mode = static_cast<int>(rng.next_u64() % 4);
      Vec u, v;
      if (mode == 0) {  // generic pair in the ball of radius 2
        u = 2.0 * rng.in_unit_ball(n);
        v = 2.0 * rng.in_unit_ball(n);
      } else if (mode == 1) {  // radial pair
        u = rng.unit(n) * rng.uniform(0.0, 2.0);
        v = u * rng.uniform(0.0, 2.0);
      } else if (mode == 2) {  // tangential pair, equal radii
        double r = rng.uniform(1e-3, 2.0);
        u = r * rng.unit(n);
        v = r * rng.unit(n);
      } else {  // one endpoint at the origin
        u = Vec::Zero(n);
        v = 2.0 * rng.in_unit_ball(n);
      }
      double den = (u - v).norm();
      if (den < 1e-12) return;
      double ratio = (radial_extension_eval(sigma, u) - radial_extension_eval(sigma, v)).norm() / den;
      his[i] = ratio;
      los[i] = ratio;
    });
    up = 1.0;
    down = 1.0;
    for (int i = 0; i < pairs; ++i) {
      up = std::max(up, his[i]);
      down = std::min(down, los[i]);
    }
  };

  ExtensionBilip out;
  out.lipb_used = bilip_estimate(sigma, pairs, seed ^ 0x11fu, true);
  sample_ratios(seed, out.worst_upper, out.worst_lower);
  auto ok = [&]() {
    return out.worst_upper <= out.lipb_used + 1e-6 &&
           out.worst_lower >= 1.0 / out.lipb_used - 1e-6;
  };
  if (!ok()) {
    out.reestimated = true;
    out.lipb_used = bilip_estimate(sigma, 10 * pairs, seed ^ 0x22fu, true);
    sample_ratios(seed ^ 0x33fu, out.worst_upper, out.worst_lower);
  }
  out.holds = ok();
  return out;
}

}  // namespace nsg
