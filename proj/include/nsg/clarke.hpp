#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nsg/geometry.hpp"
#include "nsg/matrix_hull.hpp"
#include "nsg/min_norm.hpp"
#include "nsg/rng.hpp"

namespace nsg {

// Lipschitz function with an almost-everywhere gradient oracle. The oracle
// returns nullopt on its non-differentiability set (measure zero), and any
// gradient it does return must respect lip_bound.
struct LipschitzFunctionOracle {
  std::function<double(const Vec&)> eval;
  std::function<std::optional<Vec>(const Vec&)> gradient_ae;
  double lip_bound = 1.0;
};

struct LipschitzMapOracle {
  std::function<Vec(const Vec&)> eval;
  std::function<std::optional<Mat>(const Vec&)> jacobian_ae;
  double lip_bound = 1.0;
};

struct SampleConfig {
  std::vector<double> radii{1e-1, 1e-2, 1e-3};
  int per_radius = 64;
  std::uint64_t seed = 0;
};

struct GeneralizedGradient {
  Vec point;
  std::vector<Vec> samples;
  std::vector<double> radii_used;
  std::uint64_t seed = 0;
};

struct GeneralizedDifferential {
  Vec point;
  std::vector<Mat> samples;
  std::vector<double> radii_used;
  std::uint64_t seed = 0;
};

namespace detail {

inline void validate_sample_config(const SampleConfig& cfg) {
  if (cfg.radii.empty()) throw std::invalid_argument("sample config: empty radius list");
  for (std::size_t i = 0; i < cfg.radii.size(); ++i) {
    if (!(cfg.radii[i] > 0.0))
      throw std::invalid_argument("sample config: radii must be positive");
    if (i > 0 && !(cfg.radii[i] < cfg.radii[i - 1]))
      throw std::invalid_argument("sample config: radii must be strictly decreasing");
  }
  if (cfg.per_radius < 1) throw std::invalid_argument("sample config: per_radius < 1");
}

template <class Value, class Oracle>
std::vector<Value> sample_limits(const Oracle& probe, const Vec& x,
                                 const SampleConfig& cfg) {
  validate_sample_config(cfg);
  const int n = static_cast<int>(x.size());
  std::vector<Value> samples;
  samples.reserve(cfg.radii.size() * cfg.per_radius);
  std::uint64_t counter = 0;
  for (double r : cfg.radii) {
    for (int j = 0; j < cfg.per_radius; ++j, ++counter) {
      Rng rng = Rng::derived(cfg.seed, counter);
      std::optional<Value> got;
      for (int attempt = 0; attempt < 100 && !got; ++attempt)
        got = probe(x + r * rng.in_unit_ball(n));
      if (!got)
        throw std::runtime_error(
            "gradient sampling: oracle undefined on 100 consecutive draws");
      samples.push_back(std::move(*got));
    }
  }
  return samples;
}

}  // namespace detail

// Shrinking-radius sampler for the limiting-gradient set: points drawn
// uniformly in each ball around x, undefined draws retried. The sampled set
// under-approximates the true hull, so "origin inside" verdicts are
// certificates while "origin outside" verdicts are heuristic.
inline GeneralizedGradient sample_generalized_gradient(
    const LipschitzFunctionOracle& f, const Vec& x, const SampleConfig& cfg) {
  auto probe = [&](const Vec& p) -> std::optional<Vec> {
    std::optional<Vec> g = f.gradient_ae(p);
    if (g && g->norm() > f.lip_bound + 1e-9)
      throw std::invalid_argument("gradient oracle exceeds its declared Lipschitz bound");
    return g;
  };
  GeneralizedGradient gg;
  gg.point = x;
  gg.samples = detail::sample_limits<Vec>(probe, x, cfg);
  gg.radii_used = cfg.radii;
  gg.seed = cfg.seed;
  return gg;
}

inline GeneralizedDifferential sample_generalized_differential(
    const LipschitzMapOracle& F, const Vec& x, const SampleConfig& cfg) {
  auto probe = [&](const Vec& p) { return F.jacobian_ae(p); };
  GeneralizedDifferential gd;
  gd.point = x;
  gd.samples = detail::sample_limits<Mat>(probe, x, cfg);
  for (const Mat& J : gd.samples)
    if (J.rows() != gd.samples[0].rows() || J.cols() != gd.samples[0].cols())
      throw std::invalid_argument("jacobian oracle returned inconsistent shapes");
  gd.radii_used = cfg.radii;
  gd.seed = cfg.seed;
  return gd;
}

struct Criticality {
  bool critical = false;
  double margin = 0.0;
};

inline Criticality is_critical(const GeneralizedGradient& gg, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("is_critical: tol must be positive");
  MinNormResult res = min_norm_in_hull(gg.samples, std::max(1e-9, tol / 100.0));
  return {res.distance <= tol, res.distance};
}

// Smallest singular value over the sampled matrices and random convex
// combinations of them. A one-sided check: sampling can only shrink the hull.
inline double nonsingularity_margin(const GeneralizedDifferential& gd,
                                    int hull_count, std::uint64_t seed) {
  if (gd.samples.empty()) throw std::invalid_argument("nonsingularity_margin: no samples");
  if (gd.samples[0].rows() < gd.samples[0].cols())
    throw std::invalid_argument("nonsingularity_margin: needs k >= n");
  auto probes = hull_matrix_sample(gd.samples, seed,
                                   static_cast<int>(gd.samples.size()) + hull_count);
  double margin = std::numeric_limits<double>::infinity();
  for (const Mat& M : probes) margin = std::min(margin, min_singular_value(M));
  return margin;
}

struct ConeCertificate {
  Vec direction;   // v
  double delta = 0.0;
};

// Searches for a half-space certificate that o is not in {A u : A sampled}.
// delta > 0 certifies it; when the hull contains the origin every direction
// gives delta <= 0 and no certificate exists.
inline ConeCertificate cone_certificate(const GeneralizedDifferential& gd,
                                        const UnitVector& u) {
  if (gd.samples.empty()) throw std::invalid_argument("cone_certificate: no samples");
  if (gd.samples[0].rows() < gd.samples[0].cols())
    throw std::invalid_argument("cone_certificate: needs k >= n");
  std::vector<Vec> images;
  images.reserve(gd.samples.size());
  for (const Mat& A : gd.samples) images.push_back(A * u.coords);

  MinNormResult res = min_norm_in_hull(images, 1e-9);
  ConeCertificate cert;
  const double tol = 1e-9;
  if (res.distance > tol) {
    cert.direction = res.witness / res.distance;
  } else {
    cert.direction = Vec::Zero(images[0].size());
    cert.direction[0] = 1.0;
  }
  cert.delta = std::numeric_limits<double>::infinity();
  for (const Vec& img : images) cert.delta = std::min(cert.delta, img.dot(cert.direction));
  return cert;
}

struct IncreasingReport {
  bool holds = false;
  double worst_ratio = 0.0;
};

inline IncreasingReport increasing_check(const LipschitzMapOracle& F, const Vec& p,
                                         double r, double delta, int pairs,
                                         std::uint64_t seed) {
  if (!(r > 0.0) || !(delta > 0.0))
    throw std::invalid_argument("increasing_check: r and delta must be positive");
  const int n = static_cast<int>(p.size());
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < pairs; ++i) {
    Rng rng = Rng::derived(seed, static_cast<std::uint64_t>(i));
    Vec q1 = p + r * rng.in_unit_ball(n);
    Vec q2 = p + r * rng.in_unit_ball(n);
    double denom = (q2 - q1).norm();
    if (denom < 1e-12) continue;
    worst = std::min(worst, (F.eval(q2) - F.eval(q1)).norm() / denom);
  }
  return {worst >= delta, worst};
}

}  // namespace nsg
