#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsg/clarke.hpp"
#include "nsg/geometry.hpp"
#include "nsg/manifolds.hpp"
#include "nsg/matrix_hull.hpp"
#include "nsg/min_norm.hpp"
#include "nsg/mollify.hpp"
#include "nsg/sphere_maps.hpp"
#include "nsg/version.hpp"

namespace nsg::harness {

using json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, std::string key_)
      : std::runtime_error(message), key(std::move(key_)) {}
  std::string key;
};

struct CheckRecord {
  std::string name;
  std::string anchor;
  bool satisfied = false;
  double margin = 0.0;
  long long runtime_ms = 0;
  json details;       // optional extras (witnesses etc.)
  std::string error;  // non-empty when the check raised a domain error
};

struct CurveRow {
  double t = 0.0;
  std::string quantity;
  double value = 0.0;
  int geodesic_id = 0;
  std::uint64_t seed = 0;
};

struct Report {
  std::string experiment;
  json config_echo;
  std::vector<CheckRecord> checks;
  std::vector<CurveRow> curve_rows;
  bool all_satisfied = true;
  bool any_error = false;
};

inline std::string platform_note() {
  std::string arch =
#if defined(__x86_64__)
      "x86_64";
#elif defined(__aarch64__)
      "aarch64";
#else
      "unknown-arch";
#endif
  return arch + " / " +
#if defined(__clang__)
         ("clang " + std::to_string(__clang_major__) + "." + std::to_string(__clang_minor__));
#elif defined(__GNUC__)
         ("gcc " + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__));
#else
         "unknown-compiler";
#endif
}

namespace detail {

inline void require_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::set<std::string>& required,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + where, it.key());
  for (const std::string& key : required)
    if (!obj.contains(key))
      throw ConfigError("missing key '" + key + "' in " + where, key);
}

class CheckRunner {
 public:
  explicit CheckRunner(Report& report) : report_(report) {}

  template <class Fn>
  void run(const std::string& name, const std::string& anchor, Fn&& fn) {
    CheckRecord rec;
    rec.name = name;
    rec.anchor = anchor;
    auto start = std::chrono::steady_clock::now();
    try {
      fn(rec);
    } catch (const std::exception& e) {
      rec.error = e.what();
      rec.satisfied = false;
      report_.any_error = true;
    }
    rec.runtime_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    report_.all_satisfied = report_.all_satisfied && rec.satisfied;
    report_.checks.push_back(std::move(rec));
  }

 private:
  Report& report_;
};

inline Vec to_vec(const json& arr) {
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

inline json from_vec(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

// Worked one-dimensional example f = max(x^2, x + 2).
inline LipschitzFunctionOracle worked_max_oracle() {
  LipschitzFunctionOracle f;
  f.eval = [](const Vec& x) { return std::max(x[0] * x[0], x[0] + 2.0); };
  f.gradient_ae = [](const Vec& x) -> std::optional<Vec> {
    double t = x[0];
    if (std::abs(t + 1.0) < 1e-12 || std::abs(t - 2.0) < 1e-12) return std::nullopt;
    Vec g(1);
    g[0] = (t < -1.0 || t > 2.0) ? 2.0 * t : 1.0;
    return g;
  };
  f.lip_bound = 6.0;
  return f;
}

// Worked planar map F(x, y) = (|x| + y, 2x + |y|).
inline LipschitzMapOracle worked_planar_oracle() {
  LipschitzMapOracle F;
  F.eval = [](const Vec& p) {
    Vec out(2);
    out << std::abs(p[0]) + p[1], 2.0 * p[0] + std::abs(p[1]);
    return out;
  };
  F.jacobian_ae = [](const Vec& p) -> std::optional<Mat> {
    if (std::abs(p[0]) < 1e-12 || std::abs(p[1]) < 1e-12) return std::nullopt;
    Mat J(2, 2);
    J << (p[0] > 0 ? 1.0 : -1.0), 1.0, 2.0, (p[1] > 0 ? 1.0 : -1.0);
    return J;
  };
  F.lip_bound = 3.0;
  return F;
}

inline double planar_family_sigma_oracle(int grid_steps) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid_steps; ++i) {
    double s = -1.0 + 2.0 * i / grid_steps;
    for (int j = 0; j <= grid_steps; ++j) {
      double t = -1.0 + 2.0 * j / grid_steps;
      Mat M(2, 2);
      M << s, 1.0, 2.0, t;
      best = std::min(best, min_singular_value(M));
    }
  }
  return best;
}

inline SphereMap build_sigma(const std::string& family, int n, double amplitude,
                             std::uint64_t seed) {
  if (family == "identity") return SphereMap::identity(n);
  if (family == "rotation") {
    Rng rng(seed ^ 0x0a7u);
    Mat G(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) G(i, j) = rng.normal();
    Eigen::HouseholderQR<Mat> qr(G);
    Mat Q = qr.householderQ();
    Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j)
      if (R(j, j) < 0) Q.col(j) = -Q.col(j);
    return SphereMap::rotation(Q);
  }
  if (family == "latitude-twist") return SphereMap::latitude_twist(n, amplitude);
  if (family == "normalized-perturbation") {
    auto field = [](const Vec& v) {
      Vec x(v.size());
      for (Eigen::Index i = 0; i < v.size(); ++i)
        x[i] = std::sin(3.0 * v[(i + 1) % v.size()]);
      return x;
    };
    return SphereMap::normalized_perturbation(n, field, amplitude);
  }
  throw ConfigError("unknown sigma family '" + family + "'", "family");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// experiments

inline void run_clarke_examples(const json& params, Report& report) {
  detail::require_keys(params,
                       {"seed", "radii", "per_radius", "tol", "hull_count"},
                       {"seed"}, "parameters");
  SampleConfig cfg;
  cfg.seed = params.value("seed", 0ull);
  cfg.per_radius = params.value("per_radius", 64);
  cfg.radii = params.contains("radii")
                  ? params["radii"].get<std::vector<double>>()
                  : std::vector<double>{1e-2, 1e-3, 1e-4};
  double tol = params.value("tol", 6e-3);
  int hull_count = params.value("hull_count", 10000);

  LipschitzFunctionOracle f = detail::worked_max_oracle();
  detail::CheckRunner runner(report);

  auto interval_check = [&](double at, double lo, double hi, CheckRecord& rec) {
    Vec x(1);
    x[0] = at;
    GeneralizedGradient gg = sample_generalized_gradient(f, x, cfg);
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (const Vec& s : gg.samples) {
      mn = std::min(mn, s[0]);
      mx = std::max(mx, s[0]);
    }
    double dev = std::max(std::abs(mn - lo), std::abs(mx - hi));
    rec.margin = 0.02 - dev;
    rec.satisfied = rec.margin >= 0.0;
    rec.details = json{{"endpoints", {mn, mx}}, {"expected", {lo, hi}}};
  };
  runner.run("interval of the max-example at x=-1", "generalized-gradient interval",
             [&](CheckRecord& rec) { interval_check(-1.0, -2.0, 1.0, rec); });
  runner.run("interval of the max-example at x=2", "generalized-gradient interval",
             [&](CheckRecord& rec) { interval_check(2.0, 1.0, 4.0, rec); });

  runner.run("criticality classification", "criticality", [&](CheckRecord& rec) {
    std::vector<double> pts{-1.5, -1.0, 0.0, 2.0, 2.5};
    std::vector<bool> expect{false, true, false, false, false};
    bool ok = true;
    double min_noncrit = std::numeric_limits<double>::infinity();
    json cls = json::array();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      Vec x(1);
      x[0] = pts[i];
      Criticality c = is_critical(sample_generalized_gradient(f, x, cfg), tol);
      ok = ok && (c.critical == expect[i]);
      if (!c.critical) min_noncrit = std::min(min_noncrit, c.margin);
      cls.push_back(json{{"x", pts[i]}, {"critical", c.critical}, {"margin", c.margin}});
    }
    rec.satisfied = ok;
    rec.margin = min_noncrit - tol;
    rec.details = json{{"classification", cls}};
  });

  LipschitzMapOracle F = detail::worked_planar_oracle();
  Vec origin = Vec::Zero(2);
  GeneralizedDifferential gd = sample_generalized_differential(F, origin, cfg);

  runner.run("planar-map differential margin", "nonsingularity margin",
             [&](CheckRecord& rec) {
               double margin = nonsingularity_margin(gd, hull_count, cfg.seed ^ 0x7u);
               double oracle = detail::planar_family_sigma_oracle(200);
               rec.margin = margin;
               rec.satisfied = std::abs(margin - oracle) <= 0.01 && margin > 0.3;
               rec.details = json{{"oracle", oracle}};
             });

  runner.run("planar-map cone certificate", "cone certificate", [&](CheckRecord& rec) {
    Vec u(2);
    u << 1.0, 0.0;
    ConeCertificate cert = cone_certificate(gd, UnitVector(u));
    rec.margin = 0.01 - std::abs(cert.delta - 2.0);
    rec.satisfied = rec.margin >= 0.0;
    rec.details = json{{"delta", cert.delta}, {"direction", detail::from_vec(cert.direction)}};
  });

  runner.run("planar-map increasing check", "increasing map", [&](CheckRecord& rec) {
    // the infimum of the pair ratio is the corner sigma_min ~ 0.382
    IncreasingReport inc = increasing_check(F, origin, 0.5, 0.35, 10000, cfg.seed ^ 0x9u);
    rec.margin = inc.worst_ratio - 0.35;
    rec.satisfied = inc.holds;
    rec.details = json{{"worst_ratio", inc.worst_ratio}};
  });
}

inline void run_mollify_bounds(const json& params, Report& report) {
  detail::require_keys(params, {"seed", "eps_list", "grid_per_axis"}, {"seed"},
                       "parameters");
  std::uint64_t seed = params.value("seed", 0ull);
  std::vector<double> eps_list = params.contains("eps_list")
                                     ? params["eps_list"].get<std::vector<double>>()
                                     : std::vector<double>{0.1, 0.05};
  int grid_n = params.value("grid_per_axis", 128);

  FlatTorus torus(2);
  PartitionOfUnity pou = make_partition(torus, torus.default_cover());
  QuadratureRule quad = make_gauss_rule(2);
  Vec p = Vec::Zero(2);
  ManifoldFunction dp{[&torus, p](const Vec& x) { return torus.distance(p, x); }, 1.0};
  std::vector<Vec> grid = torus_grid(torus, grid_n);

  detail::CheckRunner runner(report);
  std::map<double, double> measured;
  for (double eps : eps_list) {
    runner.run("sup-error bound on the torus (eps=" + std::to_string(eps) + ")",
               "sup-error bound", [&](CheckRecord& rec) {
                 SmoothedFunction sf = smooth_function(dp, pou, eps, quad);
                 SupErrorReport rep = sup_error_report(sf, dp, grid);
                 measured[eps] = rep.max_abs_err;
                 rec.margin = rep.bound - rep.max_abs_err;
                 rec.satisfied = rep.holds;
                 rec.details = json{{"max_abs_err", rep.max_abs_err}, {"bound", rep.bound}};
               });
  }
  runner.run("error monotone in eps", "error monotonicity", [&](CheckRecord& rec) {
    bool ok = true;
    double margin = std::numeric_limits<double>::infinity();
    std::vector<double> sorted(eps_list);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      double gap = measured[sorted[i + 1]] - measured[sorted[i]];
      ok = ok && gap >= -1e-9;
      margin = std::min(margin, gap);
    }
    rec.satisfied = ok;
    rec.margin = margin;
  });

  runner.run("mollifier normalization dims 1-3", "mollifier normalization",
             [&](CheckRecord& rec) {
               double worst = 0.0;
               for (int dim = 1; dim <= 3; ++dim)
                 worst = std::max(worst,
                                  std::abs(integrate_unit_density(make_gauss_rule(dim)) - 1.0));
               rec.margin = 1e-8 - worst;
               rec.satisfied = rec.margin >= 0.0;
               rec.details = json{{"max_defect", worst}};
             });

  runner.run("smoothed gradient vs analytic direction", "gradient consistency",
             [&](CheckRecord& rec) {
               double eps = 0.01;
               SmoothedFunction sf = smooth_function(dp, pou, eps, quad);
               double worst = 0.0;
               for (int k = 0; k < 50; ++k) {
                 Rng rng = Rng::derived(seed ^ 0x51adu, k);
                 // stay on the smooth stratum, away from p and the cut lines
                 Vec x(2);
                 x << rng.uniform(0.08, 0.40), rng.uniform(0.08, 0.40);
                 Vec grad = smoothed_gradient(sf, x);
                 Vec exact = -torus.minimal_directions(p, x)[0];
                 worst = std::max(worst, (grad - exact).norm());
               }
               rec.margin = 1e-3 - worst;
               rec.satisfied = rec.margin >= 0.0;
               rec.details = json{{"max_gradient_deviation", worst}};
             });

  runner.run("obtuse smoothed gradients on the sphere band", "obtuse gradients",
             [&](CheckRecord& rec) {
               RoundSphere sphere(2);
               Vec north(3), south(3);
               north << 0, 0, 1;
               south << 0, 0, -1;
               ObtuseReport rep = obtuse_gradient_report(
                   sphere, north, south, sphere_band_grid(0.2, 48, 9), 0.05);
               rec.margin = rep.min_angle - (kPi / 2.0 + 0.5);
               rec.satisfied = rep.holds && rec.margin >= 0.0;
               rec.details = json{{"min_angle", rep.min_angle}};
             });

  runner.run("zero level of the distance difference", "zero-level containment",
             [&](CheckRecord& rec) {
               RoundSphere sphere(2);
               Vec north(3), south(3);
               north << 0, 0, 1;
               south << 0, 0, -1;
               PartitionOfUnity spou = make_partition(sphere, sphere.default_cover());
               ManifoldFunction diff{[&](const Vec& x) {
                                       return sphere.distance(north, x) -
                                              sphere.distance(south, x);
                                     },
                                     2.0};
               SmoothedFunction sf = smooth_function(diff, spou, 0.05, make_gauss_rule(2));
               auto zeros = zero_level_scan(sf, sphere_polar_grid(64), 0.02);
               double worst = 0.0;
               for (const Vec& z : zeros)
                 worst = std::max(worst, std::abs(kPi / 2.0 - sphere.distance(north, z)));
               rec.margin = 0.06 - worst;
               rec.satisfied = !zeros.empty() && rec.margin >= 0.0;
               rec.details = json{{"zero_count", zeros.size()}, {"max_equator_distance", worst}};
             });
}

inline void run_sigma_conditions(const json& params, Report& report) {
  detail::require_keys(
      params, {"seed", "family", "n", "amplitude", "geodesic_count", "steps"},
      {"seed", "family", "n"}, "parameters");
  std::uint64_t seed = params.value("seed", 0ull);
  std::string family = params["family"].get<std::string>();
  int n = params["n"].get<int>();
  double amplitude = params.value("amplitude", 0.0);
  int geodesic_count = params.value("geodesic_count", 256);
  int steps = params.value("steps", 256);

  SphereMap sigma = detail::build_sigma(family, n, amplitude, seed);
  ConditionReport rep = check_conditions(sigma, n, geodesic_count, seed, kPi / steps);

  detail::CheckRunner runner(report);
  for (const ConditionEntry& e : rep.entries) {
    runner.run("condition " + e.name + " [" + sigma.family_name() + "]",
               "condition " + e.name, [&](CheckRecord& rec) {
                 rec.satisfied = e.satisfied;
                 rec.margin = e.margin;
                 rec.details = json{{"worst_geodesic_base", detail::from_vec(e.worst_base)},
                                    {"worst_geodesic_tangent", detail::from_vec(e.worst_tangent)},
                                    {"lipb", rep.lipb}};
               });
  }
  runner.run("curvature identity residual", "curvature identity", [&](CheckRecord& rec) {
    double tol = sigma.has_analytic_differential()
                     ? 1e-6
                     : 5.0 * (kPi / steps) * (kPi / steps);
    rec.margin = tol - rep.identity_residual_max;
    rec.satisfied = rec.margin >= 0.0;
    rec.details = json{{"residual", rep.identity_residual_max}, {"tolerance", tol}};
  });
  runner.run("alpha condition implied by (1.5)", "alpha condition", [&](CheckRecord& rec) {
    rec.satisfied = rep.corollary_implication_ok;
    rec.margin = alpha_threshold() - rep.max_alpha_integral;
    rec.details = json{{"max_alpha_integral", rep.max_alpha_integral},
                       {"threshold", alpha_threshold()}};
  });

  // curve rows for the worst (1.7) geodesic
  const ConditionEntry& worst17 = rep.entries[3];
  GeodesicSegment geo(UnitVector(worst17.worst_base), UnitVector(worst17.worst_tangent));
  DerivMode mode = sigma.has_analytic_differential() ? DerivMode::analytic : DerivMode::fd;
  CurveSamples cs = curve_samples(sigma, geo, kPi / steps, mode);
  for (std::size_t j = 0; j < cs.t.size(); ++j) {
    report.curve_rows.push_back(
        {cs.t[j], "curvature_defect", (cs.c_ddot[j] + cs.c[j]).norm(), 0, seed});
    report.curve_rows.push_back(
        {cs.t[j], "comparison_inner", cs.cbar[j].dot(cs.c[j]), 0, seed});
    report.curve_rows.push_back(
        {cs.t[j], "comparison_gap", (cs.c[j] - cs.cbar[j]).norm(), 0, seed});
  }
}

inline void run_extension_certificates(const json& params, Report& report) {
  detail::require_keys(params,
                       {"seed", "families", "geodesic_count", "pairs", "hull_count"},
                       {"seed"}, "parameters");
  std::uint64_t seed = params.value("seed", 0ull);
  int geodesic_count = params.value("geodesic_count", 256);
  int pairs = params.value("pairs", 100000);
  int hull_count = params.value("hull_count", 2000);

  json families = params.contains("families")
                      ? params["families"]
                      : json::parse(R"([
    {"family":"identity","n":3,"amplitude":0.0},
    {"family":"rotation","n":3,"amplitude":0.0},
    {"family":"latitude-twist","n":3,"amplitude":0.01},
    {"family":"latitude-twist","n":3,"amplitude":0.05},
    {"family":"latitude-twist","n":3,"amplitude":0.1}])");

  detail::CheckRunner runner(report);
  int geo_id = 0;
  for (const json& fam : families) {
    std::string name = fam["family"].get<std::string>();
    int n = fam["n"].get<int>();
    double amplitude = fam.value("amplitude", 0.0);
    SphereMap sigma = detail::build_sigma(name, n, amplitude, seed);
    std::string tag = " [" + name + (amplitude != 0.0 ? " " + std::to_string(amplitude) : "") + "]";
    DerivMode mode = sigma.has_analytic_differential() ? DerivMode::analytic : DerivMode::fd;

    double max_alpha = 0.0;
    bool gron_all = true, chain_all = true;
    double gron_margin = std::numeric_limits<double>::infinity();
    for (int g = 0; g < geodesic_count; ++g) {
      Rng rng = Rng::derived(seed ^ 0x6e0u, static_cast<std::uint64_t>(g));
      GeodesicSegment geo = random_geodesic(n, rng);
      CurveSamples cs = curve_samples(sigma, geo, kPi / 256, mode);
      GronwallReport gr = gronwall_check(cs);
      max_alpha = std::max(max_alpha, alpha_integral(cs));
      gron_all = gron_all && gr.holds;
      chain_all = chain_all && gr.chain_ok;
      gron_margin = std::min(gron_margin, gr.rhs + 1e-7 - gr.max_lhs);
    }
    ExtensionMargin ext = extension_nonsingularity_margin(sigma, 512, hull_count, seed);

    runner.run("gronwall comparison" + tag, "gronwall comparison", [&](CheckRecord& rec) {
      rec.satisfied = gron_all;
      rec.margin = gron_margin;
    });
    runner.run("comparison chain" + tag, "comparison chain", [&](CheckRecord& rec) {
      rec.satisfied = chain_all;
      rec.margin = gron_margin;
    });
    runner.run("alpha-condition certificate" + tag, "extension nonsingularity",
               [&](CheckRecord& rec) {
                 bool alpha_ok = max_alpha <= alpha_threshold();
                 rec.satisfied = !alpha_ok || ext.margin > 0.0;
                 rec.margin = ext.margin;
                 rec.details = json{{"max_alpha_integral", max_alpha},
                                    {"threshold", alpha_threshold()},
                                    {"alpha_condition_met", alpha_ok},
                                    {"hull_min_singular", ext.hull_min_singular}};
               });
    runner.run("bi-Lipschitz sandwich" + tag, "bi-Lipschitz sandwich",
               [&](CheckRecord& rec) {
                 ExtensionBilip bl = extension_bilip_check(sigma, pairs, seed ^ 0x8a2u);
                 rec.satisfied = bl.holds;
                 rec.margin = std::min(bl.lipb_used + 1e-6 - bl.worst_upper,
                                       bl.worst_lower - (1.0 / bl.lipb_used - 1e-6));
                 rec.details = json{{"lipb", bl.lipb_used},
                                    {"worst_upper", bl.worst_upper},
                                    {"worst_lower", bl.worst_lower},
                                    {"reestimated", bl.reestimated}};
               });

    // curve rows from one representative geodesic per family
    Rng rng = Rng::derived(seed ^ 0x6e0u, 0);
    GeodesicSegment geo = random_geodesic(n, rng);
    CurveSamples cs = curve_samples(sigma, geo, kPi / 256, mode);
    for (std::size_t j = 0; j < cs.t.size(); j += 4) {
      report.curve_rows.push_back(
          {cs.t[j], "curvature_defect" + tag, (cs.c_ddot[j] + cs.c[j]).norm(), geo_id, seed});
      report.curve_rows.push_back(
          {cs.t[j], "comparison_inner" + tag, cs.cbar[j].dot(cs.c[j]), geo_id, seed});
    }
    ++geo_id;
  }
}

inline void run_twisted_hypotheses(const json& params, Report& report) {
  detail::require_keys(params,
                       {"seed", "manifold", "n", "p", "q", "grid_per_axis", "tol",
                        "hyperplane_pairs", "hyperplane_grid"},
                       {"seed", "manifold", "p", "q"}, "parameters");
  std::uint64_t seed = params.value("seed", 0ull);
  std::string kind = params["manifold"].get<std::string>();
  int n = params.value("n", 2);
  Vec p = detail::to_vec(params["p"]);
  Vec q = detail::to_vec(params["q"]);
  int grid_per_axis = params.value("grid_per_axis", 128);
  double tol = params.value("tol", 1e-2);
  int hp_pairs = params.value("hyperplane_pairs", 100);
  int hp_grid = params.value("hyperplane_grid", 100);

  std::unique_ptr<ModelManifold> man;
  std::vector<Vec> grid;
  if (kind == "round-sphere") {
    man = std::make_unique<RoundSphere>(n);
    if (n != 2) throw ConfigError("round-sphere grids implemented for n=2", "n");
    grid = sphere_polar_grid(grid_per_axis);
  } else if (kind == "flat-torus") {
    man = std::make_unique<FlatTorus>(n);
    grid = torus_grid(static_cast<const FlatTorus&>(*man), grid_per_axis);
  } else {
    throw ConfigError("unknown manifold '" + kind + "'", "manifold");
  }

  // evaluated lazily inside the first check so that domain errors are
  // attributed to a named check (exit code 3), not to config handling
  std::optional<TwistedConditions> tc_cache;
  auto conditions = [&]() -> const TwistedConditions& {
    if (!tc_cache) tc_cache = twisted_conditions_check(*man, p, q, grid, tol);
    return *tc_cache;
  };

  detail::CheckRunner runner(report);
  runner.run("no interior critical points", "condition (1.8)", [&](CheckRecord& rec) {
    const TwistedConditions& tc = conditions();
    rec.satisfied = tc.cond_18;
    rec.margin = tc.cond_18 ? 0.0 : -static_cast<double>(tc.witnesses_18.size());
    json w = json::array();
    for (std::size_t i = 0; i < tc.witnesses_18.size() && i < 8; ++i)
      w.push_back(detail::from_vec(tc.witnesses_18[i]));
    rec.details = json{{"witnesses", w}};
  });
  runner.run("obtuse angles on the bisector", "condition (1.9)", [&](CheckRecord& rec) {
    const TwistedConditions& tc = conditions();
    rec.satisfied = tc.cond_19;
    rec.margin = tc.worst_angle - kPi / 2.0;
    json w = json::array();
    for (std::size_t i = 0; i < tc.witnesses_19.size() && i < 8; ++i)
      w.push_back(detail::from_vec(tc.witnesses_19[i]));
    rec.details = json{{"worst_angle", tc.worst_angle}, {"witnesses", w}};
  });
  runner.run("bisector trichotomy", "trichotomy", [&](CheckRecord& rec) {
    std::size_t in_p = 0, in_q = 0, in_e = 0;
    for (const Vec& x : grid) {
      double dp = man->distance(p, x), dq = man->distance(q, x);
      if (std::abs(dp - dq) <= tol) ++in_e;
      else if (dp < dq) ++in_p;
      else ++in_q;
    }
    rec.satisfied = (in_p + in_q + in_e) == grid.size();
    rec.margin = static_cast<double>(in_e);
    rec.details = json{{"D_p", in_p}, {"D_q", in_q}, {"E", in_e}};
  });
  runner.run("hyperplane-fixing pairs stay full rank", "hyperplane rank",
             [&](CheckRecord& rec) {
               double worst = std::numeric_limits<double>::infinity();
               int counter = 0;
               for (int dim = 2; dim <= 5; ++dim) {
                 for (int k = 0; k < hp_pairs / 4; ++k, ++counter) {
                   Rng rng = Rng::derived(seed ^ 0x4a4au, counter);
                   auto draw = [&]() {
                     Mat A = Mat::Identity(dim, dim);
                     for (int i = 0; i < dim - 1; ++i) A(i, dim - 1) = rng.uniform(-2.0, 2.0);
                     A(dim - 1, dim - 1) = rng.uniform(0.1, 3.0);
                     return A;
                   };
                   worst = std::min(worst, hyperplane_convex_rank_margin(draw(), draw(), hp_grid));
                 }
               }
               rec.satisfied = worst > 0.0;
               rec.margin = worst;
             });
}

inline void run_gram_dependence(const json& params, Report& report) {
  detail::require_keys(params, {"eps_list"}, {}, "parameters");
  std::vector<double> eps_list = params.contains("eps_list")
                                     ? params["eps_list"].get<std::vector<double>>()
                                     : std::vector<double>{0.5, 0.3, 0.1};
  detail::CheckRunner runner(report);
  for (double eps : eps_list) {
    runner.run("gram deviation (eps=" + std::to_string(eps) + ")", "gram dependence",
               [&](CheckRecord& rec) {
                 auto vs = near_orthonormal_dependent(eps);
                 double worst = 0.0;
                 for (std::size_t i = 0; i < vs.size(); ++i)
                   for (std::size_t j = 0; j < vs.size(); ++j)
                     worst = std::max(worst, std::abs(vs[i].dot(vs[j]) - (i == j ? 1.0 : 0.0)));
                 rec.margin = eps - worst;
                 rec.satisfied = rec.margin > 0.0;
                 rec.details = json{{"count", vs.size()}, {"max_deviation", worst}};
               });
    runner.run("rank defect (eps=" + std::to_string(eps) + ")", "rank defect",
               [&](CheckRecord& rec) {
                 auto vs = near_orthonormal_dependent(eps);
                 Mat M(vs.size(), vs[0].size());
                 for (std::size_t i = 0; i < vs.size(); ++i) M.row(i) = vs[i];
                 int rank = numerical_rank(M);
                 int expected = static_cast<int>(vs.size()) - 1;
                 rec.satisfied = rank == expected;
                 rec.margin = static_cast<double>(expected - rank);
                 rec.details = json{{"rank", rank}, {"expected", expected}};
               });
  }
}

// ---------------------------------------------------------------------------

inline Report run(const json& config) {
  detail::require_keys(config, {"experiment", "parameters", "output"}, {"experiment"},
                       "config");
  std::string experiment = config["experiment"].get<std::string>();
  json params = config.value("parameters", json::object());
  if (config.contains("output"))
    detail::require_keys(config["output"], {"report", "csv"}, {}, "output");

  Report report;
  report.experiment = experiment;
  report.config_echo = config;

  if (experiment == "clarke-examples") run_clarke_examples(params, report);
  else if (experiment == "mollify-bounds") run_mollify_bounds(params, report);
  else if (experiment == "sigma-conditions") run_sigma_conditions(params, report);
  else if (experiment == "extension-certificates") run_extension_certificates(params, report);
  else if (experiment == "twisted-hypotheses") run_twisted_hypotheses(params, report);
  else if (experiment == "gram-dependence") run_gram_dependence(params, report);
  else throw ConfigError("unknown experiment '" + experiment + "'", "experiment");

  return report;
}

inline int exit_code_for(const Report& report) {
  if (report.any_error) return 3;
  return report.all_satisfied ? 0 : 1;
}

inline json report_to_json(const Report& report) {
  json out;
  out["tool"] = "nsg";
  out["version"] = kVersion;
  out["platform"] = platform_note();
  out["experiment"] = report.experiment;
  out["config"] = report.config_echo;
  json checks = json::array();
  for (const CheckRecord& rec : report.checks) {
    json c;
    c["name"] = rec.name;
    c["anchor"] = rec.anchor;
    c["satisfied"] = rec.satisfied;
    c["margin"] = rec.margin;
    c["runtime_ms"] = rec.runtime_ms;
    if (!rec.details.is_null()) c["details"] = rec.details;
    if (!rec.error.empty()) c["error"] = rec.error;
    checks.push_back(c);
  }
  out["checks"] = checks;
  out["all_satisfied"] = report.all_satisfied;
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  return out + "\"";
}

inline std::string report_to_csv(const Report& report) {
  std::ostringstream os;
  os.precision(17);
  os << "t,quantity,value,geodesic_id,seed\r\n";
  for (const CurveRow& row : report.curve_rows)
    os << row.t << "," << csv_escape(row.quantity) << "," << row.value << ","
       << row.geodesic_id << "," << row.seed << "\r\n";
  return os.str();
}

inline std::string list_experiments() {
  return
      "clarke-examples: worked generalized-gradient and differential examples;"
      " checks interval endpoints, criticality, nonsingularity margin, cone certificate,"
      " increasing map\n"
      "mollify-bounds: smoothing error bounds on model manifolds; checks sup-error bound,"
      " error monotonicity, mollifier normalization, gradient consistency, obtuse"
      " gradients, zero-level containment\n"
      "sigma-conditions: checks (1.5)/(1.6)/(1.7) for a sphere self-map family, plus the"
      " curvature identity and the alpha condition\n"
      "extension-certificates: radial-extension certificates; checks gronwall comparison,"
      " comparison chain, alpha-condition nonsingularity, bi-Lipschitz sandwich\n"
      "twisted-hypotheses: checks (1.8)/(1.9) for a point pair on a model manifold, the"
      " bisector trichotomy, and hyperplane rank margins\n"
      "gram-dependence: \xC2\xA7" "3.4 construction - near-orthonormal frames with a rank defect\n";
}

inline json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json config;
  try {
    in >> config;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse failure: ") + e.what(), "(file)");
  }
  return config;
}

}  // namespace nsg::harness
