#include <catch2/catch_amalgamated.hpp>

#include "nsg/mollify.hpp"
#include "test_oracles.hpp"

using namespace nsg;

namespace {
Vec v1(double a) {
  Vec v(1);
  v << a;
  return v;
}
Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}
Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}
const Vec kNorth = v3(0, 0, 1);
const Vec kSouth = v3(0, 0, -1);
}  // namespace

TEST_CASE("mollifier density support and center value") {
  Mollifier m = make_mollifier(0.3, 2);
  REQUIRE(mollifier_density(m, v2(0.3, 0.0)) == 0.0);
  REQUIRE(mollifier_density(m, v2(0.4, 0.1)) == 0.0);

  Mollifier m1 = make_mollifier(1.0, 1);
  REQUIRE(mollifier_density(m1, v1(0.0)) ==
          Catch::Approx(m1.normalizer * std::exp(-1.0)).margin(1e-15));
}

TEST_CASE("mollifier integrates to one against the polar oracle") {
  for (int dim = 1; dim <= 3; ++dim)
    for (double eps : {0.01, 0.05, 0.1}) {
      Mollifier m = make_mollifier(eps, dim);
      double total = nsg_test::polar_density_integral(dim, eps, m.normalizer);
      REQUIRE(total == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("gauss rule integrates the density to machine-level accuracy") {
  for (int dim = 1; dim <= 3; ++dim)
    REQUIRE(std::abs(integrate_unit_density(make_gauss_rule(dim)) - 1.0) < 1e-8);
  REQUIRE_THROWS_AS(make_gauss_rule(4), std::invalid_argument);
}

TEST_CASE("monte carlo rule covers dimensions four and five") {
  for (int dim : {4, 5}) {
    QuadratureRule rule = make_monte_carlo_rule(dim, 200000, 11);
    REQUIRE(std::abs(integrate_unit_density(rule) - 1.0) < 1e-4);
  }
  REQUIRE_THROWS_AS(make_monte_carlo_rule(6, 1000, 0), std::invalid_argument);
}

TEST_CASE("partition of unity sums to one with gradients summing to zero") {
  FlatTorus torus(2);
  PartitionOfUnity pou = make_partition(torus, torus.default_cover());
  Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    Vec q = torus.random_point(rng);
    auto psi = pou.values(q);
    double total = 0.0;
    for (std::size_t i = 0; i < psi.size(); ++i) {
      REQUIRE(psi[i] >= 0.0);
      REQUIRE(psi[i] <= 1.0 + 1e-12);
      // support stays inside the chart ball
      if (psi[i] > 0.0)
        REQUIRE(torus.distance(pou.charts[i].center, q) <
                pou.charts[i].support_radius);
      total += psi[i];
    }
    REQUIRE(total == Catch::Approx(1.0).margin(1e-9));

    std::vector<double> vals;
    std::vector<Vec> grads;
    pou.values_and_gradients(q, vals, grads);
    Vec gsum = Vec::Zero(2);
    for (const Vec& g : grads) gsum += g;
    REQUIRE(gsum.norm() < 1e-10);
  }
}

TEST_CASE("smoothing a constant reproduces it exactly") {
  FlatTorus torus(2);
  PartitionOfUnity pou = make_partition(torus, torus.default_cover());
  QuadratureRule quad = make_gauss_rule(2);
  ManifoldFunction c{[](const Vec&) { return 4.25; }, 0.0};
  SmoothedFunction sf = smooth_function(c, pou, 0.05, quad);
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    Vec q = torus.random_point(rng);
    REQUIRE(evaluate(sf, q) == Catch::Approx(4.25).margin(1e-12));
    REQUIRE(smoothed_gradient(sf, q).norm() < 1e-10);
  }
}

TEST_CASE("smoothing is exact on linear chart functions") {
  FlatTorus torus(2);
  Vec center = v2(0.5, 0.5);
  PartitionOfUnity pou = make_partition(torus, {center}, 0.49, 0.35);
  QuadratureRule quad = make_gauss_rule(2);
  Vec a = v2(0.7, -0.3);
  ManifoldFunction lin{[&](const Vec& q) { return a.dot(torus.log_point(center, q)); },
                       1.0};
  SmoothedFunction sf = smooth_function(lin, pou, 0.05, quad);
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    Vec q = torus.exp_point(center, 0.25 * rng.in_unit_ball(2));
    REQUIRE(evaluate(sf, q) == Catch::Approx(lin.eval(q)).margin(1e-10));
    REQUIRE((smoothed_gradient(sf, q) - a).norm() < 1e-8);
  }
}

TEST_CASE("epsilon larger than the chart margin is rejected by name") {
  FlatTorus torus(2);
  PartitionOfUnity pou = make_partition(torus, torus.default_cover());
  ManifoldFunction c{[](const Vec&) { return 0.0; }, 0.0};
  REQUIRE_THROWS_WITH(smooth_function(c, pou, 0.2, make_gauss_rule(2)),
                      Catch::Matchers::ContainsSubstring("chart"));
}

TEST_CASE("distance smoothing obeys the sup-error bound on the torus") {
  FlatTorus torus(2);
  PartitionOfUnity pou = make_partition(torus, torus.default_cover());
  QuadratureRule quad = make_gauss_rule(2);
  Vec p = v2(0, 0);
  ManifoldFunction dp{[&](const Vec& x) { return torus.distance(p, x); }, 1.0};

  std::vector<Vec> grid = torus_grid(torus, 48);
  double prev_err = -1.0;
  for (double eps : {0.1, 0.05}) {
    SmoothedFunction sf = smooth_function(dp, pou, eps, quad);
    SupErrorReport rep = sup_error_report(sf, dp, grid);
    REQUIRE(rep.holds);
    REQUIRE(rep.bound == Catch::Approx(eps).margin(1e-12));
    REQUIRE(rep.max_abs_err <= eps);
    if (prev_err >= 0.0) REQUIRE(rep.max_abs_err <= prev_err + 1e-9);
    prev_err = rep.max_abs_err;

    // pointwise example on a smooth stratum
    Vec q = v2(0.3, 0.0);
    REQUIRE(std::abs(evaluate(sf, q) - 0.3) <= eps);
  }
}

TEST_CASE("sup-error bound holds for the distance on a sphere chart") {
  RoundSphere sphere(2);
  // sampled chordal ratios certify the chart Lipschitz constant is <= 1
  Rng rng(31);
  Vec center = v3(1, 0, 0);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    Vec a = rng.in_unit_ball(2), b = rng.in_unit_ball(2);
    double den = (a - b).norm();
    if (den < 1e-9) continue;
    worst = std::max(worst,
                     sphere.distance(sphere.exp_point(center, a),
                                     sphere.exp_point(center, b)) / den);
  }
  REQUIRE(worst <= 1.0 + 1e-6);

  PartitionOfUnity pou = make_partition(sphere, sphere.default_cover());
  QuadratureRule quad = make_gauss_rule(2);
  ManifoldFunction dn{[&](const Vec& x) { return sphere.distance(kNorth, x); }, 1.0};
  SmoothedFunction sf = smooth_function(dn, pou, 0.05, quad);
  SupErrorReport rep = sup_error_report(sf, dn, sphere_band_grid(0.4, 24, 7));
  REQUIRE(rep.holds);
}

TEST_CASE("smoothed gradient tracks the analytic distance gradient") {
  FlatTorus torus(2);
  PartitionOfUnity pou = make_partition(torus, torus.default_cover());
  QuadratureRule quad = make_gauss_rule(2);
  Vec p = v2(0, 0);
  ManifoldFunction dp{[&](const Vec& x) { return torus.distance(p, x); }, 1.0};
  SmoothedFunction sf = smooth_function(dp, pou, 0.01, quad);
  Rng rng(6);
  for (int k = 0; k < 40; ++k) {
    Vec x = v2(rng.uniform(0.08, 0.40), rng.uniform(0.08, 0.40));
    Vec grad = smoothed_gradient(sf, x);
    Vec exact = -torus.minimal_directions(p, x)[0];
    REQUIRE((grad - exact).norm() < 1e-3);
  }
}

TEST_CASE("smoothed gradient agrees with finite differences of evaluate") {
  FlatTorus torus(2);
  PartitionOfUnity pou = make_partition(torus, torus.default_cover());
  QuadratureRule quad = make_gauss_rule(2);
  ManifoldFunction f{[](const Vec& x) {
                       return std::cos(2.0 * kPi * x[0]) * std::cos(2.0 * kPi * x[1]);
                     },
                     2.0 * kPi * std::sqrt(2.0)};
  SmoothedFunction sf = smooth_function(f, pou, 0.05, quad);
  Rng rng(8);
  const double h = 1e-5;
  for (int k = 0; k < 100; ++k) {
    Vec q = torus.random_point(rng);
    Vec grad = smoothed_gradient(sf, q);
    for (int c = 0; c < 2; ++c) {
      Vec dq = Vec::Zero(2);
      dq[c] = h;
      double fd = (evaluate(sf, torus.exp_point(q, dq)) -
                   evaluate(sf, torus.exp_point(q, -dq))) /
                  (2.0 * h);
      REQUIRE(std::abs(grad[c] - fd) < 1e-4 * f.lip);
    }
  }
}

TEST_CASE("transported smoothed gradient stays near the subdifferential hull") {
  // at a cut-locus point the smoothed gradient approaches the hull of the
  // two one-sided gradients; bisection picks the epsilon that gets within 0.1
  FlatTorus torus(2);
  PartitionOfUnity pou = make_partition(torus, torus.default_cover());
  QuadratureRule quad = make_gauss_rule(2);
  Vec p = v2(0, 0);
  ManifoldFunction dp{[&](const Vec& x) { return torus.distance(p, x); }, 1.0};
  Vec x = v2(0.5, 0.2);

  std::vector<Vec> hull;
  for (const Vec& d : torus.minimal_directions(p, x)) hull.push_back(-d);
  REQUIRE(hull.size() == 2);

  const double eta = 0.1;
  auto contained = [&](double eps) {
    SmoothedFunction sf = smooth_function(dp, pou, eps, quad);
    Vec g = smoothed_gradient(sf, x);  // transport on the torus is trivial
    std::vector<Vec> shifted;
    for (const Vec& hpt : hull) shifted.push_back(hpt - g);
    return min_norm_in_hull(shifted, 1e-7).distance <= eta;
  };

  double lo = 0.0, hi = 0.13;
  for (int step = 0; step < 12; ++step) {
    double mid = 0.5 * (lo + hi);
    if (contained(mid)) lo = mid;
    else hi = mid;
  }
  REQUIRE(lo > 0.0);
  REQUIRE(contained(lo));
  REQUIRE(contained(lo / 2.0));
}

TEST_CASE("map smoothing: constants, chart embedding, lipschitz report") {
  FlatTorus torus(2);
  Vec center = v2(0.5, 0.5);
  PartitionOfUnity pou = make_partition(torus, {center}, 0.49, 0.35);
  QuadratureRule quad = make_gauss_rule(2);

  ManifoldMap constant{[](const Vec&) { return v2(3.0, -1.0); }, 2, 0.0};
  SmoothedMap smc = smooth_map(constant, pou, 0.05, quad);
  REQUIRE((evaluate(smc, center) - v2(3.0, -1.0)).norm() < 1e-12);

  // isometric chart embedding
  ManifoldMap embed{[&](const Vec& q) { return torus.log_point(center, q); }, 2, 1.0};
  SmoothedMap sme = smooth_map(embed, pou, 0.05, quad);
  std::vector<Vec> grid;
  Rng rng(12);
  for (int k = 0; k < 100; ++k) grid.push_back(torus.exp_point(center, 0.25 * rng.in_unit_ball(2)));
  LipschitzReport rep = lipschitz_report(sme, grid, 0.01);
  REQUIRE(rep.holds);
  REQUIRE(rep.sup_directional <= 1.0 + 1e-9);
}

TEST_CASE("lipschitz inflation stays below (1+eta) for the glued sphere map") {
  RoundSphere sphere(2);
  PartitionOfUnity pou = make_partition(sphere, sphere.default_cover());
  QuadratureRule quad = make_gauss_rule(2);

  // twist the southern hemisphere only; Lipschitz but kinked at the equator
  const double a = 0.5;
  auto glued = [a](const Vec& v) {
    double theta = a * std::min(v[2], 0.0);
    Vec out = v;
    out[0] = std::cos(theta) * v[0] - std::sin(theta) * v[1];
    out[1] = std::sin(theta) * v[0] + std::cos(theta) * v[1];
    return out;
  };
  // estimate Lip by pair sampling first
  Rng rng(21);
  double lip = 1.0;
  for (int k = 0; k < 200000; ++k) {
    Vec u = rng.unit(3), v = rng.unit(3);
    double den = (u - v).norm();
    if (den < 1e-9) continue;
    lip = std::max(lip, (glued(u) - glued(v)).norm() / den);
  }
  ManifoldMap F{glued, 3, lip};
  SmoothedMap smF = smooth_map(F, pou, 0.02, quad);
  LipschitzReport rep = lipschitz_report(smF, sphere_band_grid(0.3, 32, 9), 0.05);
  REQUIRE(rep.holds);

  // the map-valued sup-error bound holds across the same band
  SupErrorReport sup = sup_error_report(smF, F, sphere_band_grid(0.3, 32, 9));
  REQUIRE(sup.holds);
  REQUIRE(sup.bound == Catch::Approx(0.02 * lip).margin(1e-12));
}

TEST_CASE("immersion margin of a linear full-rank map") {
  FlatTorus torus(2);
  Vec center = v2(0.5, 0.5);
  PartitionOfUnity pou = make_partition(torus, {center}, 0.49, 0.35);
  QuadratureRule quad = make_gauss_rule(2);
  Mat L(2, 2);
  L << 1.2, 0.3, -0.2, 0.8;
  ManifoldMap lin{[&](const Vec& q) { return Vec(L * torus.log_point(center, q)); }, 2,
                  2.0};
  SmoothedMap sm = smooth_map(lin, pou, 0.02, quad);

  Eigen::JacobiSVD<Mat> svd(L, Eigen::ComputeFullV);
  double smin = svd.singularValues().minCoeff();
  std::vector<Vec> dirs;
  for (int k = 0; k < 16; ++k) {
    double ang = 2.0 * kPi * k / 16;
    dirs.push_back(v2(std::cos(ang), std::sin(ang)));
  }
  dirs.push_back(svd.matrixV().col(1));  // singular direction included
  double margin = immersion_margin(sm, center, 0.05, dirs);
  REQUIRE(margin == Catch::Approx(smin).margin(1e-6));
}

TEST_CASE("immersion margin of the worked planar map") {
  FlatTorus torus(2);
  Vec center = v2(0, 0);
  PartitionOfUnity pou = make_partition(torus, {center}, 0.49, 0.35);
  QuadratureRule quad = make_gauss_rule(2);
  ManifoldMap F{[&](const Vec& q) {
                  Vec x = torus.log_point(center, q);
                  return v2(std::abs(x[0]) + x[1], 2.0 * x[0] + std::abs(x[1]));
                },
                2, 3.0};
  SmoothedMap sm = smooth_map(F, pou, 0.01, quad);

  // certificate for u = (1, 0) gives delta = 2; the floor delta / 3 is
  // per-direction
  double margin_e1 = immersion_margin(sm, center, 0.1, {v2(1.0, 0.0)});
  REQUIRE(margin_e1 >= 2.0 / 3.0);
  REQUIRE(margin_e1 == Catch::Approx(2.0).margin(1e-3));

  // over a direction grid the floor is the worst certificate / 3; the worst
  // grid direction here has delta ~ 0.541 (computed from the corner family)
  std::vector<Vec> dirs;
  double worst_delta = 1e300;
  std::vector<Mat> corners;
  for (double s : {1.0, -1.0})
    for (double t : {1.0, -1.0}) {
      Mat M(2, 2);
      M << s, 1.0, 2.0, t;
      corners.push_back(M);
    }
  GeneralizedDifferential exact;
  exact.point = center;
  exact.samples = corners;
  for (int k = 0; k < 16; ++k) {
    double ang = 2.0 * kPi * k / 16;
    Vec u = v2(std::cos(ang), std::sin(ang));
    dirs.push_back(u);
    worst_delta = std::min(worst_delta, cone_certificate(exact, UnitVector(u)).delta);
  }
  double margin = immersion_margin(sm, center, 0.1, dirs);
  REQUIRE(margin >= worst_delta / 3.0);
  REQUIRE(margin == Catch::Approx(worst_delta).margin(0.05));
}

TEST_CASE("immersion margin demands a certificate") {
  FlatTorus torus(1);
  Vec center = v1(0.0);
  PartitionOfUnity pou = make_partition(torus, {center}, 0.49, 0.35);
  QuadratureRule quad = make_gauss_rule(1);
  ManifoldMap fold{[&](const Vec& q) { return v1(std::abs(torus.log_point(center, q)[0])); },
                   1, 1.0};
  SmoothedMap sm = smooth_map(fold, pou, 0.02, quad);
  REQUIRE_THROWS_WITH(immersion_margin(sm, center, 0.05, {v1(1.0)}),
                      Catch::Matchers::ContainsSubstring("certificate missing"));
}

TEST_CASE("zero level scan") {
  RoundSphere sphere(2);
  PartitionOfUnity pou = make_partition(sphere, sphere.default_cover());
  QuadratureRule quad = make_gauss_rule(2);
  ManifoldFunction diff{[&](const Vec& x) {
                          return sphere.distance(kNorth, x) - sphere.distance(kSouth, x);
                        },
                        2.0};
  SmoothedFunction sf = smooth_function(diff, pou, 0.05, quad);
  auto zeros = zero_level_scan(sf, sphere_polar_grid(64), 0.02);
  REQUIRE_FALSE(zeros.empty());
  for (const Vec& z : zeros)
    REQUIRE(std::abs(kPi / 2.0 - sphere.distance(kNorth, z)) < 0.06);

  ManifoldFunction shifted{[&](const Vec& x) { return diff.eval(x) + 10.0; }, 2.0};
  SmoothedFunction sfs = smooth_function(shifted, pou, 0.05, quad);
  REQUIRE(zero_level_scan(sfs, sphere_polar_grid(16), 0.02).empty());

  ManifoldFunction zero{[](const Vec&) { return 0.0; }, 0.0};
  SmoothedFunction sfz = smooth_function(zero, pou, 0.05, quad);
  REQUIRE(zero_level_scan(sfz, sphere_polar_grid(16), 0.02).size() ==
          sphere_polar_grid(16).size());
}

TEST_CASE("obtuse gradients across the equator band") {
  RoundSphere sphere(2);
  ObtuseReport rep =
      obtuse_gradient_report(sphere, kNorth, kSouth, sphere_band_grid(0.2, 32, 7), 0.05);
  REQUIRE(rep.holds);
  REQUIRE(rep.min_angle > kPi - 0.05);  // antipodal gradients
}

TEST_CASE("obtuse gradients across the torus bisector") {
  FlatTorus torus(2);
  Vec p = v2(0, 0), q = v2(0.5, 0);
  // band around the bisector line x1 = 0.25 with |x2| <= 0.2; beyond that
  // height the geodesic angles stop being obtuse
  std::vector<Vec> band;
  for (int i = -10; i <= 10; ++i)
    for (int j = -2; j <= 2; ++j)
      band.push_back(FlatTorus::wrap(v2(0.25 + j * 0.01, i * 0.02)));
  ObtuseReport rep = obtuse_gradient_report(torus, p, q, band, 0.02);
  REQUIRE(rep.holds);
}

TEST_CASE("obtuse report rejects degenerate hypotheses") {
  FlatTorus torus(2);
  REQUIRE_THROWS_AS(
      obtuse_gradient_report(torus, v2(0, 0), v2(0, 0), {v2(0.25, 0.1)}, 0.02),
      std::domain_error);
  // a point where the directions to p and q are parallel violates the premise
  RoundSphere sphere(2);
  Vec q = v3(0, std::sin(1.0), std::cos(1.0));
  REQUIRE_THROWS_WITH(
      obtuse_gradient_report(sphere, kNorth, q, {v3(0, std::sin(2.0), std::cos(2.0))}, 0.02),
      Catch::Matchers::ContainsSubstring("hypothesis fails"));
}

TEST_CASE("projection to the sphere") {
  REQUIRE((project_to_sphere(v3(2, 0, 0)).coords - v3(1, 0, 0)).norm() < 1e-15);
  REQUIRE((project_to_sphere(v3(0.8, 0.6, 0)).coords - v3(0.8, 0.6, 0)).norm() < 1e-15);
  REQUIRE_THROWS_AS(project_to_sphere(v3(0.1, 0, 0)), std::domain_error);
}

TEST_CASE("smoothing works on a three-dimensional torus chart") {
  FlatTorus torus(3);
  Vec center = Vec::Constant(3, 0.5);
  PartitionOfUnity pou = make_partition(torus, {center}, 0.49, 0.35);
  QuadratureRule quad = make_gauss_rule(3);
  Vec a(3);
  a << 0.4, -0.2, 0.9;
  ManifoldFunction lin{[&](const Vec& q) { return a.dot(torus.log_point(center, q)); },
                       1.0};
  SmoothedFunction sf = smooth_function(lin, pou, 0.05, quad);
  Rng rng(91);
  for (int k = 0; k < 10; ++k) {
    Vec q = torus.exp_point(center, 0.2 * rng.in_unit_ball(3));
    REQUIRE(evaluate(sf, q) == Catch::Approx(lin.eval(q)).margin(1e-9));
    REQUIRE((smoothed_gradient(sf, q) - a).norm() < 1e-7);
  }
}

TEST_CASE("monte carlo smoothing handles a four-dimensional chart") {
  FlatTorus torus(4);
  Vec center = Vec::Constant(4, 0.5);
  PartitionOfUnity pou = make_partition(torus, {center}, 0.49, 0.35);
  QuadratureRule quad = make_monte_carlo_rule(4, 200000, 17);
  Vec a(4);
  a << 0.3, -0.6, 0.2, 0.5;
  ManifoldFunction lin{[&](const Vec& q) { return a.dot(torus.log_point(center, q)); },
                       1.0};
  SmoothedFunction sf = smooth_function(lin, pou, 0.05, quad);
  Rng rng(18);
  for (int k = 0; k < 5; ++k) {
    Vec q = torus.exp_point(center, 0.2 * rng.in_unit_ball(4));
    // constants are exact under the self-normalized rule; linear terms carry
    // only the Monte Carlo mean error of the nodes
    REQUIRE(evaluate(sf, q) == Catch::Approx(lin.eval(q)).margin(1e-3));
  }
  ManifoldFunction c{[](const Vec&) { return -2.5; }, 0.0};
  SmoothedFunction sfc = smooth_function(c, pou, 0.05, quad);
  REQUIRE(evaluate(sfc, center) == Catch::Approx(-2.5).margin(1e-12));
}
