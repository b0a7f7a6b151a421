#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace nsg {

// Counter-based deterministic RNG (splitmix64 core). All randomized
// operations in the library take an explicit seed and derive per-item
// streams by counter, so parallel evaluation cannot change results.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // burn-in decorrelates trivially related seeds
    next_u64();
    next_u64();
  }

  // Independent stream for item `counter` of a seeded family.
  static Rng derived(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t s = seed;
    s ^= 0x9e3779b97f4a7c15ull + (counter << 6) + (counter >> 2);
    Rng r(s);
    r.state_ += counter * 0xd1342543de82ef95ull;
    r.next_u64();
    return r;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Eigen::VectorXd gaussian(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Eigen::VectorXd unit(int n) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      Eigen::VectorXd v = gaussian(n);
      double nv = v.norm();
      if (nv > 1e-12) return v / nv;
    }
    throw std::runtime_error("Rng::unit: degenerate draws");
  }

  // uniform in the closed unit ball
  Eigen::VectorXd in_unit_ball(int n) {
    return unit(n) * std::pow(uniform(), 1.0 / n);
  }

  // flat Dirichlet (uniform on the simplex)
  std::vector<double> dirichlet(int m) {
    std::vector<double> w(m);
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
      w[i] = -std::log(1.0 - uniform());
      sum += w[i];
    }
    for (double& x : w) x /= sum;
    return w;
  }

 private:
  std::uint64_t state_;
};

}  // namespace nsg
