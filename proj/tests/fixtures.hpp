#pragma once

// Shared test instances.

#include <random>
#include <vector>

#include "superfed/data.hpp"
#include "superfed/objective.hpp"

namespace fixtures {

// N random strongly convex quadratics in d dimensions with spread-out centers
// and offsets, uniform weights.
inline superfed::QuadraticObjective random_quadratics(std::uint64_t seed, std::size_t n = 5,
                                                      std::size_t d = 10) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> off(0.0, 2.0);
  std::vector<superfed::QuadraticDevice> devices;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<std::vector<double>> m(d, std::vector<double>(d));
    for (auto& row : m) {
      for (auto& v : row) v = z(g);
    }
    superfed::QuadraticDevice dev;
    dev.hessian.assign(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < d; ++r) s += m[i][r] * m[j][r];
        dev.hessian[i][j] = s / static_cast<double>(d) + (i == j ? 0.1 : 0.0);
      }
    }
    dev.center.resize(d);
    for (auto& v : dev.center) v = 2.0 * z(g);
    dev.offset = off(g);
    dev.weight = 1.0 / static_cast<double>(n);
    devices.push_back(std::move(dev));
  }
  return superfed::QuadraticObjective(std::move(devices));
}

// Gaussian-mixture population with antithetic samples (x, 2 mu - x), so each
// device's empirical mean is mu_k up to rounding.
inline superfed::Population antithetic_gaussians(
    const std::vector<std::array<double, 2>>& means, std::size_t half, std::uint64_t seed) {
  const auto base = superfed::gen_gaussian_mixture(means, half, seed);
  std::vector<superfed::DeviceShard> shards = base.shards();
  for (std::size_t k = 0; k < shards.size(); ++k) {
    auto& ex = shards[k].examples;
    for (std::size_t i = 0; i < half; ++i) {
      const auto& f = ex[i].features;
      ex.push_back({{2.0 * means[k][0] - f[0], 2.0 * means[k][1] - f[1]}, 0});
    }
  }
  return superfed::Population(std::move(shards), base.num_classes());
}

}  // namespace fixtures
