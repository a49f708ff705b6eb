#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "capeskit/grid.hpp"

namespace fixtures {

inline capeskit::GridSpec grid(int nlat, int nlon) { return {nlat, nlon, -10.0, 2.5, 100.0, 2.5}; }

/// Uniform values in [lo, hi).
inline std::vector<double> uniform(std::size_t n, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

/// Anomalies spanning every category band, with some exact zeros and exact
/// band edges mixed in.
inline capeskit::AnomalyField random_anomaly(const capeskit::GridSpec& spec, std::mt19937_64& rng) {
  static constexpr double kEdges[] = {0.0, 20.0, -20.0, 50.0, -50.0, 100.0, -100.0};
  std::uniform_int_distribution<int> pick(0, 9);
  std::uniform_int_distribution<int> edge(0, 6);
  std::uniform_real_distribution<double> val(-180.0, 180.0);
  std::vector<double> v(spec.cells());
  for (double& x : v) x = pick(rng) == 0 ? kEdges[edge(rng)] : val(rng);
  return capeskit::AnomalyField(spec, std::move(v));
}

inline capeskit::GridField random_field(const capeskit::GridSpec& spec, capeskit::Units units, double lo, double hi,
                                        std::mt19937_64& rng) {
  return capeskit::GridField(spec, units, uniform(spec.cells(), lo, hi, rng));
}

}  // namespace fixtures
