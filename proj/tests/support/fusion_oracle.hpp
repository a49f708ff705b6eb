#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

// Brute-force contribution weights over plain member x cell arrays.
namespace oracle {

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<double> contribution_weights(const std::vector<std::vector<double>>& members, double alpha,
                                                double fill = 0.5) {
  const std::size_t n = members.size(), cells = members.front().size();
  std::vector<double> med(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    std::vector<double> col;
    for (const auto& m : members) col.push_back(m[c]);
    med[c] = median_of(col);
  }
  std::vector<double> s1(n), s2(n);
  for (std::size_t k = 0; k < n; ++k) {
    double agree = 0.0, mag = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      const double a = members[k][c], b = med[c];
      if ((a > 0 && b > 0) || (a < 0 && b < 0) || (a == 0 && b == 0)) agree += 1.0;
      mag += std::fabs(a);
    }
    s1[k] = agree / static_cast<double>(cells);
    s2[k] = mag / static_cast<double>(cells);
  }
  auto norm = [&](std::vector<double> s) {
    const double lo = *std::min_element(s.begin(), s.end()), hi = *std::max_element(s.begin(), s.end());
    for (double& x : s) x = hi == lo ? fill : (x - lo) / (hi - lo);
    return s;
  };
  const auto n1 = norm(s1), n2 = norm(s2);
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) total += (w[k] = alpha * n1[k] + (1.0 - alpha) * n2[k]);
  for (double& x : w) x = total == 0.0 ? 1.0 / static_cast<double>(n) : x / total;
  return w;
}

}  // namespace oracle
