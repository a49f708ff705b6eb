#include "capeskit/verify.hpp"

#include <algorithm>
#include <cmath>

#include "capeskit/error.hpp"
#include "capeskit/reduce.hpp"

namespace capeskit::verify {

AnomalyCategory classify(double a) {
  if (!std::isfinite(a)) throw DomainError("cannot classify a non-finite anomaly");
  const double mag = std::fabs(a);
  AnomalyCategory c;
  c.sign = a > 0.0 ? Sign::positive : (a < 0.0 ? Sign::negative : Sign::zero);
  if (mag < kFirstLevelMin)
    c.level = Level::normal;
  else if (mag <= kFirstLevelMax)
    c.level = Level::first;
  else
    c.level = Level::second;
  c.extreme = mag > kExtremeMin;
  return c;
}

namespace {

void check_mask(const GridSpec& spec, const CellMask* mask) {
  if (mask) require_compatible(spec, mask->spec(), "field vs mask");
}

std::size_t sample_count(std::size_t cells, const CellMask* mask) {
  return mask ? mask->count() : cells;
}

}  // namespace

PsBreakdown ps_breakdown(const AnomalyField& forecast, const AnomalyField& observed,
                         const CellMask* mask) {
  require_compatible(forecast.spec(), observed.spec(), "forecast vs observation");
  check_mask(forecast.spec(), mask);
  const auto f = forecast.values();
  const auto o = observed.values();
  const auto cells = static_cast<std::ptrdiff_t>(f.size());

  std::int64_t n = 0, n0 = 0, n1 = 0, n2 = 0, m = 0;
#pragma omp parallel for schedule(static) reduction(+ : n, n0, n1, n2, m)
  for (std::ptrdiff_t i = 0; i < cells; ++i) {
    if (mask && !mask->included(static_cast<std::size_t>(i))) continue;
    const double af = f[i], ao = o[i];
    ++n;
    const double mf = std::fabs(af), mo = std::fabs(ao);
    if (mo > kExtremeMin && mf < kMissThreshold) ++m;
    if (!sign_hit(af, ao)) continue;
    ++n0;
    const bool first_f = mf >= kFirstLevelMin && mf <= kFirstLevelMax;
    const bool first_o = mo >= kFirstLevelMin && mo <= kFirstLevelMax;
    if (first_f && first_o) ++n1;
    if (mf > kFirstLevelMax && mo > kFirstLevelMax) ++n2;
  }
  if (n == 0) throw DomainError("PS breakdown over an empty sample (mask excludes every cell)");
  return {n, n0, n1, n2, m};
}

double ps_score(const PsBreakdown& b) {
  if (b.n < 1) throw DomainError("PS score is undefined for N = 0");
  if (b.n0 < 0 || b.n0 > b.n || b.n1 < 0 || b.n2 < 0 || b.n1 + b.n2 > b.n0 || b.m < 0 || b.m > b.n)
    throw DomainError("inconsistent PS breakdown counts");
  const double hits = 2.0 * b.n0 + 2.0 * b.n1 + 4.0 * b.n2;
  const double denom = static_cast<double>(b.n - b.n0) + hits + static_cast<double>(b.m);
  return 100.0 * hits / denom;
}

double acc(const AnomalyField& forecast, const AnomalyField& observed, const CellMask* mask) {
  require_compatible(forecast.spec(), observed.spec(), "forecast vs observation");
  check_mask(forecast.spec(), mask);
  const auto f = forecast.values();
  const auto o = observed.values();
  const std::size_t n = sample_count(f.size(), mask);
  if (n < 2) throw DomainError("ACC needs at least two unmasked cells");
  auto in = [&](std::size_t i) { return !mask || mask->included(i); };

  const double mf = deterministic_sum(f.size(), [&](std::size_t i) { return in(i) ? f[i] : 0.0; }) / n;
  const double mo = deterministic_sum(o.size(), [&](std::size_t i) { return in(i) ? o[i] : 0.0; }) / n;
  const double sfo = deterministic_sum(f.size(), [&](std::size_t i) {
    return in(i) ? (f[i] - mf) * (o[i] - mo) : 0.0;
  });
  const double sff = deterministic_sum(f.size(), [&](std::size_t i) {
    return in(i) ? (f[i] - mf) * (f[i] - mf) : 0.0;
  });
  const double soo = deterministic_sum(o.size(), [&](std::size_t i) {
    return in(i) ? (o[i] - mo) * (o[i] - mo) : 0.0;
  });
  if (sff <= 0.0 || soo <= 0.0) throw DomainError("ACC undefined: zero variance field");
  return std::clamp(sfo / std::sqrt(sff * soo), -1.0, 1.0);
}

double rmse(const GridField& forecast, const GridField& observed, const CellMask* mask) {
  require_compatible(forecast.spec(), observed.spec(), "forecast vs observation");
  check_mask(forecast.spec(), mask);
  if (forecast.units() != observed.units()) throw UnitError("RMSE operands have different units");
  const auto f = forecast.values();
  const auto o = observed.values();
  const std::size_t n = sample_count(f.size(), mask);
  if (n == 0) throw DomainError("RMSE over an empty sample");
  const double ss = deterministic_sum(f.size(), [&](std::size_t i) {
    if (mask && !mask->included(i)) return 0.0;
    const double d = f[i] - o[i];
    return d * d;
  });
  return std::sqrt(ss / static_cast<double>(n));
}

}  // namespace capeskit::verify
