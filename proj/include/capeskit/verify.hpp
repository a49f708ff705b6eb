#pragma once

#include <cstdint>

#include "capeskit/grid.hpp"

namespace capeskit::verify {

enum class Sign { negative, zero, positive };
enum class Level { normal, first, second };

/// Category bands on |a|: normal < 20 <= first <= 50 < second; extreme when > 100.
struct AnomalyCategory {
  Sign sign;
  Level level;
  bool extreme;
  bool operator==(const AnomalyCategory&) const = default;
};

inline constexpr double kFirstLevelMin = 20.0;
inline constexpr double kFirstLevelMax = 50.0;
inline constexpr double kExtremeMin = 100.0;
/// Forecasts below this magnitude miss an extreme observation.
inline constexpr double kMissThreshold = 50.0;

AnomalyCategory classify(double anomaly_percent);

/// Sign agreement: same strict sign, or both exactly zero.
inline bool sign_hit(double forecast, double observed) {
  return forecast * observed > 0.0 || (forecast == 0.0 && observed == 0.0);
}

struct PsBreakdown {
  std::int64_t n = 0;
  std::int64_t n0 = 0;  ///< correct sign
  std::int64_t n1 = 0;  ///< same signed first-level band
  std::int64_t n2 = 0;  ///< same signed second-level band
  std::int64_t m = 0;   ///< observed extreme, forecast magnitude below 50
  bool operator==(const PsBreakdown&) const = default;
};

PsBreakdown ps_breakdown(const AnomalyField& forecast, const AnomalyField& observed,
                         const CellMask* mask = nullptr);

/// 100 (2 N0 + 2 N1 + 4 N2) / ((N - N0) + 2 N0 + 2 N1 + 4 N2 + M).
double ps_score(const PsBreakdown& b);

/// Pearson correlation of the two anomaly fields over unmasked cells.
double acc(const AnomalyField& forecast, const AnomalyField& observed, const CellMask* mask = nullptr);

double rmse(const GridField& forecast, const GridField& observed, const CellMask* mask = nullptr);

}  // namespace capeskit::verify
