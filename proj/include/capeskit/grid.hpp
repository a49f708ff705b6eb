#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace capeskit {

enum class Units { mm, percent, unitless };

std::string_view to_string(Units u);
Units parse_units(std::string_view s);

/// Regular lat/lon grid geometry. Two specs are compatible only if every
/// field compares exactly equal.
struct GridSpec {
  int nlat = 1;
  int nlon = 1;
  double lat0 = 0.0;
  double dlat = 1.0;
  double lon0 = 0.0;
  double dlon = 1.0;

  void validate() const;
  std::size_t cells() const { return static_cast<std::size_t>(nlat) * static_cast<std::size_t>(nlon); }
  bool operator==(const GridSpec&) const = default;
};

/// Throws SpecMismatchError naming `what` unless a == b.
void require_compatible(const GridSpec& a, const GridSpec& b, std::string_view what);

/// Immutable gridded field, row-major with latitude as the slow index.
/// Construction rejects non-finite values and size mismatches.
class GridField {
 public:
  GridField(GridSpec spec, Units units, std::vector<double> values);
  static GridField filled(const GridSpec& spec, Units units, double value);

  const GridSpec& spec() const { return spec_; }
  Units units() const { return units_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double at(int ilat, int ilon) const {
    return values_[static_cast<std::size_t>(ilat) * spec_.nlon + ilon];
  }

  bool operator==(const GridField&) const = default;

 private:
  GridSpec spec_;
  Units units_;
  std::vector<double> values_;
};

/// Anomaly percentage field; always carries Units::percent.
class AnomalyField {
 public:
  AnomalyField(GridSpec spec, std::vector<double> values);
  explicit AnomalyField(GridField field);

  const GridSpec& spec() const { return field_.spec(); }
  std::span<const double> values() const { return field_.values(); }
  std::size_t size() const { return field_.size(); }
  double operator[](std::size_t i) const { return field_[i]; }
  const GridField& grid() const { return field_; }

  bool operator==(const AnomalyField&) const = default;

 private:
  GridField field_;
};

inline constexpr double kDefaultClimatologyFloor = 0.1;

/// Climatological reference in mm with a positive floor guarding division.
class Climatology {
 public:
  explicit Climatology(GridField field, double floor = kDefaultClimatologyFloor);

  const GridField& field() const { return field_; }
  const GridSpec& spec() const { return field_.spec(); }
  double floor() const { return floor_; }
  /// Floored value of cell i.
  double value(std::size_t i) const;

 private:
  GridField field_;
  double floor_;
};

/// Cells to include in verification. Built from a field: nonzero means included.
class CellMask {
 public:
  CellMask(GridSpec spec, std::vector<unsigned char> include);
  static CellMask from_field(const GridField& f);

  const GridSpec& spec() const { return spec_; }
  bool included(std::size_t i) const { return include_[i] != 0; }
  std::size_t count() const;

 private:
  GridSpec spec_;
  std::vector<unsigned char> include_;
};

AnomalyField anomaly_percent(const GridField& field, const Climatology& clim);

/// Inverse of anomaly_percent: x = c (1 + a/100) with the floored climatology.
GridField anomaly_to_mm(const AnomalyField& anomaly, const Climatology& clim);

// GRD1 text format.
std::string format_grid(const GridField& field);
GridField parse_grid(std::string_view text);
GridField read_grid(const std::filesystem::path& path);
void write_grid(const GridField& field, const std::filesystem::path& path);

}  // namespace capeskit
