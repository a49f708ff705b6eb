#include "capeskit/grid.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "capeskit/error.hpp"
#include "capeskit/io.hpp"

namespace capeskit {

std::string_view to_string(Units u) {
  switch (u) {
    case Units::mm: return "mm";
    case Units::percent: return "percent";
    case Units::unitless: return "unitless";
  }
  return "unitless";
}

Units parse_units(std::string_view s) {
  if (s == "mm") return Units::mm;
  if (s == "percent") return Units::percent;
  if (s == "unitless") return Units::unitless;
  throw UnitError("unknown units tag '" + std::string(s) + "'");
}

void GridSpec::validate() const {
  if (nlat < 1 || nlon < 1) throw DomainError("grid must have nlat >= 1 and nlon >= 1");
  if (dlat == 0.0 || dlon == 0.0) throw DomainError("grid spacing must be nonzero");
  if (!std::isfinite(lat0) || !std::isfinite(dlat) || !std::isfinite(lon0) || !std::isfinite(dlon))
    throw DomainError("grid geometry must be finite");
}

void require_compatible(const GridSpec& a, const GridSpec& b, std::string_view what) {
  if (!(a == b)) throw SpecMismatchError("incompatible grid specs: " + std::string(what));
}

GridField::GridField(GridSpec spec, Units units, std::vector<double> values)
    : spec_(spec), units_(units), values_(std::move(values)) {
  spec_.validate();
  if (values_.size() != spec_.cells())
    throw DomainError("value count " + std::to_string(values_.size()) + " does not match grid " +
                      std::to_string(spec_.nlat) + "x" + std::to_string(spec_.nlon));
  for (double v : values_)
    if (!std::isfinite(v)) throw DomainError("non-finite value in grid field");
}

GridField GridField::filled(const GridSpec& spec, Units units, double value) {
  return GridField(spec, units, std::vector<double>(spec.cells(), value));
}

AnomalyField::AnomalyField(GridSpec spec, std::vector<double> values)
    : field_(spec, Units::percent, std::move(values)) {}

AnomalyField::AnomalyField(GridField field) : field_(std::move(field)) {
  if (field_.units() != Units::percent) throw UnitError("anomaly field requires percent units");
}

Climatology::Climatology(GridField field, double floor) : field_(std::move(field)), floor_(floor) {
  if (field_.units() != Units::mm) throw UnitError("climatology must be in mm");
  if (!(floor_ > 0.0) || !std::isfinite(floor_)) throw DomainError("climatology floor must be positive");
}

double Climatology::value(std::size_t i) const { return std::max(field_[i], floor_); }

CellMask::CellMask(GridSpec spec, std::vector<unsigned char> include)
    : spec_(spec), include_(std::move(include)) {
  spec_.validate();
  if (include_.size() != spec_.cells()) throw DomainError("mask size does not match grid");
}

CellMask CellMask::from_field(const GridField& f) {
  std::vector<unsigned char> inc(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) inc[i] = f[i] != 0.0 ? 1 : 0;
  return CellMask(f.spec(), std::move(inc));
}

std::size_t CellMask::count() const {
  return static_cast<std::size_t>(std::count_if(include_.begin(), include_.end(),
                                                [](unsigned char c) { return c != 0; }));
}

AnomalyField anomaly_percent(const GridField& field, const Climatology& clim) {
  require_compatible(field.spec(), clim.spec(), "field vs climatology");
  if (field.units() != Units::mm) throw UnitError("anomaly_percent requires a field in mm");
  std::vector<double> a(field.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double c = clim.value(i);
    a[i] = (field[i] - c) / c * 100.0;
  }
  return AnomalyField(field.spec(), std::move(a));
}

GridField anomaly_to_mm(const AnomalyField& anomaly, const Climatology& clim) {
  require_compatible(anomaly.spec(), clim.spec(), "anomaly vs climatology");
  std::vector<double> x(anomaly.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = clim.value(i) * (1.0 + anomaly[i] / 100.0);
  return GridField(anomaly.spec(), Units::mm, std::move(x));
}

std::string format_grid(const GridField& field) {
  const auto& s = field.spec();
  std::string out = "GRD1 " + std::to_string(s.nlat) + " " + std::to_string(s.nlon) + " " +
                    format_double(s.lat0) + " " + format_double(s.dlat) + " " +
                    format_double(s.lon0) + " " + format_double(s.dlon) + " " +
                    std::string(to_string(field.units())) + "\n";
  for (int i = 0; i < s.nlat; ++i) {
    for (int j = 0; j < s.nlon; ++j) {
      if (j) out += ' ';
      out += format_double(field.at(i, j));
    }
    out += '\n';
  }
  return out;
}

namespace {

struct Tokenizer {
  std::string_view text;
  std::size_t pos = 0;
  int line = 1;

  // Next whitespace-delimited token, stopping at end of line when `same_line`.
  std::string_view next(bool same_line) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) {
      if (text[pos] == '\n') {
        if (same_line) return {};
        ++line;
      }
      ++pos;
    }
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    return text.substr(start, pos - start);
  }
};

}  // namespace

GridField parse_grid(std::string_view text) {
  Tokenizer tok{text};
  if (tok.next(true) != "GRD1") throw ParseError("missing GRD1 magic", 1);
  std::string_view h[7];
  for (auto& t : h) {
    t = tok.next(true);
    if (t.empty()) throw ParseError("header must have nlat nlon lat0 dlat lon0 dlon units", 1);
  }
  if (!tok.next(true).empty()) throw ParseError("trailing tokens in header", 1);
  GridSpec spec;
  const long long nlat = parse_int(h[0], 1), nlon = parse_int(h[1], 1);
  if (nlat < 1 || nlon < 1 || nlat > (1 << 20) || nlon > (1 << 20))
    throw ParseError("grid dimensions out of range", 1);
  spec.nlat = static_cast<int>(nlat);
  spec.nlon = static_cast<int>(nlon);
  spec.lat0 = parse_double(h[2], 1);
  spec.dlat = parse_double(h[3], 1);
  spec.lon0 = parse_double(h[4], 1);
  spec.dlon = parse_double(h[5], 1);
  Units units;
  try {
    units = parse_units(h[6]);
  } catch (const UnitError& e) {
    throw ParseError(e.what(), 1);
  }
  try {
    spec.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what(), 1);
  }

  std::vector<double> values;
  values.reserve(spec.cells());
  for (;;) {
    auto t = tok.next(false);
    if (t.empty()) break;
    if (values.size() == spec.cells())
      throw ParseError("value count mismatch: more than " + std::to_string(spec.cells()) + " values",
                       tok.line);
    const double v = parse_double(t, tok.line);
    if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(t) + "'", tok.line);
    values.push_back(v);
  }
  if (values.size() != spec.cells())
    throw ParseError("value count mismatch: header declares " + std::to_string(spec.cells()) +
                         " values, found " + std::to_string(values.size()),
                     tok.line);
  return GridField(spec, units, std::move(values));
}

GridField read_grid(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return parse_grid(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

void write_grid(const GridField& field, const std::filesystem::path& path) {
  atomic_write(path, format_grid(field));
}

}  // namespace capeskit
