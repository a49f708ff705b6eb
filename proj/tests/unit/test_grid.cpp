#include <doctest.h>

#include <filesystem>
#include <random>

#include "capeskit/error.hpp"
#include "capeskit/grid.hpp"
#include "capeskit/io.hpp"
#include "fixtures.hpp"

using namespace capeskit;

TEST_SUITE("grid") {
  TEST_CASE("spec validation and compatibility") {
    CHECK_THROWS_AS(GridSpec({0, 3, 0, 1, 0, 1}).validate(), DomainError);
    CHECK_THROWS_AS(GridSpec({2, 3, 0, 0, 0, 1}).validate(), DomainError);
    const GridSpec a = fixtures::grid(2, 3);
    GridSpec b = a;
    CHECK_NOTHROW(require_compatible(a, b, "x"));
    b.lon0 += 1e-12;
    CHECK_THROWS_AS(require_compatible(a, b, "x"), SpecMismatchError);
  }

  TEST_CASE("fields reject non-finite values and wrong sizes") {
    const GridSpec s = fixtures::grid(1, 2);
    CHECK_THROWS_AS(GridField(s, Units::mm, {1.0, NAN}), DomainError);
    CHECK_THROWS_AS(GridField(s, Units::mm, {1.0, INFINITY}), DomainError);
    CHECK_THROWS_AS(GridField(s, Units::mm, {1.0}), DomainError);
    const GridField f(s, Units::mm, {1.0, 2.0});
    CHECK(f.at(0, 1) == 2.0);
  }

  TEST_CASE("anomaly percent") {
    const GridSpec s = fixtures::grid(1, 3);
    const Climatology clim(GridField(s, Units::mm, {300.0, 300.0, 0.0}), 1.0);
    const AnomalyField a = anomaly_percent(GridField(s, Units::mm, {360.0, 300.0, 2.0}), clim);
    CHECK(a[0] == doctest::Approx(20.0).epsilon(1e-15));
    CHECK(a[1] == 0.0);
    CHECK(a[2] == doctest::Approx(100.0));  // floored climatology of 1 mm
    const AnomalyField b = anomaly_percent(GridField(s, Units::mm, {450.0, 450.0, 1.5}), clim);
    CHECK(b[0] == doctest::Approx(50.0));
    CHECK(b[1] == doctest::Approx(50.0));
    CHECK(b[2] == doctest::Approx(50.0));
    CHECK_THROWS_AS(anomaly_percent(GridField(s, Units::percent, {1, 2, 3}), clim), UnitError);
    CHECK_THROWS_AS(anomaly_percent(GridField(fixtures::grid(3, 1), Units::mm, {1, 2, 3}), clim), SpecMismatchError);
  }

  TEST_CASE("anomaly percent is monotone in x and inverted by anomaly_to_mm") {
    std::mt19937_64 rng(3);
    const GridSpec s = fixtures::grid(6, 7);
    const Climatology clim(fixtures::random_field(s, Units::mm, 0.0, 500.0, rng));
    const GridField x1 = fixtures::random_field(s, Units::mm, 0.0, 800.0, rng);
    std::vector<double> bumped(x1.values().begin(), x1.values().end());
    for (double& v : bumped) v += 1.0;
    const AnomalyField a1 = anomaly_percent(x1, clim), a2 = anomaly_percent(GridField(s, Units::mm, bumped), clim);
    const GridField back = anomaly_to_mm(a1, clim);
    for (std::size_t i = 0; i < s.cells(); ++i) {
      CHECK(a1[i] < a2[i]);
      CHECK(back[i] == doctest::Approx(x1[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("GRD1 round trip is exact") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 20; ++t) {
      const GridSpec s = fixtures::grid(1 + t % 5, 1 + t % 7);
      const GridField f = fixtures::random_field(s, Units::mm, -1e6, 1e6, rng);
      CHECK(parse_grid(format_grid(f)) == f);
    }
    const GridField small(fixtures::grid(2, 3), Units::unitless, {0, 1, 2, 3, 4, 5});
    CHECK(parse_grid(format_grid(small)) == small);
  }

  TEST_CASE("GRD1 parser accepts arbitrary whitespace") {
    const GridField f = parse_grid("GRD1 2 2 0 1 0 1 mm\n1\t2\n\n  3    4  \n");
    CHECK(f.values()[3] == 4.0);
    CHECK(f.units() == Units::mm);
  }

  TEST_CASE("GRD1 parser errors") {
    CHECK_THROWS_WITH_AS(parse_grid("GRD1 2 2 0 1 0 1 mm\n1 2 3\n"), doctest::Contains("header declares 4"),
                         ParseError);
    CHECK_THROWS_WITH_AS(parse_grid("GRD1 1 2 0 1 0 1 mm\n1\nNaN\n"), doctest::Contains("line 3"), ParseError);
    CHECK_THROWS_AS(parse_grid("GRD2 1 1 0 1 0 1 mm\n1\n"), ParseError);
    CHECK_THROWS_AS(parse_grid("GRD1 1 1 0 1 0 1 furlongs\n1\n"), ParseError);
    CHECK_THROWS_AS(parse_grid("GRD1 1 x 0 1 0 1 mm\n1\n"), ParseError);
    CHECK_THROWS_AS(parse_grid("GRD1 1 1 0 1 0 1 mm\n1 2\n"), ParseError);
    CHECK_THROWS_AS(parse_grid("GRD1 1 1 0 1 0 1 mm\ninf\n"), ParseError);
  }

  TEST_CASE("write then read through the filesystem") {
    const auto dir = std::filesystem::temp_directory_path() / "capeskit_grid_test";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(5);
    const GridSpec s = fixtures::grid(4, 5);
    const GridField f = fixtures::random_field(s, Units::percent, -150, 150, rng);
    write_grid(f, dir / "f.grd");
    CHECK(read_grid(dir / "f.grd") == f);
    const Climatology clim(GridField::filled(s, Units::mm, 250.0));
    const GridField mm = anomaly_to_mm(AnomalyField(f), clim);
    write_grid(mm, dir / "mm.grd");
    CHECK(anomaly_percent(read_grid(dir / "mm.grd"), clim) == anomaly_percent(mm, clim));
    CHECK_THROWS_AS(read_grid(dir / "missing.grd"), IoError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("masks") {
    const GridSpec s = fixtures::grid(1, 4);
    const CellMask m = CellMask::from_field(GridField(s, Units::unitless, {1, 0, 2, 0}));
    CHECK(m.count() == 2);
    CHECK(m.included(2));
    CHECK_FALSE(m.included(1));
  }
}

TEST_SUITE("io") {
  TEST_CASE("number formatting") {
    CHECK(format_fixed(-0.0001, 3) == "0.000");
    CHECK(format_fixed(100.0, 3) == "100.000");
    CHECK(parse_double(format_double(0.1)) == 0.1);
    CHECK(parse_double("+2.5") == 2.5);
    CHECK_THROWS_AS(parse_double("2.5x"), ParseError);
    CHECK_THROWS_AS(parse_int("3.0"), ParseError);
  }
}
