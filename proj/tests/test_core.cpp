#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "canmort/panel.hpp"
#include "helpers.hpp"

using namespace canmort;

namespace {

std::string panel_csv(const PanelSchema& s, const std::function<double(const StratumKey&)>& deaths,
                      const std::function<double(const StratumKey&)>& exposure, int dep_levels_in_file) {
  std::ostringstream out;
  out << "age_group,gender";
  if (dep_levels_in_file > 0) out << ",deprivation";
  out << ",region,year,deaths,exposure\n";
  for (const Gender g : s.genders)
    for (int y = s.year_min; y <= s.year_max; ++y)
      for (std::size_t r = 0; r < s.regions.size(); ++r)
        for (int d = (dep_levels_in_file > 0 ? 1 : 0); d <= dep_levels_in_file || (dep_levels_in_file == 0 && d == 0); ++d) {
          for (std::size_t a = 0; a < s.age_groups.size(); ++a) {
            StratumKey k{static_cast<int>(a), g, d, static_cast<int>(r), y};
            out << s.age_groups[a].label << "," << to_string(g) << ",";
            if (dep_levels_in_file > 0) out << d << ",";
            out << s.regions[r] << "," << y << "," << num(deaths(k)) << "," << num(exposure(k)) << "\n";
          }
          if (dep_levels_in_file == 0) break;
        }
  return out.str();
}

double det_deaths(const StratumKey& k) {
  return 10.0 + k.age * 3 + k.region * 5 + k.deprivation * 7 + (k.year % 10);
}
double det_exposure(const StratumKey& k) { return 50000.0 + 1000.0 * k.age + 10.0 * k.deprivation; }

} // namespace

TEST_CASE("paper-shaped panel loads with 6480 cells") {
  PanelSchema s;
  s.cause = Cause::lung;
  for (const char* b : {"45-54", "55-59", "60-64", "65-69", "70-74", "75-79", "80-84", "85-89"})
    s.age_groups.push_back(parse_age_band(b));
  s.regions = {"North East", "North West", "Yorkshire and the Humber", "East Midlands",
               "West Midlands", "East", "London", "South East", "South West"};
  s.deprivation_levels = 5;
  s.genders = {Gender::female};
  s.year_min = 2001;
  s.year_max = 2018;

  const std::string path = testutil::scratch_file("lc_female.csv");
  testutil::write_text(path, panel_csv(s, det_deaths, det_exposure, 5));
  const MortalityPanel p = load_panel(path, s);
  CHECK(p.size() == 6480u);
  CHECK(p.schema().age_groups[5].midpoint == Catch::Approx(77.0));
  CHECK(p.schema().age_groups[0].midpoint == Catch::Approx(49.5));
}

TEST_CASE("missing cell is GridIncomplete") {
  const PanelSchema s = testutil::small_schema(2, 2, 0, 2001, 2002);
  std::string csv = panel_csv(s, det_deaths, det_exposure, 0);
  // drop the final data row
  csv.erase(csv.rfind('\n', csv.size() - 2) + 1);
  const std::string path = testutil::scratch_file("incomplete.csv");
  testutil::write_text(path, csv);
  CHECK_THROWS_MATCHES(load_panel(path, s), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == errc::grid_incomplete;
                       }));
}

TEST_CASE("zero exposure is BadExposure") {
  const PanelSchema s = testutil::small_schema(2, 2, 0, 2001, 2002);
  int row = 0;
  auto exposure = [&](const StratumKey&) { return row++ == 3 ? 0.0 : 1000.0; };
  const std::string path = testutil::scratch_file("badexposure.csv");
  testutil::write_text(path, panel_csv(s, [](const StratumKey&) { return 1.0; }, exposure, 0));
  CHECK_THROWS_MATCHES(load_panel(path, s), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == errc::bad_exposure;
                       }));
}

TEST_CASE("crude rates") {
  MortalityCell c{{0, Gender::female, 0, 0, 2001}, 50.0, 100000.0};
  CHECK(crude_rate(c) == Catch::Approx(5.0e-4));
  c.deaths = 0.0;
  c.exposure = 1000.0;
  CHECK(crude_rate(c) == 0.0);
}

TEST_CASE("regional aggregate rate equals brute-force quintile sum") {
  const PanelSchema s = testutil::small_schema(3, 2, 5, 2001, 2003);
  const std::string path = testutil::scratch_file("agg_oracle.csv");
  testutil::write_text(path, panel_csv(s, det_deaths, det_exposure, 5));
  const MortalityPanel p = load_panel(path, s);
  const MortalityPanel regional = aggregate(p, {Dimension::deprivation});

  for (const auto& cell : regional.cells()) {
    double d_sum = 0.0, e_sum = 0.0;
    for (int d = 1; d <= 5; ++d) {
      StratumKey k = cell.key;
      k.deprivation = d;
      d_sum += det_deaths(k);
      e_sum += det_exposure(k);
    }
    CHECK(crude_rate(cell) == Catch::Approx(d_sum / e_sum).epsilon(1e-12));
  }
  CHECK(regional.size() == p.size() / 5);
}

TEST_CASE("aggregation properties") {
  const PanelSchema s = testutil::small_schema(3, 3, 5, 2001, 2002);
  const std::string path = testutil::scratch_file("agg_props.csv");
  testutil::write_text(path, panel_csv(s, det_deaths, det_exposure, 5));
  const MortalityPanel p = load_panel(path, s);

  SECTION("empty drop is the identity") {
    const MortalityPanel q = aggregate(p, {});
    REQUIRE(q.size() == p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(q.cell(i).deaths == p.cell(i).deaths);
      CHECK(q.cell(i).exposure == p.cell(i).exposure);
    }
  }
  SECTION("order independence and conservation") {
    const MortalityPanel ab = aggregate(aggregate(p, {Dimension::deprivation}), {Dimension::region});
    const MortalityPanel ba = aggregate(aggregate(p, {Dimension::region}), {Dimension::deprivation});
    const MortalityPanel both = aggregate(p, {Dimension::deprivation, Dimension::region});
    REQUIRE(ab.size() == both.size());
    for (std::size_t i = 0; i < both.size(); ++i) {
      CHECK(ab.cell(i).deaths == Catch::Approx(both.cell(i).deaths).epsilon(1e-14));
      CHECK(ba.cell(i).deaths == Catch::Approx(both.cell(i).deaths).epsilon(1e-14));
    }
    CHECK(both.total_deaths() == Catch::Approx(p.total_deaths()).epsilon(1e-14));
    CHECK(both.total_exposure() == Catch::Approx(p.total_exposure()).epsilon(1e-14));
  }
  SECTION("dropping both then crude rate equals re-summed raw rows") {
    const MortalityPanel both = aggregate(p, {Dimension::deprivation, Dimension::region});
    // independent oracle: loop over the raw CSV grid definition directly
    for (const auto& cell : both.cells()) {
      double d_sum = 0.0, e_sum = 0.0;
      for (int r = 0; r < 3; ++r)
        for (int d = 1; d <= 5; ++d) {
          StratumKey k = cell.key;
          k.region = r;
          k.deprivation = d;
          d_sum += det_deaths(k);
          e_sum += det_exposure(k);
        }
      CHECK(crude_rate(cell) == Catch::Approx(d_sum / e_sum).epsilon(1e-12));
    }
  }
  SECTION("dropping a missing dimension fails") {
    const MortalityPanel no_dep = aggregate(p, {Dimension::deprivation});
    CHECK_THROWS_MATCHES(aggregate(no_dep, {Dimension::deprivation}), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == errc::schema_violation; }));
  }
}

TEST_CASE("load-serialise-load is a fixed point") {
  const PanelSchema s = testutil::small_schema(2, 2, 5, 2001, 2002);
  const std::string path = testutil::scratch_file("roundtrip_in.csv");
  testutil::write_text(path, panel_csv(s, det_deaths, det_exposure, 5));
  const MortalityPanel p = load_panel(path, s);

  const std::string out1 = testutil::scratch_file("roundtrip_1.csv");
  write_panel_csv(p, out1);
  PanelSchema s2 = s; // already quintile coded after first load
  s2.decile_coded = false;
  const MortalityPanel q = load_panel(out1, s2);
  const std::string out2 = testutil::scratch_file("roundtrip_2.csv");
  write_panel_csv(q, out2);
  CHECK(testutil::read_text(out1) == testutil::read_text(out2));
}

TEST_CASE("decile-coded files merge to quintiles") {
  PanelSchema s = testutil::small_schema(2, 2, 5, 2001, 2001);
  s.decile_coded = true;
  const std::string path = testutil::scratch_file("deciles.csv");
  testutil::write_text(path, panel_csv(s, det_deaths, det_exposure, 10));
  const MortalityPanel p = load_panel(path, s);
  REQUIRE(p.schema().deprivation_levels == 5);
  CHECK(p.size() == 2u * 2u * 5u);
  // quintile 1 = deciles 1 + 2
  StratumKey k{0, Gender::female, 1, 0, 2001};
  StratumKey k1 = k, k2 = k;
  k1.deprivation = 1;
  k2.deprivation = 2;
  CHECK(p.cell(p.index(k)).deaths == Catch::Approx(det_deaths(k1) + det_deaths(k2)));
  CHECK(p.cell(p.index(k)).exposure == Catch::Approx(det_exposure(k1) + det_exposure(k2)));
}

TEST_CASE("ESP-2013 weights map onto panel bands") {
  PanelSchema s;
  s.cause = Cause::lung;
  for (const char* b : {"45-54", "55-59", "85-89"}) s.age_groups.push_back(parse_age_band(b));
  s.regions = {"R1"};
  s.genders = {Gender::female};
  s.year_min = s.year_max = 2001;
  const StandardPopulation sp =
      StandardPopulation::for_schema(std::string(CANMORT_DATA_DIR) + "/esp2013.csv", s);
  REQUIRE(sp.weights.size() == 3u);
  CHECK(sp.weights[0] == Catch::Approx(14000.0)); // 45-49 + 50-54
  CHECK(sp.weights[1] == Catch::Approx(6500.0));
  CHECK(sp.weights[2] == Catch::Approx(1500.0));

  PanelSchema bad = s;
  bad.age_groups.push_back(parse_age_band("90-97"));
  CHECK_THROWS_MATCHES(StandardPopulation::for_schema(std::string(CANMORT_DATA_DIR) + "/esp2013.csv", bad),
                       Error, Catch::Matchers::Predicate<Error>(
                                  [](const Error& e) { return e.code() == errc::std_mismatch; }));
}
