#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "canmort/aad.hpp"
#include "helpers.hpp"

using namespace canmort;

namespace {

PanelSchema mid_schema(const std::vector<double>& midpoints) {
  PanelSchema s;
  s.cause = Cause::lung;
  for (const double m : midpoints) {
    AgeBand b;
    b.label = "m" + num(m);
    b.lo = m - 2;
    b.hi = m + 2;
    b.midpoint = m;
    s.age_groups.push_back(b);
  }
  s.regions = {"R1"};
  s.genders = {Gender::female};
  s.year_min = s.year_max = 2001;
  return s;
}

IncidenceSurface surface_from(const PanelSchema& s, const std::vector<double>& lambda) {
  std::ostringstream csv;
  csv << "age_group,gender,region,year,lambda_hat\n";
  for (std::size_t a = 0; a < s.age_groups.size(); ++a)
    csv << s.age_groups[a].label << ",female,R1,2001," << num(lambda[a]) << "\n";
  const std::string path = testutil::scratch_file("inc.csv");
  testutil::write_text(path, csv.str());
  return IncidenceSurface::load(path, s);
}

} // namespace

TEST_CASE("aad_yearly") {
  SECTION("degenerate mass at one band") {
    const PanelSchema s = mid_schema({50, 60, 77});
    const IncidenceSurface inc = surface_from(s, {0.0, 0.0, 0.9});
    StandardPopulation sp{{1000, 2000, 3000}};
    CHECK(aad_yearly(inc, sp, {0, Gender::female, 0, 0, 2001}) == Catch::Approx(77.0));
  }
  SECTION("uniform rates and weights give the plain mean") {
    const PanelSchema s = mid_schema({50, 60, 70});
    const IncidenceSurface inc = surface_from(s, {0.3, 0.3, 0.3});
    StandardPopulation sp{{500, 500, 500}};
    CHECK(aad_yearly(inc, sp, {0, Gender::female, 0, 0, 2001}) == Catch::Approx(60.0));
  }
  SECTION("matches the explicit-loop oracle on a 4-band surface") {
    const PanelSchema s = mid_schema({47, 58, 66, 81});
    const std::vector<double> lam = {0.11, 0.37, 0.22, 0.05};
    const std::vector<double> w = {900, 1400, 800, 300};
    const IncidenceSurface inc = surface_from(s, lam);
    StandardPopulation sp{w};
    double num_acc = 0.0, den_acc = 0.0;
    const double mids[] = {47, 58, 66, 81};
    for (int a = 0; a < 4; ++a) {
      num_acc += mids[a] * lam[a] * w[a];
      den_acc += lam[a] * w[a];
    }
    CHECK(aad_yearly(inc, sp, {0, Gender::female, 0, 0, 2001}) ==
          Catch::Approx(num_acc / den_acc).epsilon(1e-14));
  }
  SECTION("all-zero incidence is undefined") {
    const PanelSchema s = mid_schema({50, 60});
    const IncidenceSurface inc = surface_from(s, {0.0, 0.0});
    StandardPopulation sp{{1.0, 1.0}};
    CHECK_THROWS_MATCHES(aad_yearly(inc, sp, {0, Gender::female, 0, 0, 2001}), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == errc::undefined_aad; }));
  }
  SECTION("invariant to rescaling the incidence") {
    const PanelSchema s = mid_schema({47, 58, 66, 81});
    const IncidenceSurface inc1 = surface_from(s, {0.11, 0.37, 0.22, 0.05});
    const double a1 = aad_yearly(inc1, StandardPopulation{{900, 1400, 800, 300}},
                                 {0, Gender::female, 0, 0, 2001});
    const IncidenceSurface inc2 = surface_from(s, {0.11 * 7, 0.37 * 7, 0.22 * 7, 0.05 * 7});
    const double a2 = aad_yearly(inc2, StandardPopulation{{900, 1400, 800, 300}},
                                 {0, Gender::female, 0, 0, 2001});
    CHECK(a1 == Catch::Approx(a2).epsilon(1e-13));
  }
}

TEST_CASE("aad_timeavg") {
  SECTION("constant values") {
    const std::vector<double> aad = {71.3, 71.3, 71.3};
    const std::vector<double> e = {10.0, 200.0, 3.5};
    CHECK(aad_timeavg(aad, e) == Catch::Approx(71.3));
  }
  SECTION("hand arithmetic") {
    const std::vector<double> aad = {70.0, 72.0};
    const std::vector<double> e = {1.0, 3.0};
    CHECK(aad_timeavg(aad, e) == Catch::Approx(71.5));
  }
  SECTION("17-year synthetic surface matches the oracle loop") {
    std::vector<double> aad, e;
    for (int i = 0; i < 17; ++i) {
      aad.push_back(68.0 + 0.3 * i);
      e.push_back(1e5 + 1e3 * ((i * 7) % 13));
    }
    double n_acc = 0.0, d_acc = 0.0;
    for (int i = 0; i < 17; ++i) {
      n_acc += aad[i] * e[i];
      d_acc += e[i];
    }
    CHECK(aad_timeavg(aad, e) == Catch::Approx(n_acc / d_acc).epsilon(1e-14));
  }
  SECTION("equal weights reduce to the plain mean") {
    const std::vector<double> aad = {70.0, 71.0, 75.0};
    const std::vector<double> e = {2.0, 2.0, 2.0};
    CHECK(aad_timeavg(aad, e) == Catch::Approx((70.0 + 71.0 + 75.0) / 3.0));
  }
  SECTION("empty year set is undefined") {
    CHECK_THROWS_MATCHES(aad_timeavg(std::vector<double>{}, std::vector<double>{}), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == errc::undefined_aad; }));
  }
  SECTION("+delta shift moves the average by exactly delta") {
    std::vector<double> aad = {70.0, 71.0, 73.5};
    const std::vector<double> e = {5.0, 1.0, 2.5};
    const double base = aad_timeavg(aad, e);
    for (double& v : aad) v += 0.25;
    CHECK(aad_timeavg(aad, e) == Catch::Approx(base + 0.25).epsilon(1e-13));
  }
}

TEST_CASE("standardise") {
  SECTION("small case with the population convention") {
    const std::vector<double> v = {1.0, 2.0, 3.0};
    const Standardised s = standardise(v);
    const double sd = std::sqrt(2.0 / 3.0);
    CHECK(s.mean == Catch::Approx(2.0));
    CHECK(s.sd == Catch::Approx(sd));
    CHECK(s.z[0] == Catch::Approx(-1.0 / sd));
    CHECK(s.z[1] == Catch::Approx(0.0).margin(1e-15));
    CHECK(s.z[2] == Catch::Approx(1.0 / sd));
  }
  SECTION("constant vector is degenerate") {
    const std::vector<double> v = {4.0, 4.0, 4.0};
    CHECK_THROWS_MATCHES(standardise(v), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == errc::degenerate_covariate;
                         }));
  }
  SECTION("round-trips through (z, mean, sd)") {
    const std::vector<double> v = {3.7, -1.2, 0.55, 9.01};
    const Standardised s = standardise(v);
    for (std::size_t i = 0; i < v.size(); ++i)
      CHECK(s.z[i] * s.sd + s.mean == Catch::Approx(v[i]).margin(1e-12));
  }
}
