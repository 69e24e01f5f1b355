#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "canmort/csv.hpp"
#include "canmort/errors.hpp"
#include "canmort/panel.hpp"

namespace canmort {

struct Standardised {
  std::vector<double> z;
  double mean = 0.0;
  double sd = 0.0; // population convention (divide by n)
};

inline Standardised standardise(std::span<const double> values) {
  if (values.empty()) fail(errc::degenerate_covariate, "empty covariate vector");
  double mean = 0.0;
  for (const double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(values.size()));
  if (sd <= 0.0) fail(errc::degenerate_covariate, "covariate has zero variance");
  Standardised out;
  out.mean = mean;
  out.sd = sd;
  out.z.reserve(values.size());
  for (const double v : values) out.z.push_back((v - mean) / sd);
  return out;
}

// Incidence-weighted mean age at diagnosis for one (gender, deprivation,
// region, diagnosis year); ages enter as band midpoints.
inline double aad_yearly(const IncidenceSurface& incidence, const StandardPopulation& std_pop,
                         StratumKey key) {
  const auto& ages = incidence.schema().age_groups;
  if (std_pop.weights.size() != ages.size())
    fail(errc::std_mismatch, "standard population does not match incidence age bands");
  double numer = 0.0, denom = 0.0;
  for (std::size_t a = 0; a < ages.size(); ++a) {
    key.age = static_cast<int>(a);
    const double w = incidence.rate(key) * std_pop.weights[a];
    numer += ages[a].midpoint * w;
    denom += w;
  }
  if (denom <= 0.0) fail(errc::undefined_aad, "all-zero incidence over age bands");
  return numer / denom;
}

inline double aad_timeavg(std::span<const double> yearly, std::span<const double> exposures) {
  if (yearly.empty() || yearly.size() != exposures.size())
    fail(errc::undefined_aad, "empty or mismatched year set for AAD averaging");
  double numer = 0.0, denom = 0.0;
  for (std::size_t i = 0; i < yearly.size(); ++i) {
    if (exposures[i] <= 0.0) fail(errc::bad_exposure, "non-positive exposure weight in AAD average");
    numer += yearly[i] * exposures[i];
    denom += exposures[i];
  }
  return numer / denom;
}

// Time-averaged AAD per (gender, deprivation, region), plus the yearly values
// it came from. When by_region_only is set the deprivation dimension is
// averaged out (exposure-weighted), for models where deprivation is absent.
class AADSurface {
public:
  AADSurface() = default;

  static AADSurface compute(const IncidenceSurface& incidence, const StandardPopulation& std_pop,
                            const MortalityPanel& panel, bool by_region_only = false) {
    const PanelSchema& s = panel.schema();
    AADSurface out;
    out.genders_ = s.genders;
    out.regions_ = s.regions;
    out.deps_ = by_region_only ? 0 : s.deprivation_levels;
    out.year_min_ = std::max(incidence.year_min(), s.year_min);
    out.year_max_ = std::min(incidence.year_max(), s.year_max);
    if (out.year_max_ < out.year_min_) fail(errc::undefined_aad, "incidence and panel years do not overlap");

    const int n_deps = s.has_deprivation() ? s.deprivation_levels : 1;
    const int n_y = out.year_max_ - out.year_min_ + 1;
    const int slots = static_cast<int>(s.genders.size() * s.regions.size()) * (out.deps_ > 0 ? out.deps_ : 1);
    out.yearly_.assign(slots * n_y, 0.0);
    out.value_.assign(slots, 0.0);

    for (std::size_t g = 0; g < s.genders.size(); ++g) {
      for (std::size_t r = 0; r < s.regions.size(); ++r) {
        if (out.deps_ > 0) {
          for (int d = 1; d <= n_deps; ++d) compute_slot(out, incidence, std_pop, panel, s.genders[g], d, static_cast<int>(r), false);
        } else {
          compute_slot(out, incidence, std_pop, panel, s.genders[g], 0, static_cast<int>(r), true);
        }
      }
    }
    return out;
  }

  double value(Gender g, int deprivation, int region) const {
    return value_[slot(g, deprivation, region)];
  }
  double yearly(Gender g, int deprivation, int region, int year) const {
    if (year < year_min_ || year > year_max_) fail(errc::undefined_aad, "year outside AAD surface");
    return yearly_[slot(g, deprivation, region) * (year_max_ - year_min_ + 1) + (year - year_min_)];
  }
  bool by_region_only() const { return deps_ == 0; }
  int year_min() const { return year_min_; }
  int year_max() const { return year_max_; }

  void write(const std::string& path) const {
    CsvWriter w(path);
    w.row({"gender", "deprivation", "region", "aad"});
    for (std::size_t g = 0; g < genders_.size(); ++g)
      for (std::size_t r = 0; r < regions_.size(); ++r) {
        if (deps_ > 0) {
          for (int d = 1; d <= deps_; ++d)
            w.row({to_string(genders_[g]), std::to_string(d), regions_[r],
                   num(value(genders_[g], d, static_cast<int>(r)))});
        } else {
          w.row({to_string(genders_[g]), "", regions_[r], num(value(genders_[g], 0, static_cast<int>(r)))});
        }
      }
  }

  void write_yearly(const std::string& path) const {
    CsvWriter w(path);
    w.row({"gender", "deprivation", "region", "year", "aad"});
    for (std::size_t g = 0; g < genders_.size(); ++g)
      for (std::size_t r = 0; r < regions_.size(); ++r)
        for (int d = (deps_ > 0 ? 1 : 0); d <= deps_; ++d)
          for (int y = year_min_; y <= year_max_; ++y)
            w.row({to_string(genders_[g]), deps_ > 0 ? std::to_string(d) : "", regions_[r],
                   std::to_string(y), num(yearly(genders_[g], d, static_cast<int>(r), y))});
  }

  static AADSurface load(const std::string& path, const PanelSchema& schema) {
    const CsvTable t = read_csv(path);
    const int c_gender = t.require_column("gender");
    const int c_dep = t.require_column("deprivation");
    const int c_region = t.require_column("region");
    const int c_aad = t.require_column("aad");
    AADSurface out;
    out.genders_ = schema.genders;
    out.regions_ = schema.regions;
    bool any_dep = false;
    for (const auto& row : t.rows)
      if (!row[c_dep].empty()) any_dep = true;
    out.deps_ = any_dep ? schema.deprivation_levels : 0;
    out.year_min_ = 0;
    out.year_max_ = -1;
    const int slots = static_cast<int>(out.genders_.size() * out.regions_.size()) * (out.deps_ > 0 ? out.deps_ : 1);
    out.value_.assign(slots, std::numeric_limits<double>::quiet_NaN());
    for (const auto& row : t.rows) {
      const Gender g = gender_from_string(row[c_gender]);
      const int d = row[c_dep].empty() ? 0 : static_cast<int>(parse_int(row[c_dep], "deprivation"));
      const int r = schema.region_index(row[c_region]);
      out.value_[out.slot(g, d, r)] = parse_double(row[c_aad], "aad");
    }
    for (const double v : out.value_)
      if (std::isnan(v)) fail(errc::grid_incomplete, "AAD file has missing (gender, deprivation, region) rows");
    return out;
  }

private:
  static void compute_slot(AADSurface& out, const IncidenceSurface& incidence,
                           const StandardPopulation& std_pop, const MortalityPanel& panel, Gender g,
                           int d, int r, bool average_deps) {
    const PanelSchema& s = panel.schema();
    const int n_deps = s.has_deprivation() ? s.deprivation_levels : 1;
    const int n_y = out.year_max_ - out.year_min_ + 1;
    std::vector<double> yearly(n_y, 0.0), weights(n_y, 0.0);
    for (int y = 0; y < n_y; ++y) {
      const int year = out.year_min_ + y;
      double num_acc = 0.0, wt_acc = 0.0;
      for (int dd = (s.has_deprivation() ? 1 : 0); dd <= (s.has_deprivation() ? n_deps : 0) || (!s.has_deprivation() && dd == 0); ++dd) {
        if (!average_deps && dd != d) continue;
        StratumKey k{0, g, dd, r, year};
        const double a = aad_yearly(incidence, std_pop, k);
        double expo = 0.0;
        for (std::size_t ai = 0; ai < s.age_groups.size(); ++ai) {
          StratumKey pk{static_cast<int>(ai), g, dd, r, year};
          expo += panel.cell(panel.index(pk)).exposure;
        }
        num_acc += a * expo;
        wt_acc += expo;
        if (!average_deps) break;
      }
      yearly[y] = num_acc / wt_acc;
      weights[y] = wt_acc;
    }
    const int slot_idx = out.slot(g, average_deps ? 0 : d, r);
    for (int y = 0; y < n_y; ++y) out.yearly_[slot_idx * n_y + y] = yearly[y];
    out.value_[slot_idx] = aad_timeavg(yearly, weights);
  }

  int slot(Gender g, int deprivation, int region) const {
    int gi = 0;
    for (std::size_t i = 0; i < genders_.size(); ++i)
      if (genders_[i] == g) gi = static_cast<int>(i);
    const int nd = deps_ > 0 ? deps_ : 1;
    const int di = deps_ > 0 ? deprivation - 1 : 0;
    if (deps_ > 0 && (deprivation < 1 || deprivation > deps_))
      fail(errc::schema_violation, "deprivation outside AAD surface");
    return (gi * static_cast<int>(regions_.size()) + region) * nd + di;
  }

  std::vector<Gender> genders_;
  std::vector<std::string> regions_;
  int deps_ = 0;
  int year_min_ = 0, year_max_ = -1;
  std::vector<double> yearly_;
  std::vector<double> value_;
};

} // namespace canmort
