#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "canmort/csv.hpp"
#include "canmort/errors.hpp"

namespace canmort {

enum class Gender { female, male };
enum class Cause { lung, breast };

inline std::string to_string(Gender g) { return g == Gender::female ? "female" : "male"; }
inline std::string to_string(Cause c) { return c == Cause::lung ? "lung" : "breast"; }

inline Gender gender_from_string(const std::string& s) {
  if (s == "female" || s == "f") return Gender::female;
  if (s == "male" || s == "m") return Gender::male;
  fail(errc::schema_violation, "unknown gender '" + s + "'");
}

inline Cause cause_from_string(const std::string& s) {
  if (s == "lung") return Cause::lung;
  if (s == "breast") return Cause::breast;
  fail(errc::schema_violation, "unknown cause '" + s + "'");
}

struct AgeBand {
  std::string label;
  double lo = 0.0;
  double hi = 0.0;
  double midpoint = 0.0;
};

// Parses "45-54", "95+" (open bands span 5 years for mapping purposes).
inline AgeBand parse_age_band(const std::string& label, std::optional<double> midpoint = {}) {
  AgeBand b;
  b.label = label;
  const auto dash = label.find('-');
  if (dash != std::string::npos) {
    b.lo = parse_double(label.substr(0, dash), "age band");
    b.hi = parse_double(label.substr(dash + 1), "age band");
  } else if (!label.empty() && label.back() == '+') {
    b.lo = parse_double(label.substr(0, label.size() - 1), "age band");
    b.hi = b.lo + 4.0;
  } else {
    const double a = parse_double(label, "age band");
    b.lo = b.hi = a;
  }
  if (b.hi < b.lo) fail(errc::schema_violation, "age band '" + label + "' has hi < lo");
  b.midpoint = midpoint.value_or((b.lo + b.hi) / 2.0);
  return b;
}

struct StratumKey {
  int age = 0;        // ordinal index into schema age bands
  Gender gender = Gender::female;
  int deprivation = 0; // 1..5 quintiles (1 = most deprived), 0 = none
  int region = 0;     // ordinal index into schema regions
  int year = 0;       // calendar year
};

struct MortalityCell {
  StratumKey key;
  double deaths = 0.0;
  double exposure = 0.0;
};

inline double crude_rate(const MortalityCell& cell) { return cell.deaths / cell.exposure; }

struct PanelSchema {
  Cause cause = Cause::lung;
  std::vector<AgeBand> age_groups;
  std::vector<std::string> regions;
  int deprivation_levels = 0; // 0 when the panel has no deprivation dimension
  bool decile_coded = false;  // input files carry deciles 1..10, merged pairwise at load
  std::vector<Gender> genders;
  int year_min = 0;
  int year_max = 0;

  int n_years() const { return year_max - year_min + 1; }
  bool has_deprivation() const { return deprivation_levels > 0; }

  int age_index(const std::string& label) const {
    for (std::size_t i = 0; i < age_groups.size(); ++i)
      if (age_groups[i].label == label) return static_cast<int>(i);
    fail(errc::schema_violation, "unknown age group '" + label + "'");
  }
  int region_index(const std::string& label) const {
    for (std::size_t i = 0; i < regions.size(); ++i)
      if (regions[i] == label) return static_cast<int>(i);
    fail(errc::schema_violation, "unknown region '" + label + "'");
  }
  int gender_index(Gender g) const {
    for (std::size_t i = 0; i < genders.size(); ++i)
      if (genders[i] == g) return static_cast<int>(i);
    fail(errc::schema_violation, "gender not declared by schema");
  }

  static PanelSchema from_json(const nlohmann::json& j) {
    PanelSchema s;
    s.cause = cause_from_string(j.at("cause").get<std::string>());
    for (const auto& a : j.at("age_groups")) {
      if (a.is_string()) {
        s.age_groups.push_back(parse_age_band(a.get<std::string>()));
      } else {
        std::optional<double> mid;
        if (a.contains("midpoint")) mid = a.at("midpoint").get<double>();
        s.age_groups.push_back(parse_age_band(a.at("label").get<std::string>(), mid));
      }
    }
    for (const auto& r : j.at("regions")) s.regions.push_back(r.get<std::string>());
    if (j.contains("deprivation")) {
      s.deprivation_levels = j.at("deprivation").at("levels").get<int>();
      if (j.at("deprivation").contains("input_coding"))
        s.decile_coded = j.at("deprivation").at("input_coding").get<std::string>() == "decile";
    }
    for (const auto& g : j.at("genders")) s.genders.push_back(gender_from_string(g.get<std::string>()));
    s.year_min = j.at("years").at("min").get<int>();
    s.year_max = j.at("years").at("max").get<int>();
    s.validate();
    return s;
  }

  static PanelSchema from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(errc::io_error, "cannot open schema '" + path + "'");
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["cause"] = to_string(cause);
    for (const auto& a : age_groups) j["age_groups"].push_back({{"label", a.label}, {"midpoint", a.midpoint}});
    j["regions"] = regions;
    if (deprivation_levels > 0)
      j["deprivation"] = {{"levels", deprivation_levels},
                          {"input_coding", decile_coded ? "decile" : "quintile"}};
    for (const auto& g : genders) j["genders"].push_back(to_string(g));
    j["years"] = {{"min", year_min}, {"max", year_max}};
    return j;
  }

  void validate() const {
    if (age_groups.empty() || regions.empty() || genders.empty())
      fail(errc::schema_violation, "schema needs age groups, regions, genders");
    if (year_max < year_min) fail(errc::schema_violation, "schema year range inverted");
    if (deprivation_levels < 0 || (deprivation_levels != 0 && deprivation_levels != 5))
      fail(errc::schema_violation, "deprivation levels must be 0 or 5");
    std::set<std::string> seen;
    for (const auto& a : age_groups)
      if (!seen.insert(a.label).second) fail(errc::schema_violation, "duplicate age group '" + a.label + "'");
  }
};

// Complete rectangular grid over the schema's level sets, frozen in
// lexicographic (gender, year, region, deprivation, age) order.
class MortalityPanel {
public:
  MortalityPanel() = default;
  MortalityPanel(PanelSchema schema, std::vector<MortalityCell> cells)
      : schema_(std::move(schema)), cells_(std::move(cells)) {}

  const PanelSchema& schema() const { return schema_; }
  const std::vector<MortalityCell>& cells() const { return cells_; }
  std::size_t size() const { return cells_.size(); }
  const MortalityCell& cell(std::size_t i) const { return cells_[i]; }

  std::size_t n_expected() const {
    const std::size_t deps = schema_.has_deprivation() ? schema_.deprivation_levels : 1;
    return schema_.genders.size() * schema_.n_years() * schema_.regions.size() * deps *
           schema_.age_groups.size();
  }

  std::size_t index(const StratumKey& k) const {
    const int g = schema_.gender_index(k.gender);
    const int t = k.year - schema_.year_min;
    const int deps = schema_.has_deprivation() ? schema_.deprivation_levels : 1;
    const int d = schema_.has_deprivation() ? k.deprivation - 1 : 0;
    if (t < 0 || t >= schema_.n_years() || k.region < 0 ||
        k.region >= static_cast<int>(schema_.regions.size()) || d < 0 || d >= deps || k.age < 0 ||
        k.age >= static_cast<int>(schema_.age_groups.size()))
      fail(errc::schema_violation, "key outside panel level sets");
    std::size_t idx = g;
    idx = idx * schema_.n_years() + t;
    idx = idx * schema_.regions.size() + k.region;
    idx = idx * deps + d;
    idx = idx * schema_.age_groups.size() + k.age;
    return idx;
  }

  double total_deaths() const {
    double s = 0.0;
    for (const auto& c : cells_) s += c.deaths;
    return s;
  }
  double total_exposure() const {
    double s = 0.0;
    for (const auto& c : cells_) s += c.exposure;
    return s;
  }

private:
  PanelSchema schema_;
  std::vector<MortalityCell> cells_;
};

namespace detail {

inline std::string key_text(const PanelSchema& s, const StratumKey& k) {
  std::string out = "(age=" + s.age_groups[k.age].label + ", gender=" + to_string(k.gender);
  if (s.has_deprivation()) out += ", deprivation=" + std::to_string(k.deprivation);
  out += ", region=" + s.regions[k.region] + ", year=" + std::to_string(k.year) + ")";
  return out;
}

} // namespace detail

inline MortalityPanel load_panel(const std::string& path, const PanelSchema& schema) {
  const CsvTable t = read_csv(path);
  const int c_age = t.require_column("age_group");
  const int c_gender = t.require_column("gender");
  const int c_dep = schema.has_deprivation() ? t.require_column("deprivation") : -1;
  const int c_region = t.require_column("region");
  const int c_year = t.require_column("year");
  const int c_deaths = t.require_column("deaths");
  const int c_exposure = t.require_column("exposure");

  // Load at input resolution (deciles when so coded), then merge pairs.
  const int in_deps = schema.has_deprivation() ? (schema.decile_coded ? 10 : 5) : 1;
  PanelSchema in_schema = schema;
  if (schema.has_deprivation() && schema.decile_coded) in_schema.deprivation_levels = 10;

  const std::size_t n = in_schema.genders.size() * in_schema.n_years() * in_schema.regions.size() *
                        in_deps * in_schema.age_groups.size();
  std::vector<MortalityCell> grid(n);
  std::vector<int> seen(n, 0);

  auto in_index = [&](const StratumKey& k) {
    std::size_t idx = in_schema.gender_index(k.gender);
    idx = idx * in_schema.n_years() + (k.year - in_schema.year_min);
    idx = idx * in_schema.regions.size() + k.region;
    idx = idx * in_deps + (in_schema.has_deprivation() ? k.deprivation - 1 : 0);
    idx = idx * in_schema.age_groups.size() + k.age;
    return idx;
  };

  for (const auto& row : t.rows) {
    StratumKey k;
    k.age = in_schema.age_index(row[c_age]);
    k.gender = gender_from_string(row[c_gender]);
    (void)in_schema.gender_index(k.gender);
    k.region = in_schema.region_index(row[c_region]);
    k.year = static_cast<int>(parse_int(row[c_year], "year"));
    if (k.year < in_schema.year_min || k.year > in_schema.year_max)
      fail(errc::schema_violation, "year " + std::to_string(k.year) + " outside schema range");
    if (schema.has_deprivation()) {
      k.deprivation = static_cast<int>(parse_int(row[c_dep], "deprivation"));
      if (k.deprivation < 1 || k.deprivation > in_deps)
        fail(errc::schema_violation, "deprivation level " + std::to_string(k.deprivation) +
                                         " outside 1.." + std::to_string(in_deps));
    }
    const double deaths = parse_double(row[c_deaths], "deaths");
    const double exposure = parse_double(row[c_exposure], "exposure");
    if (exposure <= 0.0) fail(errc::bad_exposure, "exposure " + num(exposure) + " at " + detail::key_text(in_schema, k));
    if (deaths < 0.0) fail(errc::schema_violation, "negative deaths at " + detail::key_text(in_schema, k));
    if (deaths / exposure > 1.0)
      fail(errc::schema_violation, "deaths exceed exposure at " + detail::key_text(in_schema, k));
    const std::size_t idx = in_index(k);
    if (seen[idx]) fail(errc::schema_violation, "duplicate cell " + detail::key_text(in_schema, k));
    seen[idx] = 1;
    grid[idx] = {k, deaths, exposure};
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) {
      // reconstruct the missing key for the message
      std::size_t r = i;
      StratumKey k;
      k.age = static_cast<int>(r % in_schema.age_groups.size());
      r /= in_schema.age_groups.size();
      k.deprivation = in_schema.has_deprivation() ? static_cast<int>(r % in_deps) + 1 : 0;
      r /= in_deps;
      k.region = static_cast<int>(r % in_schema.regions.size());
      r /= in_schema.regions.size();
      k.year = in_schema.year_min + static_cast<int>(r % in_schema.n_years());
      r /= in_schema.n_years();
      k.gender = in_schema.genders[r];
      fail(errc::grid_incomplete, "missing cell " + detail::key_text(in_schema, k));
    }
  }

  if (schema.has_deprivation() && schema.decile_coded) {
    // deciles (1,2)->quintile 1, ..., (9,10)->quintile 5
    PanelSchema out_schema = schema;
    out_schema.deprivation_levels = 5;
    out_schema.decile_coded = false;
    std::vector<MortalityCell> out;
    out.reserve(n / 2);
    MortalityPanel shape(out_schema, {});
    out.resize(shape.n_expected());
    for (const auto& c : grid) {
      StratumKey k = c.key;
      k.deprivation = (c.key.deprivation + 1) / 2;
      const std::size_t idx = shape.index(k);
      out[idx].key = k;
      out[idx].deaths += c.deaths;
      out[idx].exposure += c.exposure;
    }
    return MortalityPanel(out_schema, std::move(out));
  }

  PanelSchema out_schema = schema;
  out_schema.decile_coded = false;
  return MortalityPanel(out_schema, std::move(grid));
}

enum class Dimension { age_group, deprivation, region };

inline MortalityPanel aggregate(const MortalityPanel& panel, const std::set<Dimension>& drop) {
  if (drop.count(Dimension::deprivation) && !panel.schema().has_deprivation())
    fail(errc::schema_violation, "panel has no deprivation dimension to drop");

  PanelSchema s = panel.schema();
  if (drop.count(Dimension::deprivation)) s.deprivation_levels = 0;
  if (drop.count(Dimension::region)) s.regions = {"all"};
  if (drop.count(Dimension::age_group)) {
    AgeBand all;
    all.label = "all";
    all.lo = s.age_groups.front().lo;
    all.hi = s.age_groups.back().hi;
    all.midpoint = (all.lo + all.hi) / 2.0;
    s.age_groups = {all};
  }

  MortalityPanel out(s, {});
  std::vector<MortalityCell> cells(out.n_expected());
  for (const auto& c : panel.cells()) {
    StratumKey k = c.key;
    if (drop.count(Dimension::deprivation)) k.deprivation = 0;
    if (drop.count(Dimension::region)) k.region = 0;
    if (drop.count(Dimension::age_group)) k.age = 0;
    const std::size_t idx = out.index(k);
    cells[idx].key = k;
    cells[idx].deaths += c.deaths;
    cells[idx].exposure += c.exposure;
  }
  return MortalityPanel(s, std::move(cells));
}

inline void write_panel_csv(const MortalityPanel& panel, const std::string& path) {
  CsvWriter w(path);
  std::vector<std::string> header = {"age_group", "gender"};
  if (panel.schema().has_deprivation()) header.push_back("deprivation");
  header.insert(header.end(), {"region", "year", "deaths", "exposure"});
  w.row(header);
  for (const auto& c : panel.cells()) {
    std::vector<std::string> row = {panel.schema().age_groups[c.key.age].label, to_string(c.key.gender)};
    if (panel.schema().has_deprivation()) row.push_back(std::to_string(c.key.deprivation));
    row.insert(row.end(), {panel.schema().regions[c.key.region], std::to_string(c.key.year),
                           num(c.deaths), num(c.exposure)});
    w.row(row);
  }
}

// Standard population weights aligned with a schema's age bands.
struct StandardPopulation {
  std::vector<double> weights; // one per schema age band

  static StandardPopulation for_schema(const std::string& esp_csv_path, const PanelSchema& schema) {
    const CsvTable t = read_csv(esp_csv_path);
    const int c_age = t.require_column("age_group");
    const int c_w = t.require_column("weight");
    std::vector<AgeBand> bands;
    std::vector<double> w;
    for (const auto& row : t.rows) {
      bands.push_back(parse_age_band(row[c_age]));
      const double v = parse_double(row[c_w], "weight");
      if (v <= 0.0) fail(errc::std_mismatch, "non-positive standard weight for " + row[c_age]);
      w.push_back(v);
    }
    StandardPopulation sp;
    for (const auto& target : schema.age_groups) {
      // exact label match wins; otherwise sum the standard bands covered by the target band
      double acc = 0.0;
      bool direct = false;
      for (std::size_t i = 0; i < bands.size(); ++i) {
        if (bands[i].label == target.label) {
          acc = w[i];
          direct = true;
          break;
        }
      }
      if (!direct) {
        double covered = 0.0;
        for (std::size_t i = 0; i < bands.size(); ++i) {
          if (bands[i].lo >= target.lo && bands[i].hi <= target.hi) {
            acc += w[i];
            covered += bands[i].hi - bands[i].lo + 1.0;
          }
        }
        if (covered != target.hi - target.lo + 1.0)
          fail(errc::std_mismatch, "standard population does not cover band '" + target.label + "'");
      }
      sp.weights.push_back(acc);
    }
    return sp;
  }
};

// Fitted cause-specific incidence rates over (age, gender, deprivation, region, diagnosis year).
class IncidenceSurface {
public:
  IncidenceSurface() = default;

  static IncidenceSurface load(const std::string& path, const PanelSchema& schema) {
    const CsvTable t = read_csv(path);
    const int c_age = t.require_column("age_group");
    const int c_gender = t.require_column("gender");
    const int c_dep = schema.has_deprivation() ? t.require_column("deprivation") : -1;
    const int c_region = t.require_column("region");
    const int c_year = t.require_column("year");
    const int c_lambda = t.require_column("lambda_hat");
    IncidenceSurface s;
    s.schema_ = schema;
    int ymin = 0, ymax = 0;
    bool first = true;
    for (const auto& row : t.rows) {
      const int y = static_cast<int>(parse_int(row[c_year], "year"));
      if (first || y < ymin) ymin = y;
      if (first || y > ymax) ymax = y;
      first = false;
    }
    if (first) fail(errc::schema_violation, "incidence file has no rows");
    s.year_min_ = ymin;
    s.year_max_ = ymax;
    const std::size_t deps = schema.has_deprivation() ? schema.deprivation_levels : 1;
    const std::size_t n = schema.genders.size() * (ymax - ymin + 1) * schema.regions.size() * deps *
                          schema.age_groups.size();
    s.rates_.assign(n, -1.0);
    for (const auto& row : t.rows) {
      StratumKey k;
      k.age = schema.age_index(row[c_age]);
      k.gender = gender_from_string(row[c_gender]);
      k.region = schema.region_index(row[c_region]);
      k.year = static_cast<int>(parse_int(row[c_year], "year"));
      k.deprivation = schema.has_deprivation() ? static_cast<int>(parse_int(row[c_dep], "deprivation")) : 0;
      const double v = parse_double(row[c_lambda], "lambda_hat");
      if (v < 0.0) fail(errc::schema_violation, "negative incidence rate");
      s.rates_[s.flat(k)] = v;
    }
    for (const double v : s.rates_)
      if (v < 0.0) fail(errc::grid_incomplete, "incidence surface has missing cells");
    return s;
  }

  double rate(const StratumKey& k) const { return rates_[flat(k)]; }
  int year_min() const { return year_min_; }
  int year_max() const { return year_max_; }
  const PanelSchema& schema() const { return schema_; }

private:
  std::size_t flat(const StratumKey& k) const {
    const std::size_t deps = schema_.has_deprivation() ? schema_.deprivation_levels : 1;
    std::size_t idx = schema_.gender_index(k.gender);
    idx = idx * (year_max_ - year_min_ + 1) + (k.year - year_min_);
    idx = idx * schema_.regions.size() + k.region;
    idx = idx * deps + (schema_.has_deprivation() ? k.deprivation - 1 : 0);
    idx = idx * schema_.age_groups.size() + k.age;
    return idx;
  }

  PanelSchema schema_;
  int year_min_ = 0, year_max_ = 0;
  std::vector<double> rates_;
};

} // namespace canmort
