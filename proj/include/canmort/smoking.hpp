#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "canmort/csv.hpp"
#include "canmort/errors.hpp"
#include "canmort/panel.hpp"

namespace canmort {

// Non-smoker prevalence by 10-year age band, gender, single year.
struct SmokingSeries {
  std::vector<AgeBand> bands;
  int year_min = 0;
  int year_max = 0;
  // [gender female=0/male=1][band][year - year_min]; NaN = absent
  std::vector<std::vector<std::vector<double>>> values;
  std::vector<std::vector<std::vector<bool>>> observed;

  int n_years() const { return year_max - year_min + 1; }

  double at(Gender g, int band, int year) const {
    if (year < year_min || year > year_max) fail(errc::lag_unavailable, "year " + std::to_string(year) + " outside smoking series");
    const double v = values[g == Gender::female ? 0 : 1][band][year - year_min];
    if (std::isnan(v)) fail(errc::lag_unavailable, "no smoking value for year " + std::to_string(year));
    return v;
  }

  int band_index(const std::string& label) const {
    for (std::size_t i = 0; i < bands.size(); ++i)
      if (bands[i].label == label) return static_cast<int>(i);
    fail(errc::schema_violation, "unknown smoking age band '" + label + "'");
  }

  // 5-year mortality bands map onto the band containing their midpoint; the
  // top smoking band is open-ended.
  int band_for_midpoint(double mid) const {
    for (std::size_t i = 0; i < bands.size(); ++i)
      if (mid >= bands[i].lo && mid <= bands[i].hi) return static_cast<int>(i);
    if (mid > bands.back().lo) return static_cast<int>(bands.size()) - 1;
    fail(errc::schema_violation, "no smoking band for age " + num(mid));
  }

  static SmokingSeries load(const std::string& path) {
    const CsvTable t = read_csv(path);
    const int c_band = t.require_column("age_band");
    const int c_gender = t.require_column("gender");
    const int c_year = t.require_column("year");
    const int c_rate = t.require_column("ns_rate");

    std::map<double, AgeBand> band_map; // keyed by lo for ordering
    int ymin = 0, ymax = 0;
    bool first = true;
    for (const auto& row : t.rows) {
      const AgeBand b = parse_age_band(row[c_band]);
      band_map.emplace(b.lo, b);
      const int y = static_cast<int>(parse_int(row[c_year], "year"));
      if (first || y < ymin) ymin = y;
      if (first || y > ymax) ymax = y;
      first = false;
    }
    if (first) fail(errc::schema_violation, "smoking file has no rows");

    SmokingSeries s;
    for (const auto& [lo, b] : band_map) s.bands.push_back(b);
    s.year_min = ymin;
    s.year_max = ymax;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.values.assign(2, std::vector<std::vector<double>>(s.bands.size(), std::vector<double>(s.n_years(), nan)));
    s.observed.assign(2, std::vector<std::vector<bool>>(s.bands.size(), std::vector<bool>(s.n_years(), false)));
    for (const auto& row : t.rows) {
      const int b = s.band_index(parse_age_band(row[c_band]).label);
      const int g = gender_from_string(row[c_gender]) == Gender::female ? 0 : 1;
      const int y = static_cast<int>(parse_int(row[c_year], "year")) - ymin;
      const double v = parse_double(row[c_rate], "ns_rate");
      if (v < 0.0 || v > 1.0) fail(errc::schema_violation, "ns_rate outside [0,1]");
      s.values[g][b][y] = v;
      s.observed[g][b][y] = true;
    }
    // contiguous year coverage per (band, gender) where any data exists
    for (int g = 0; g < 2; ++g) {
      for (std::size_t b = 0; b < s.bands.size(); ++b) {
        int lo = -1, hi = -1;
        for (int y = 0; y < s.n_years(); ++y) {
          if (s.observed[g][b][y]) {
            if (lo < 0) lo = y;
            hi = y;
          }
        }
        for (int y = lo; lo >= 0 && y <= hi; ++y)
          if (!s.observed[g][b][y])
            fail(errc::schema_violation, "gap in smoking series for band '" + s.bands[b].label + "'");
      }
    }
    return s;
  }

  void write(const std::string& path) const {
    CsvWriter w(path);
    w.row({"age_band", "gender", "year", "ns_rate", "reconstructed"});
    for (int g = 0; g < 2; ++g) {
      for (std::size_t b = 0; b < bands.size(); ++b) {
        for (int y = 0; y < n_years(); ++y) {
          const double v = values[g][b][y];
          if (std::isnan(v)) continue;
          w.row({bands[b].label, g == 0 ? "female" : "male", std::to_string(year_min + y), num(v),
                 observed[g][b][y] ? "0" : "1"});
        }
      }
    }
  }
};

// Gender-specific quadratic-trend model: rate = b0 + b1[a] + b2*t + b3*t^2 + b4[a]*t
// with sum-to-zero age blocks; fitted on year centred at 2006 and scaled by 10,
// reported in the original year scale.
struct BackcastModel {
  Gender gender = Gender::female;
  std::vector<AgeBand> bands;
  double b0 = 0.0;
  std::vector<double> b1; // per band, sums to zero
  double b2 = 0.0;
  double b3 = 0.0;
  std::vector<double> b4; // per band, sums to zero
  double rss = 0.0;

  double predict(int band, int year) const {
    const double t = static_cast<double>(year);
    return b0 + b1[band] + b2 * t + b3 * t * t + b4[band] * t;
  }
};

inline BackcastModel fit_backcast(const SmokingSeries& series, Gender gender) {
  constexpr double centre = 2006.0, scale = 10.0;
  const int gi = gender == Gender::female ? 0 : 1;
  const int nb = static_cast<int>(series.bands.size());

  std::vector<std::array<int, 2>> obs; // (band, year offset)
  for (int b = 0; b < nb; ++b)
    for (int y = 0; y < series.n_years(); ++y)
      if (series.observed[gi][b][y]) obs.push_back({b, y});
  const int n = static_cast<int>(obs.size());
  const int p = 1 + (nb - 1) + 2 + (nb - 1);
  if (n < p) fail(errc::singular_fit, "too few observations for the backcast design");

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const int b = obs[i][0];
    const double u = (series.year_min + obs[i][1] - centre) / scale;
    int c = 0;
    X(i, c++) = 1.0;
    for (int j = 0; j < nb - 1; ++j) X(i, c++) = (b == j) ? 1.0 : (b == nb - 1 ? -1.0 : 0.0);
    X(i, c++) = u;
    X(i, c++) = u * u;
    for (int j = 0; j < nb - 1; ++j) X(i, c++) = ((b == j) ? 1.0 : (b == nb - 1 ? -1.0 : 0.0)) * u;
    y(i) = series.values[gi][b][obs[i][1]];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) fail(errc::singular_fit, "rank-deficient backcast design");
  const Eigen::VectorXd beta = qr.solve(y);

  BackcastModel m;
  m.gender = gender;
  m.bands = series.bands;
  int c = 0;
  const double s0 = beta(c++);
  std::vector<double> a1(nb, 0.0), a4(nb, 0.0);
  for (int j = 0; j < nb - 1; ++j) a1[j] = beta(c++);
  const double s2 = beta(c++);
  const double s3 = beta(c++);
  for (int j = 0; j < nb - 1; ++j) a4[j] = beta(c++);
  double sum1 = 0.0, sum4 = 0.0;
  for (int j = 0; j < nb - 1; ++j) {
    sum1 += a1[j];
    sum4 += a4[j];
  }
  a1[nb - 1] = -sum1;
  a4[nb - 1] = -sum4;

  // back-transform u = (t - centre)/scale to the original year scale
  m.b3 = s3 / (scale * scale);
  m.b2 = s2 / scale - 2.0 * centre * s3 / (scale * scale);
  m.b0 = s0 - s2 * centre / scale + s3 * centre * centre / (scale * scale);
  m.b1.resize(nb);
  m.b4.resize(nb);
  for (int j = 0; j < nb; ++j) {
    m.b4[j] = a4[j] / scale;
    m.b1[j] = a1[j] - a4[j] * centre / scale;
  }
  m.rss = (y - X * beta).squaredNorm();
  return m;
}

struct ReconstructReport {
  int clamped = 0;
};

// Extends the series over [year_lo, year_hi]; observed years keep the
// observed values, model predictions fill the rest, clamped into [0,1].
inline SmokingSeries reconstruct(const SmokingSeries& series, const BackcastModel& female,
                                 const BackcastModel& male, int year_lo, int year_hi,
                                 ReconstructReport* report = nullptr) {
  if (year_hi < year_lo) fail(errc::schema_violation, "inverted reconstruction range");
  SmokingSeries out;
  out.bands = series.bands;
  out.year_min = std::min(year_lo, series.year_min);
  out.year_max = std::max(year_hi, series.year_max);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.values.assign(2, std::vector<std::vector<double>>(out.bands.size(),
                                                        std::vector<double>(out.n_years(), nan)));
  out.observed.assign(2, std::vector<std::vector<bool>>(out.bands.size(),
                                                        std::vector<bool>(out.n_years(), false)));
  for (int g = 0; g < 2; ++g) {
    const BackcastModel& m = g == 0 ? female : male;
    for (std::size_t b = 0; b < out.bands.size(); ++b) {
      for (int year = out.year_min; year <= out.year_max; ++year) {
        double v;
        bool obs = false;
        if (year >= series.year_min && year <= series.year_max &&
            series.observed[g][b][year - series.year_min]) {
          v = series.values[g][b][year - series.year_min];
          obs = true;
        } else {
          v = m.predict(static_cast<int>(b), year);
          if (v < 0.0 || v > 1.0) {
            v = std::clamp(v, 0.0, 1.0);
            if (report) ++report->clamped;
          }
        }
        out.values[g][b][year - out.year_min] = v;
        out.observed[g][b][year - out.year_min] = obs;
      }
    }
  }
  return out;
}

// NS prevalence twenty years before death, on the smoking band containing the
// mortality band's midpoint.
inline double lagged_ns(const SmokingSeries& series, const AgeBand& mortality_band, Gender gender,
                        int death_year) {
  const int lag_year = death_year - 20;
  if (lag_year < series.year_min || lag_year > series.year_max)
    fail(errc::lag_unavailable,
         "lagged year " + std::to_string(lag_year) + " outside smoking series " +
             std::to_string(series.year_min) + ".." + std::to_string(series.year_max));
  return series.at(gender, series.band_for_midpoint(mortality_band.midpoint), lag_year);
}

} // namespace canmort
