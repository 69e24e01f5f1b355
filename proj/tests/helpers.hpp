#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "canmort/panel.hpp"

namespace testutil {

// fresh scratch directory per test binary invocation
inline std::filesystem::path scratch_dir() {
  static std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() /
             ("canmort_test_" + std::to_string(static_cast<unsigned>(::getpid())));
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

inline std::string scratch_file(const std::string& name) { return (scratch_dir() / name).string(); }

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Kolmogorov-Smirnov distance between samples and an exact CDF
template <typename Cdf>
double ks_distance(std::vector<double> samples, Cdf cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs((i + 1) / n - f));
    d = std::max(d, std::abs(i / n - f));
  }
  return d;
}

inline canmort::PanelSchema small_schema(int n_ages, int n_regions, int n_deps, int year_min,
                                         int year_max, canmort::Gender gender = canmort::Gender::female,
                                         canmort::Cause cause = canmort::Cause::lung) {
  canmort::PanelSchema s;
  s.cause = cause;
  for (int a = 0; a < n_ages; ++a) {
    const int lo = 45 + 5 * a;
    s.age_groups.push_back(canmort::parse_age_band(std::to_string(lo) + "-" + std::to_string(lo + 4)));
  }
  for (int r = 0; r < n_regions; ++r) s.regions.push_back("R" + std::to_string(r + 1));
  s.deprivation_levels = n_deps;
  s.genders = {gender};
  s.year_min = year_min;
  s.year_max = year_max;
  return s;
}

} // namespace testutil
