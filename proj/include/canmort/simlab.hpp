#pragma once

// Synthetic panels with known parameters, plus the brute-force oracles the
// test and acceptance suites check the samplers against.

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "canmort/mcmc.hpp"
#include "canmort/model_spec.hpp"
#include "canmort/panel.hpp"
#include "canmort/rng.hpp"

namespace canmort {

struct SyntheticCovariate {
  std::string name;
  bool by_age = false;
  bool by_deprivation = false;
  bool by_region = false;
  bool by_year = false;
  double lo = -1.0;
  double hi = 1.0;
};

struct GeneratorConfig {
  PanelSchema schema;
  ModelSpec spec;
  std::map<std::string, std::vector<double>> coef; // per term name; missing terms drawn N(0, auto_scale)
  double auto_scale = 0.3;
  double sigma2 = 0.005;
  std::vector<double> psi;       // per period block, in term order
  std::vector<double> kappa_var; // per period block
  std::vector<SyntheticCovariate> covariates;
  double exposure = 1e5;
  double exposure_jitter = 0.0; // multiplicative log-uniform half-width
  std::uint64_t seed = 1;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema"] = schema.to_json();
    j["spec"] = spec.to_json();
    for (const auto& [k, v] : coef) j["coef"][k] = v;
    j["auto_scale"] = auto_scale;
    j["sigma2"] = sigma2;
    j["psi"] = psi;
    j["kappa_var"] = kappa_var;
    for (const auto& c : covariates) {
      nlohmann::json e{{"name", c.name}, {"lo", c.lo}, {"hi", c.hi}};
      e["dims"] = nlohmann::json::array();
      if (c.by_age) e["dims"].push_back("age");
      if (c.by_deprivation) e["dims"].push_back("deprivation");
      if (c.by_region) e["dims"].push_back("region");
      if (c.by_year) e["dims"].push_back("year");
      j["covariates"].push_back(e);
    }
    j["exposure"] = exposure;
    j["exposure_jitter"] = exposure_jitter;
    j["seed"] = seed;
    return j;
  }

  static GeneratorConfig from_json(const nlohmann::json& j) {
    GeneratorConfig g;
    g.schema = PanelSchema::from_json(j.at("schema"));
    g.spec = ModelSpec::from_json(j.at("spec"));
    if (j.contains("coef"))
      for (const auto& [k, v] : j.at("coef").items()) g.coef[k] = v.get<std::vector<double>>();
    g.auto_scale = j.value("auto_scale", 0.3);
    g.sigma2 = j.value("sigma2", 0.005);
    if (j.contains("psi")) g.psi = j.at("psi").get<std::vector<double>>();
    if (j.contains("kappa_var")) g.kappa_var = j.at("kappa_var").get<std::vector<double>>();
    if (j.contains("covariates")) {
      for (const auto& e : j.at("covariates")) {
        SyntheticCovariate c;
        c.name = e.at("name").get<std::string>();
        c.lo = e.value("lo", -1.0);
        c.hi = e.value("hi", 1.0);
        for (const auto& d : e.at("dims")) {
          const std::string s = d.get<std::string>();
          if (s == "age") c.by_age = true;
          if (s == "deprivation") c.by_deprivation = true;
          if (s == "region") c.by_region = true;
          if (s == "year") c.by_year = true;
        }
        g.covariates.push_back(c);
      }
    }
    g.exposure = j.value("exposure", 1e5);
    g.exposure_jitter = j.value("exposure_jitter", 0.0);
    g.seed = j.value("seed", std::uint64_t{1});
    return g;
  }

  static GeneratorConfig from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(errc::io_error, "cannot open generator config '" + path + "'");
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  // pure: the same (seed, covariate, key) always gives the same raw value,
  // for observed and horizon years alike
  CovariateFn covariate_fn() const {
    auto defs = covariates;
    const std::uint64_t s = seed;
    return [defs, s](const std::string& name, const StratumKey& k) -> double {
      for (std::size_t ci = 0; ci < defs.size(); ++ci) {
        const auto& c = defs[ci];
        if (c.name != name) continue;
        const std::uint32_t i = (c.by_age ? static_cast<std::uint32_t>(k.age + 1) : 0u) |
                                (c.by_deprivation ? static_cast<std::uint32_t>(k.deprivation) << 8 : 0u);
        const std::uint32_t j = c.by_region ? static_cast<std::uint32_t>(k.region + 1) : 0u;
        const std::uint32_t y = c.by_year ? static_cast<std::uint32_t>(k.year) : 0u;
        const double u = crn_uniform(s + ci, crn_tag::covariate, i, j, y);
        return c.lo + (c.hi - c.lo) * u;
      }
      fail(errc::covariate_gap, "generator has no covariate '" + name + "'");
    };
  }
};

struct SimulatedData {
  MortalityPanel panel;
  DesignMatrix design;
  Eigen::VectorXd coef_true;       // aligned with design columns, realized kappa paths included
  double sigma2_true = 0.0;
  std::vector<double> psi_true;
  std::vector<double> kappa_var_true;
  Eigen::VectorXd theta;           // realized rates

  nlohmann::json truth_json() const {
    nlohmann::json j;
    for (int i = 0; i < design.n_cols(); ++i) j["coef"][design.col_names()[i]] = coef_true(i);
    j["sigma2"] = sigma2_true;
    j["psi"] = psi_true;
    j["kappa_var"] = kappa_var_true;
    return j;
  }
};

// simulate kappa by the random walk with drift, assemble mu, draw theta from
// the lognormal layer, D from the Poisson layer
inline SimulatedData generate(const GeneratorConfig& cfg) {
  RngStream rng(cfg.seed, 0);

  // exposures first: a plain panel with zero deaths to freeze the cell order
  MortalityPanel shape(cfg.schema, {});
  const std::size_t n = shape.n_expected();
  std::vector<MortalityCell> cells(n);
  {
    const PanelSchema& s = cfg.schema;
    const int deps = s.has_deprivation() ? s.deprivation_levels : 1;
    std::size_t i = 0;
    for (std::size_t g = 0; g < s.genders.size(); ++g)
      for (int t = 0; t < s.n_years(); ++t)
        for (std::size_t r = 0; r < s.regions.size(); ++r)
          for (int d = 0; d < deps; ++d)
            for (std::size_t a = 0; a < s.age_groups.size(); ++a, ++i) {
              cells[i].key = {static_cast<int>(a), s.genders[g], s.has_deprivation() ? d + 1 : 0,
                              static_cast<int>(r), s.year_min + t};
              const double jit = cfg.exposure_jitter > 0.0
                                     ? std::exp((2.0 * rng.uniform() - 1.0) * cfg.exposure_jitter)
                                     : 1.0;
              cells[i].exposure = cfg.exposure * jit;
              cells[i].deaths = 0.0;
            }
  }
  MortalityPanel panel(cfg.schema, std::move(cells));
  DesignMatrix design = build_design(cfg.spec, panel, cfg.covariate_fn());

  // coefficients: configured per term, auto-drawn otherwise; kappa blocks walk
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(design.n_cols());
  std::vector<double> psi_true, kv_true;
  int block = 0;
  for (const auto& tl : design.layout()) {
    if (tl.term.has_rw_prior()) {
      const double psi = block < static_cast<int>(cfg.psi.size()) ? cfg.psi[block] : 0.0;
      const double kv = block < static_cast<int>(cfg.kappa_var.size()) ? cfg.kappa_var[block] : 0.0;
      psi_true.push_back(psi);
      kv_true.push_back(kv);
      double prev = 0.0;
      for (int j = 0; j < tl.n_cols(); ++j) {
        prev += psi + (kv > 0.0 ? std::sqrt(kv) * rng.normal() : 0.0);
        coef(tl.col_begin + j) = prev;
      }
      ++block;
      continue;
    }
    const auto it = cfg.coef.find(tl.term.name);
    if (it != cfg.coef.end()) {
      if (static_cast<int>(it->second.size()) != tl.n_cols())
        fail(errc::schema_violation, "coef for term '" + tl.term.name + "' must have " +
                                         std::to_string(tl.n_cols()) + " values");
      for (int j = 0; j < tl.n_cols(); ++j) coef(tl.col_begin + j) = it->second[j];
    } else {
      for (int j = 0; j < tl.n_cols(); ++j) coef(tl.col_begin + j) = cfg.auto_scale * rng.normal();
    }
  }

  const Eigen::VectorXd mu = design.X() * coef;
  SimulatedData out{std::move(panel), std::move(design), coef, cfg.sigma2, psi_true, kv_true,
                    Eigen::VectorXd(mu.size())};

  std::vector<MortalityCell> filled(out.panel.cells());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double z = mu(i) + (cfg.sigma2 > 0.0 ? std::sqrt(cfg.sigma2) * rng.normal() : 0.0);
    out.theta(i) = std::exp(z);
    filled[i].deaths = static_cast<double>(rng.poisson(out.theta(i) * filled[i].exposure));
  }
  out.panel = MortalityPanel(cfg.schema, std::move(filled));
  return out;
}

// --- quadrature oracle -------------------------------------------------------

// probabilists' Gauss-Hermite rule: integrates f against the standard normal
inline void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(static_cast<double>(i));
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    nodes[i] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    weights[i] = v * v;
  }
}

struct GridPosterior {
  std::vector<double> grid;
  std::vector<double> density; // normalised, trapezoid
  double mean = 0.0;
  double sd = 0.0;

  double cdf(double x) const {
    if (x <= grid.front()) return 0.0;
    if (x >= grid.back()) return 1.0;
    double acc = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      const double h = grid[i] - grid[i - 1];
      if (x < grid[i]) {
        const double f = (x - grid[i - 1]) / h;
        const double dx_mid = density[i - 1] + f * (density[i] - density[i - 1]);
        acc += 0.5 * (density[i - 1] + dx_mid) * (x - grid[i - 1]);
        return acc;
      }
      acc += 0.5 * (density[i - 1] + density[i]) * h;
    }
    return 1.0;
  }
};

// Gridded posterior for a model with a single free coefficient: the latent
// lognormal layer is integrated out by Gauss-Hermite quadrature per cell.
inline GridPosterior oracle_posterior_1d(const MortalityPanel& panel, const DesignMatrix& design,
                                         double sigma2, double prior_mean, double prior_var,
                                         int grid_points = 10000) {
  if (design.n_cols() != 1) fail(errc::oracle_failure, "oracle needs exactly one free coefficient");
  if (panel.size() > 5) fail(errc::oracle_failure, "oracle restricted to <= 5 cells");

  std::vector<double> gh_x, gh_w;
  gauss_hermite(80, gh_x, gh_w);
  const double sigma = std::sqrt(sigma2);

  auto loglik = [&](double b) {
    double ll = 0.0;
    for (std::size_t i = 0; i < panel.size(); ++i) {
      const double D = panel.cell(i).deaths, E = panel.cell(i).exposure;
      const double m = design.X()(static_cast<Eigen::Index>(i), 0) * b;
      if (sigma2 <= 0.0) {
        ll += D * (m + std::log(E)) - E * std::exp(m) - std::lgamma(D + 1.0);
        continue;
      }
      double best = -std::numeric_limits<double>::infinity();
      std::vector<double> terms(gh_x.size());
      for (std::size_t q = 0; q < gh_x.size(); ++q) {
        const double zq = m + sigma * gh_x[q];
        terms[q] = D * (zq + std::log(E)) - E * std::exp(zq) - std::lgamma(D + 1.0);
        best = std::max(best, terms[q]);
      }
      double acc = 0.0;
      for (std::size_t q = 0; q < gh_x.size(); ++q) acc += gh_w[q] * std::exp(terms[q] - best);
      ll += best + std::log(acc);
    }
    return ll;
  };

  auto logpost = [&](double b) {
    return loglik(b) - 0.5 * (b - prior_mean) * (b - prior_mean) / prior_var;
  };

  // crude mode/scale guess, then widen-and-retry around it
  double centre = prior_mean, width = std::sqrt(prior_var);
  {
    double tot_d = 0.0, tot_e = 0.0;
    for (std::size_t i = 0; i < panel.size(); ++i) {
      tot_d += panel.cell(i).deaths;
      tot_e += panel.cell(i).exposure;
    }
    if (tot_d > 0.0) {
      const double b_hat = std::log(tot_d / tot_e) / design.X()(0, 0);
      const double se = 1.0 / std::sqrt(std::max(1.0, tot_d));
      if (std::isfinite(b_hat)) {
        centre = b_hat;
        width = 10.0 * se + 0.1;
      }
    }
  }

  for (int attempt = 0; attempt < 4; ++attempt) {
    GridPosterior out;
    out.grid.resize(grid_points);
    std::vector<double> lp(grid_points);
    double lp_max = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid_points; ++i) {
      out.grid[i] = centre - width + 2.0 * width * i / (grid_points - 1);
      lp[i] = logpost(out.grid[i]);
      lp_max = std::max(lp_max, lp[i]);
    }
    out.density.resize(grid_points);
    double mass = 0.0;
    for (int i = 0; i < grid_points; ++i) out.density[i] = std::exp(lp[i] - lp_max);
    for (int i = 1; i < grid_points; ++i)
      mass += 0.5 * (out.density[i] + out.density[i - 1]) * (out.grid[i] - out.grid[i - 1]);
    if (!(mass > 0.0) || !std::isfinite(mass)) fail(errc::oracle_failure, "oracle grid has no mass");
    const double edge = std::max(out.density.front(), out.density.back());
    if (edge > 1e-10 && attempt < 3) {
      width *= 2.0; // posterior mass reaches the grid edge: widen and retry
      continue;
    }
    if (edge > 1e-6) fail(errc::oracle_failure, "oracle grid never captured the posterior");
    double mean = 0.0;
    for (int i = 1; i < grid_points; ++i) {
      const double h = out.grid[i] - out.grid[i - 1];
      mean += 0.5 * (out.density[i] * out.grid[i] + out.density[i - 1] * out.grid[i - 1]) * h;
    }
    mean /= mass;
    double var = 0.0;
    for (int i = 1; i < grid_points; ++i) {
      const double h = out.grid[i] - out.grid[i - 1];
      var += 0.5 * (out.density[i] * (out.grid[i] - mean) * (out.grid[i] - mean) +
                    out.density[i - 1] * (out.grid[i - 1] - mean) * (out.grid[i - 1] - mean)) *
             h;
    }
    var /= mass;
    for (int i = 0; i < grid_points; ++i) out.density[i] /= mass;
    out.mean = mean;
    out.sd = std::sqrt(var);
    return out;
  }
  fail(errc::oracle_failure, "oracle failed after widen-and-retry");
}

} // namespace canmort
