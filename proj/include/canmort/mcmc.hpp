#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <thread>
#include <vector>

#include <json.hpp>

#include "canmort/errors.hpp"
#include "canmort/model_spec.hpp"
#include "canmort/rng.hpp"

namespace canmort {

struct PriorSet {
  double beta_variance = 1e4;      // Normal(0, 1e4) per free coefficient
  double sigma2_shape = 1.0;       // sigma^2 ~ InvGamma(1, 0.1)
  double sigma2_rate = 0.1;
  double kappa_var_shape = 1.0;    // sigma^2_kappa ~ InvGamma(1, 0.001)
  double kappa_var_rate = 0.001;
  // psi ~ Normal(0, sigma2_psi), sigma2_psi = sigma2_kappa / (n_years - 1),
  // plugged in with the current sigma2_kappa draw each sweep.
};

struct SampleConfig {
  int chains = 4;
  int iters = 20000;
  int burnin = 10000;
  int thin = 10;
  std::uint64_t seed = 1;
  int threads = 0; // 0 = one per chain up to hardware
  std::optional<double> fix_sigma2;
  double temperature = 1.0; // powers the Poisson term; 1 = ordinary posterior
  double rhat_warn = 1.1;
  double z_min = -30.0; // support guard on the latent log-rates
  double z_max = 0.0;

  int n_stored() const { return (iters - burnin) / thin; }
  void validate() const {
    if (chains < 1 || iters <= burnin || burnin < 0 || thin < 1 || n_stored() < 2)
      fail(errc::schema_violation, "sampler config must satisfy iters > burnin >= 0, thin >= 1");
  }
};

struct PeriodBlock {
  int term_index = 0;  // into design layout
  int col_begin = 0;
  int n_cols = 0;      // free kappa parameters (T - 1)
  int psi_param = 0;   // parameter column of psi
  int var_param = 0;   // parameter column of sigma2_kappa
  std::string base;    // "kappa1" / "kappa2"
};

struct ChainDraws {
  Eigen::MatrixXd draws;            // stored x n_params
  std::vector<double> pois_loglik;  // conditional Poisson log-likelihood per stored draw
  double accept_rate = 0.0;         // mean z-block acceptance after burn-in
};

// Full sampler state, used to warm-start one run from another (the power
// posterior ladder walks temperatures with a persistent chain).
struct ChainState {
  bool valid = false;
  Eigen::VectorXd beta;
  Eigen::VectorXd z;
  double sigma2 = 0.01;
  std::vector<double> psi;
  std::vector<double> kappa_var;
  std::vector<double> step;
};

struct PosteriorDraws {
  std::vector<std::string> param_names;
  int n_coef = 0;   // design columns; params [0, n_coef) are coefficients
  int idx_sigma2 = 0;
  std::vector<PeriodBlock> period_blocks;
  SampleConfig config;
  std::vector<ChainDraws> chains;
  bool convergence_warning = false;

  int n_params() const { return static_cast<int>(param_names.size()); }
  int n_stored_per_chain() const { return static_cast<int>(chains.front().draws.rows()); }
  int n_stored_total() const { return n_stored_per_chain() * static_cast<int>(chains.size()); }

  double value(int chain, int draw, int param) const { return chains[chain].draws(draw, param); }

  Eigen::VectorXd merged(int param) const {
    const int per = n_stored_per_chain();
    Eigen::VectorXd v(n_stored_total());
    for (std::size_t c = 0; c < chains.size(); ++c)
      v.segment(static_cast<Eigen::Index>(c) * per, per) = chains[c].draws.col(param);
    return v;
  }

  Eigen::VectorXd posterior_mean() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n_params());
    for (const auto& c : chains) m += c.draws.colwise().mean().transpose();
    return m / static_cast<double>(chains.size());
  }
};

namespace detail {

struct CellData {
  Eigen::VectorXd deaths;
  Eigen::VectorXd exposure;
  Eigen::VectorXd log_exposure;
  double lgamma_const = 0.0; // sum of lgamma(D+1)
};

inline CellData make_cell_data(const MortalityPanel& panel) {
  CellData cd;
  const auto n = static_cast<Eigen::Index>(panel.size());
  cd.deaths.resize(n);
  cd.exposure.resize(n);
  cd.log_exposure.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cd.deaths(i) = panel.cell(i).deaths;
    cd.exposure(i) = panel.cell(i).exposure;
    cd.log_exposure(i) = std::log(panel.cell(i).exposure);
    cd.lgamma_const += std::lgamma(panel.cell(i).deaths + 1.0);
  }
  return cd;
}

// Prior precision and linear term for the coefficient block: independent
// Normal(0, v) columns, random-walk-with-drift precision on each kappa block.
inline void coef_prior(const std::vector<PeriodBlock>& blocks, int n_coef, double beta_variance,
                       const std::vector<double>& kappa_var, const std::vector<double>& psi,
                       Eigen::MatrixXd& P, Eigen::VectorXd& b) {
  P.setZero(n_coef, n_coef);
  b.setZero(n_coef);
  for (int j = 0; j < n_coef; ++j) P(j, j) = 1.0 / beta_variance;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const PeriodBlock& blk = blocks[k];
    const double iv = 1.0 / kappa_var[k];
    for (int j = 0; j < blk.n_cols; ++j) P(blk.col_begin + j, blk.col_begin + j) = 0.0;
    // D^T D / var with D the first-difference operator anchored at kappa_1 = 0
    for (int j = 0; j < blk.n_cols; ++j) {
      P(blk.col_begin + j, blk.col_begin + j) += (j + 1 < blk.n_cols ? 2.0 : 1.0) * iv;
      if (j + 1 < blk.n_cols) {
        P(blk.col_begin + j, blk.col_begin + j + 1) -= iv;
        P(blk.col_begin + j + 1, blk.col_begin + j) -= iv;
      }
    }
    b(blk.col_begin + blk.n_cols - 1) += psi[k] * iv;
  }
}

} // namespace detail

namespace gibbs {

// beta | z, sigma2: Gaussian with precision X'X/sigma2 + P and linear term
// X'z/sigma2 + b
inline Eigen::VectorXd coefficients(const Eigen::MatrixXd& xtx, const Eigen::VectorXd& xtz,
                                    double sigma2, const Eigen::MatrixXd& P, const Eigen::VectorXd& b,
                                    RngStream& rng) {
  const Eigen::MatrixXd A = xtx / sigma2 + P;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) fail(errc::init_failure, "coefficient precision not positive definite");
  const Eigen::VectorXd mean = llt.solve(xtz / sigma2 + b);
  Eigen::VectorXd unit(xtx.rows());
  for (Eigen::Index j = 0; j < unit.size(); ++j) unit(j) = rng.normal();
  return mean + llt.matrixU().solve(unit);
}

// sigma2 | z, beta with ss = sum of squared residuals over n cells
inline double lognormal_variance(double ss, int n, const PriorSet& priors, RngStream& rng) {
  return rng.inv_gamma(priors.sigma2_shape + 0.5 * n, priors.sigma2_rate + 0.5 * ss);
}

} // namespace gibbs

struct DiagnosticsReport {
  std::vector<double> rhat; // NaN with a single chain (split-Rhat unavailable)
  std::vector<double> ess;
  std::vector<double> accept; // per chain
  double max_rhat = 0.0;
  bool rhat_available = false;
};

inline DiagnosticsReport diagnostics(const PosteriorDraws& draws);

inline double truncated_normal(double mean, double sd, double lo, double hi, RngStream& rng) {
  const double a = normal_cdf((lo - mean) / sd);
  const double b = normal_cdf((hi - mean) / sd);
  if (b - a < 1e-14) return mean < lo ? lo : hi; // mass collapsed onto a boundary
  return std::clamp(mean + sd * normal_quantile(a + rng.uniform() * (b - a)), lo, hi);
}

// Exact draw from the joint prior of (beta, sigma2, psi, kappa paths, z); the
// power-posterior ladder anchors its t = 0 rung here.
inline ChainState prior_state(const DesignMatrix& design, const PriorSet& priors,
                              const SampleConfig& cfg, RngStream& rng) {
  const int p = design.n_cols();
  const int T_years = design.schema().n_years();
  ChainState st;
  st.beta.resize(p);
  for (int j = 0; j < p; ++j) st.beta(j) = std::sqrt(priors.beta_variance) * rng.normal();
  st.psi.clear();
  st.kappa_var.clear();
  for (const auto& tl : design.layout()) {
    if (!tl.term.has_rw_prior()) continue;
    const double kv = rng.inv_gamma(priors.kappa_var_shape, priors.kappa_var_rate);
    const double psi = std::sqrt(kv / (T_years - 1)) * rng.normal();
    double prev = 0.0;
    for (int j = 0; j < tl.n_cols(); ++j) {
      prev += psi + std::sqrt(kv) * rng.normal();
      st.beta(tl.col_begin + j) = prev;
    }
    st.psi.push_back(psi);
    st.kappa_var.push_back(kv);
  }
  st.sigma2 = cfg.fix_sigma2.value_or(rng.inv_gamma(priors.sigma2_shape, priors.sigma2_rate));
  const Eigen::VectorXd mu = design.X() * st.beta;
  const double sd = std::sqrt(st.sigma2);
  st.z.resize(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    st.z(i) = truncated_normal(mu(i), sd, cfg.z_min, cfg.z_max, rng);
  st.step.assign(static_cast<std::size_t>(mu.size()), 0.5);
  st.valid = true;
  return st;
}

// Blocked sampler: adaptive per-cell random-walk Metropolis on the latent
// log-rates, exact Gaussian Gibbs for coefficients, inverse-gamma Gibbs for
// the variances, Gaussian Gibbs for the drifts.
inline PosteriorDraws sample(const DesignMatrix& design, const MortalityPanel& panel,
                             const PriorSet& priors, const SampleConfig& cfg,
                             ChainState* warm = nullptr) {
  cfg.validate();
  if (warm && cfg.chains != 1)
    fail(errc::schema_violation, "warm-started runs are single-chain");
  const Eigen::MatrixXd& X = design.X();
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  const detail::CellData cd = detail::make_cell_data(panel);

  PosteriorDraws out;
  out.config = cfg;
  out.n_coef = p;
  out.param_names = design.col_names();
  out.idx_sigma2 = p;
  out.param_names.push_back("sigma2");
  for (std::size_t t = 0; t < design.layout().size(); ++t) {
    const TermLayout& tl = design.layout()[t];
    if (!tl.term.has_rw_prior()) continue;
    PeriodBlock blk;
    blk.term_index = static_cast<int>(t);
    blk.col_begin = tl.col_begin;
    blk.n_cols = tl.n_cols();
    blk.base = tl.term.kind == TermKind::period ? "kappa1" : "kappa2";
    blk.psi_param = static_cast<int>(out.param_names.size());
    out.param_names.push_back("psi_" + blk.base);
    blk.var_param = static_cast<int>(out.param_names.size());
    out.param_names.push_back("sigma2_" + blk.base);
    out.period_blocks.push_back(blk);
  }
  const int n_params = static_cast<int>(out.param_names.size());

  // shared initial coefficient state: ridge fit to log crude rates
  Eigen::VectorXd y0(n);
  for (int i = 0; i < n; ++i) {
    const double d = cd.deaths(i) > 0.0 ? cd.deaths(i) : cd.deaths(i) + 0.5;
    y0(i) = std::clamp(std::log(d / cd.exposure(i)), cfg.z_min, cfg.z_max);
  }
  const Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::MatrixXd ridge = xtx;
  const double lambda = 1e-6 * xtx.trace() / p + 1e-10;
  ridge.diagonal().array() += lambda;
  Eigen::VectorXd beta0 = Eigen::LLT<Eigen::MatrixXd>(ridge).solve(X.transpose() * y0);
  for (const auto& blk : out.period_blocks) beta0.segment(blk.col_begin, blk.n_cols).setZero();

  {
    const Eigen::VectorXd mu0 = X * beta0;
    double lp = 0.0;
    for (int i = 0; i < n; ++i)
      lp += cd.deaths(i) * y0(i) - cd.exposure(i) * std::exp(y0(i)) - 0.5 * (y0(i) - mu0(i)) * (y0(i) - mu0(i));
    if (!std::isfinite(lp)) fail(errc::init_failure, "non-finite log-posterior at initial state");
  }

  const int stored = cfg.n_stored();
  out.chains.resize(cfg.chains);

  auto run_chain = [&](int chain) {
    RngStream rng(cfg.seed, static_cast<std::uint64_t>(chain) + 1);
    const std::size_t n_blocks = out.period_blocks.size();
    const bool resume = warm && warm->valid;
    Eigen::VectorXd beta = resume ? warm->beta : beta0;
    Eigen::VectorXd z = resume ? warm->z : y0;
    Eigen::VectorXd ez = z.array().exp();
    Eigen::VectorXd mu = X * beta;
    double sigma2 = cfg.fix_sigma2.value_or(resume ? warm->sigma2 : 0.01);
    std::vector<double> psi = resume ? warm->psi : std::vector<double>(n_blocks, 0.0);
    std::vector<double> kappa_var = resume ? warm->kappa_var : std::vector<double>(n_blocks, priors.kappa_var_rate);
    std::vector<double> step = resume ? warm->step : std::vector<double>(n, 0.1);
    const double temp = cfg.temperature;
    const int T_years = design.schema().n_years();

    ChainDraws cdraws;
    cdraws.draws.resize(stored, n_params);
    cdraws.pois_loglik.resize(stored);
    long long accepted = 0, attempted = 0;

    Eigen::MatrixXd P(p, p);
    Eigen::VectorXd b(p);

    for (int sweep = 0; sweep < cfg.iters; ++sweep) {
      // (i) latent log-rates, one adaptive Metropolis step per cell
      const bool adapting = sweep < cfg.burnin;
      const double gamma = adapting ? 1.0 / std::pow(sweep + 10.0, 0.6) : 0.0;
      for (int i = 0; i < n; ++i) {
        const double zp = z(i) + step[i] * rng.normal();
        double alpha = 0.0;
        if (zp < cfg.z_min || zp > cfg.z_max) {
          alpha = 0.0; // outside the guarded support
        } else {
          const double ezp = std::exp(zp);
          const double dpois = temp * (cd.deaths(i) * (zp - z(i)) - cd.exposure(i) * (ezp - ez(i)));
          const double dnorm =
              ((z(i) - mu(i)) * (z(i) - mu(i)) - (zp - mu(i)) * (zp - mu(i))) / (2.0 * sigma2);
          const double lr = dpois + dnorm;
          alpha = lr >= 0.0 ? 1.0 : std::exp(lr);
          if (rng.uniform() < alpha) {
            z(i) = zp;
            ez(i) = ezp;
            if (!adapting) ++accepted;
          }
        }
        if (!adapting) ++attempted;
        if (adapting) step[i] = std::clamp(step[i] * std::exp(gamma * (alpha - 0.44)), 1e-4, 10.0);
      }

      // (ii) coefficients | z, sigma^2 (kappa path included via its columns)
      detail::coef_prior(out.period_blocks, p, priors.beta_variance, kappa_var, psi, P, b);
      beta = gibbs::coefficients(xtx, X.transpose() * z, sigma2, P, b, rng);
      mu.noalias() = X * beta;

      // (iii) sigma^2 | z, beta
      if (!cfg.fix_sigma2) sigma2 = gibbs::lognormal_variance((z - mu).squaredNorm(), n, priors, rng);

      // (iv) drift and walk variance per period block
      for (std::size_t k = 0; k < n_blocks; ++k) {
        const PeriodBlock& blk = out.period_blocks[k];
        double sum_diff = 0.0, prev = 0.0;
        for (int j = 0; j < blk.n_cols; ++j) {
          const double cur = beta(blk.col_begin + j);
          sum_diff += cur - prev;
          prev = cur;
        }
        const int m = blk.n_cols; // number of increments
        const double sigma2_psi = kappa_var[k] / static_cast<double>(T_years - 1);
        const double prec = m / kappa_var[k] + 1.0 / sigma2_psi;
        const double mean_psi = (sum_diff / kappa_var[k]) / prec;
        psi[k] = mean_psi + rng.normal() / std::sqrt(prec);
        double ss = 0.0;
        prev = 0.0;
        for (int j = 0; j < blk.n_cols; ++j) {
          const double cur = beta(blk.col_begin + j);
          const double d = cur - prev - psi[k];
          ss += d * d;
          prev = cur;
        }
        kappa_var[k] = rng.inv_gamma(priors.kappa_var_shape + 0.5 * m, priors.kappa_var_rate + 0.5 * ss);
      }

      if (sweep >= cfg.burnin && (sweep - cfg.burnin) % cfg.thin == 0) {
        const int s = (sweep - cfg.burnin) / cfg.thin;
        if (s < stored) {
          for (int j = 0; j < p; ++j) cdraws.draws(s, j) = beta(j);
          cdraws.draws(s, out.idx_sigma2) = sigma2;
          for (std::size_t k = 0; k < n_blocks; ++k) {
            cdraws.draws(s, out.period_blocks[k].psi_param) = psi[k];
            cdraws.draws(s, out.period_blocks[k].var_param) = kappa_var[k];
          }
          double ll = -cd.lgamma_const;
          for (int i = 0; i < n; ++i)
            ll += cd.deaths(i) * (z(i) + cd.log_exposure(i)) - cd.exposure(i) * ez(i);
          cdraws.pois_loglik[s] = ll;
        }
      }
    }
    cdraws.accept_rate = attempted > 0 ? static_cast<double>(accepted) / attempted : 0.0;
    out.chains[chain] = std::move(cdraws);
    if (warm) {
      warm->valid = true;
      warm->beta = beta;
      warm->z = z;
      warm->sigma2 = sigma2;
      warm->psi = psi;
      warm->kappa_var = kappa_var;
      warm->step = step;
    }
  };

  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  const int workers = std::min(cfg.chains, cfg.threads > 0 ? cfg.threads : std::max(1, hw));
  if (workers <= 1 || cfg.chains == 1) {
    for (int c = 0; c < cfg.chains; ++c) run_chain(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int c = next.fetch_add(1); c < cfg.chains; c = next.fetch_add(1)) run_chain(c);
      });
    for (auto& t : pool) t.join();
  }
  if (cfg.chains >= 2 && cfg.n_stored() >= 4) {
    const DiagnosticsReport rep = diagnostics(out);
    out.convergence_warning = rep.max_rhat > cfg.rhat_warn;
  }
  return out;
}

namespace detail {

inline double autocov(const Eigen::VectorXd& x, double mean, int lag) {
  const int n = static_cast<int>(x.size());
  double s = 0.0;
  for (int i = 0; i + lag < n; ++i) s += (x(i) - mean) * (x(i + lag) - mean);
  return s / n;
}

} // namespace detail

inline DiagnosticsReport diagnostics(const PosteriorDraws& draws) {
  DiagnosticsReport rep;
  rep.rhat_available = draws.chains.size() >= 2;
  const int per = draws.n_stored_per_chain();
  const int half = per / 2;
  if (half < 2) fail(errc::diagnostics_unavailable, "too few stored draws for diagnostics");
  const int n_params = draws.n_params();
  for (const auto& c : draws.chains) rep.accept.push_back(c.accept_rate);

  rep.rhat.resize(n_params);
  rep.ess.resize(n_params);
  for (int pidx = 0; pidx < n_params; ++pidx) {
    const int m = static_cast<int>(draws.chains.size()) * 2;
    std::vector<Eigen::VectorXd> s(m);
    std::vector<double> means(m), vars(m);
    for (std::size_t c = 0; c < draws.chains.size(); ++c) {
      s[2 * c] = draws.chains[c].draws.topRows(half).col(pidx);
      s[2 * c + 1] = draws.chains[c].draws.col(pidx).tail(half);
    }
    double grand = 0.0;
    for (int j = 0; j < m; ++j) {
      means[j] = s[j].mean();
      vars[j] = (s[j].array() - means[j]).square().sum() / (half - 1);
      grand += means[j];
    }
    grand /= m;
    double W = 0.0, B = 0.0;
    for (int j = 0; j < m; ++j) {
      W += vars[j];
      B += (means[j] - grand) * (means[j] - grand);
    }
    W /= m;
    B *= static_cast<double>(half) / (m - 1);
    const double var_plus = (half - 1.0) / half * W + B / half;
    rep.rhat[pidx] = rep.rhat_available && W > 0.0 ? std::sqrt(var_plus / W)
                                                   : std::numeric_limits<double>::quiet_NaN();

    // combined ESS, Geyer initial monotone sequence over split chains
    if (var_plus <= 0.0 || W <= 0.0) {
      rep.ess[pidx] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double tau = 1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (int lag = 1; lag + 1 < half; lag += 2) {
      double a1 = 0.0, a2 = 0.0;
      for (int j = 0; j < m; ++j) {
        a1 += detail::autocov(s[j], means[j], lag);
        a2 += detail::autocov(s[j], means[j], lag + 1);
      }
      a1 /= m;
      a2 /= m;
      const double rho1 = 1.0 - (W - a1) / var_plus;
      const double rho2 = 1.0 - (W - a2) / var_plus;
      double pair = rho1 + rho2;
      if (pair < 0.0) break;
      pair = std::min(pair, prev_pair); // enforce monotone decrease
      prev_pair = pair;
      tau += 2.0 * pair;
      if (lag > half / 2) break;
    }
    rep.ess[pidx] = m * static_cast<double>(half) / tau;
  }
  rep.max_rhat = 0.0;
  for (const double r : rep.rhat)
    if (std::isfinite(r)) rep.max_rhat = std::max(rep.max_rhat, r);
  return rep;
}

struct RateSummary {
  double mean = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
};

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double idx = q * (sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(idx);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = idx - lo;
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

inline RateSummary summarise(std::vector<double>& values) {
  double mean = 0.0;
  for (const double v : values) mean += v;
  mean /= values.size();
  std::sort(values.begin(), values.end());
  return {mean, quantile_sorted(values, 0.025), quantile_sorted(values, 0.975)};
}

// Posterior of the fitted rate exp(mu + sigma^2/2) for one panel cell.
inline RateSummary fitted_rate(const PosteriorDraws& draws, const DesignMatrix& design,
                               std::size_t cell_index) {
  const Eigen::RowVectorXd x = design.X().row(static_cast<Eigen::Index>(cell_index));
  std::vector<double> vals;
  vals.reserve(draws.n_stored_total());
  for (const auto& c : draws.chains) {
    for (Eigen::Index s = 0; s < c.draws.rows(); ++s) {
      const double m = x * c.draws.row(s).head(draws.n_coef).transpose();
      vals.push_back(std::exp(m + 0.5 * c.draws(s, draws.idx_sigma2)));
    }
  }
  return summarise(vals);
}

// --- persistence: columnar binary + JSON header ------------------------------

inline void save_draws(const PosteriorDraws& d, const std::string& path) {
  nlohmann::json h;
  h["param_names"] = d.param_names;
  h["n_coef"] = d.n_coef;
  h["idx_sigma2"] = d.idx_sigma2;
  h["convergence_warning"] = d.convergence_warning;
  h["config"] = {{"chains", d.config.chains}, {"iters", d.config.iters},     {"burnin", d.config.burnin},
                 {"thin", d.config.thin},     {"seed", d.config.seed},       {"threads", d.config.threads},
                 {"temperature", d.config.temperature}};
  if (d.config.fix_sigma2) h["config"]["fix_sigma2"] = *d.config.fix_sigma2;
  h["period_blocks"] = nlohmann::json::array();
  for (const auto& b : d.period_blocks)
    h["period_blocks"].push_back({{"term_index", b.term_index},
                                  {"col_begin", b.col_begin},
                                  {"n_cols", b.n_cols},
                                  {"psi_param", b.psi_param},
                                  {"var_param", b.var_param},
                                  {"base", b.base}});
  h["chains"] = nlohmann::json::array();
  for (const auto& c : d.chains)
    h["chains"].push_back({{"rows", c.draws.rows()}, {"cols", c.draws.cols()}, {"accept_rate", c.accept_rate}});

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_error, "cannot write draws to '" + path + "'");
  const std::string header = h.dump();
  const char magic[8] = {'C', 'M', 'D', 'R', 'A', 'W', 'S', '1'};
  out.write(magic, 8);
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(header.data(), static_cast<std::streamsize>(len));
  for (const auto& c : d.chains) {
    out.write(reinterpret_cast<const char*>(c.draws.data()),
              static_cast<std::streamsize>(sizeof(double) * c.draws.size()));
    out.write(reinterpret_cast<const char*>(c.pois_loglik.data()),
              static_cast<std::streamsize>(sizeof(double) * c.pois_loglik.size()));
  }
}

inline PosteriorDraws load_draws(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open draws '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, "CMDRAWS1", 8) != 0) fail(errc::io_error, "not a draws file: '" + path + "'");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  const nlohmann::json h = nlohmann::json::parse(header);

  PosteriorDraws d;
  d.param_names = h.at("param_names").get<std::vector<std::string>>();
  d.n_coef = h.at("n_coef").get<int>();
  d.idx_sigma2 = h.at("idx_sigma2").get<int>();
  d.convergence_warning = h.at("convergence_warning").get<bool>();
  const auto& jc = h.at("config");
  d.config.chains = jc.at("chains").get<int>();
  d.config.iters = jc.at("iters").get<int>();
  d.config.burnin = jc.at("burnin").get<int>();
  d.config.thin = jc.at("thin").get<int>();
  d.config.seed = jc.at("seed").get<std::uint64_t>();
  d.config.threads = jc.at("threads").get<int>();
  d.config.temperature = jc.at("temperature").get<double>();
  if (jc.contains("fix_sigma2")) d.config.fix_sigma2 = jc.at("fix_sigma2").get<double>();
  for (const auto& jb : h.at("period_blocks")) {
    PeriodBlock b;
    b.term_index = jb.at("term_index").get<int>();
    b.col_begin = jb.at("col_begin").get<int>();
    b.n_cols = jb.at("n_cols").get<int>();
    b.psi_param = jb.at("psi_param").get<int>();
    b.var_param = jb.at("var_param").get<int>();
    b.base = jb.at("base").get<std::string>();
    d.period_blocks.push_back(b);
  }
  for (const auto& jc2 : h.at("chains")) {
    ChainDraws c;
    const auto rows = jc2.at("rows").get<Eigen::Index>();
    const auto cols = jc2.at("cols").get<Eigen::Index>();
    c.accept_rate = jc2.at("accept_rate").get<double>();
    c.draws.resize(rows, cols);
    in.read(reinterpret_cast<char*>(c.draws.data()), static_cast<std::streamsize>(sizeof(double) * rows * cols));
    c.pois_loglik.resize(static_cast<std::size_t>(rows));
    in.read(reinterpret_cast<char*>(c.pois_loglik.data()), static_cast<std::streamsize>(sizeof(double) * rows));
    d.chains.push_back(std::move(c));
  }
  if (!in) fail(errc::io_error, "truncated draws file '" + path + "'");
  return d;
}

} // namespace canmort
