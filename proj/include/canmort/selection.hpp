#pragma once

#include <cmath>
#include <memory>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "canmort/csv.hpp"
#include "canmort/mcmc.hpp"
#include "canmort/model_spec.hpp"

namespace canmort {

struct DicConfig {
  int mc_samples = 64;        // antithetic lognormal samples per cell
  std::uint64_t seed = 12345; // fixed stream for the per-cell integration
};

namespace detail {

// log of the observed-data likelihood at one parameter point, with the latent
// rate integrated by antithetic Monte Carlo inside each cell
inline double observed_loglik(const Eigen::VectorXd& mu, double sigma2, const CellData& cd,
                              const std::vector<double>& u) {
  const double sigma = std::sqrt(std::max(sigma2, 0.0));
  const int K = static_cast<int>(u.size());
  double total = 0.0;
  std::vector<double> terms(K);
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const double z = mu(i) + sigma * u[k];
      terms[k] = cd.deaths(i) * (z + cd.log_exposure(i)) - cd.exposure(i) * std::exp(z);
      best = std::max(best, terms[k]);
    }
    double acc = 0.0;
    for (int k = 0; k < K; ++k) acc += std::exp(terms[k] - best);
    total += best + std::log(acc / K);
  }
  return total - cd.lgamma_const;
}

} // namespace detail

// DIC = -4 E[log f(D|params)] + 2 log f(D|posterior mean); the expectation runs
// over stored draws, the likelihood integrates the latent layer per cell.
inline double dic(const PosteriorDraws& draws, const DesignMatrix& design, const MortalityPanel& panel,
                  const DicConfig& cfg = {}) {
  const detail::CellData cd = detail::make_cell_data(panel);

  // one fixed antithetic normal set, shared by every draw and cell, so the
  // result is invariant to draw order
  RngStream rng(cfg.seed, 0);
  std::vector<double> u(static_cast<std::size_t>(cfg.mc_samples));
  for (int k = 0; k + 1 < cfg.mc_samples; k += 2) {
    const double x = rng.normal();
    u[k] = x;
    u[k + 1] = -x;
  }
  if (cfg.mc_samples % 2) u[cfg.mc_samples - 1] = 0.0;

  const int per = draws.n_stored_per_chain();
  double acc = 0.0;
  int used = 0;
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    for (int s = 0; s < per; ++s) {
      const Eigen::VectorXd beta = draws.chains[c].draws.row(s).head(draws.n_coef).transpose();
      const double sigma2 = draws.chains[c].draws(s, draws.idx_sigma2);
      const double ll = detail::observed_loglik(design.X() * beta, sigma2, cd, u);
      if (!std::isfinite(ll)) fail(errc::dic_failure, "non-finite likelihood in DIC expectation");
      acc += ll;
      ++used;
    }
  }
  const double mean_ll = acc / used;

  const Eigen::VectorXd pm = draws.posterior_mean();
  const double ll_hat =
      detail::observed_loglik(design.X() * pm.head(draws.n_coef), pm(draws.idx_sigma2), cd, u);
  if (!std::isfinite(ll_hat)) fail(errc::dic_failure, "non-finite likelihood at the posterior mean");
  return -4.0 * mean_ll + 2.0 * ll_hat;
}

// --- marginal likelihood by power-posterior thermodynamic integration --------

struct EvidenceConfig {
  int n_rungs = 30;       // ladder t_i = (i/n)^exponent, i = 0..n
  double exponent = 5.0;
  int burnin = 400;
  int keep = 2000;
  int thin = 1;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct Evidence {
  double log_marginal = 0.0;
  double se = 0.0;
  std::vector<double> temperatures;
  std::vector<double> rung_means;
};

// Generic trapezoidal integrator over E_t[log L]; the runner samples the power
// posterior at one temperature and returns the retained data log-likelihoods.
inline Evidence thermo_integrate(
    const EvidenceConfig& cfg,
    const std::function<std::vector<double>(double temperature, int rung)>& run_rung) {
  const int n = cfg.n_rungs;
  Evidence ev;
  ev.temperatures.resize(n + 1);
  ev.rung_means.resize(n + 1);
  std::vector<double> rung_se(n + 1);

  std::vector<int> order(n + 1);
  for (int i = 0; i <= n; ++i) order[i] = i;

  auto eval_rung = [&](int i) {
    const double t = std::pow(static_cast<double>(i) / n, cfg.exponent);
    const std::vector<double> ll = run_rung(t, i);
    if (ll.size() < 20) fail(errc::marginal_unstable, "too few retained draws per rung");
    const int m_n = static_cast<int>(ll.size());
    double m = 0.0;
    for (const double v : ll) m += v;
    m /= m_n;
    // autocorrelation-aware standard error (Geyer initial monotone pairs)
    auto acov = [&](int lag) {
      double s = 0.0;
      for (int j = 0; j + lag < m_n; ++j) s += (ll[j] - m) * (ll[j + lag] - m);
      return s / m_n;
    };
    const double var0 = acov(0);
    double tau = 1.0;
    if (var0 > 0.0) {
      double prev_pair = std::numeric_limits<double>::infinity();
      for (int lag = 1; lag + 1 < m_n / 2; lag += 2) {
        double pair = (acov(lag) + acov(lag + 1)) / var0;
        if (pair < 0.0) break;
        pair = std::min(pair, prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
      }
    }
    ev.temperatures[i] = t;
    ev.rung_means[i] = m;
    rung_se[i] = std::sqrt(std::max(var0, 0.0) * tau / m_n);
  };

  if (cfg.threads > 1) {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(cfg.threads, n + 1);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i <= n; i = next.fetch_add(1)) eval_rung(i);
      });
    for (auto& th : pool) th.join();
  } else {
    // prior end first: a stateful runner anneals a warm-started chain upward
    // from an exact prior draw
    for (int i = 0; i <= n; ++i) eval_rung(i);
  }

  // The thermodynamic identity makes E_t[log L] non-decreasing in t. Flag a
  // violation when it exceeds Monte-Carlo tolerance AND its trapezoid impact
  // could move the estimate materially; the near-prior rungs are noisy but
  // carry almost no weight.
  for (int i = 0; i + 1 <= n; ++i) {
    const double tol =
        0.5 + 3.0 * std::sqrt(rung_se[i] * rung_se[i] + rung_se[i + 1] * rung_se[i + 1]);
    const double violation = ev.rung_means[i] - ev.rung_means[i + 1] - tol;
    const double w = ev.temperatures[i + 1] - ev.temperatures[i];
    if (violation > 0.0 && violation * w > 1.0)
      fail(errc::marginal_unstable,
           "expected log-likelihood decreases along the ladder at rung " + std::to_string(i + 1));
  }

  double lz = 0.0, var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double h = ev.temperatures[i + 1] - ev.temperatures[i];
    lz += 0.5 * h * (ev.rung_means[i] + ev.rung_means[i + 1]);
  }
  for (int i = 0; i <= n; ++i) {
    const double left = i > 0 ? ev.temperatures[i] - ev.temperatures[i - 1] : 0.0;
    const double right = i < n ? ev.temperatures[i + 1] - ev.temperatures[i] : 0.0;
    const double w = 0.5 * (left + right);
    var += w * w * rung_se[i] * rung_se[i];
  }
  ev.log_marginal = lz;
  ev.se = std::sqrt(var);
  return ev;
}

// log P(D | model): each rung reuses the blocked sampler with the Poisson term
// tempered, integrating the latent layer and all coefficients out
inline Evidence log_marginal(const ModelSpec& spec, const MortalityPanel& panel, const CovariateFn& raw,
                             const PriorSet& priors, const EvidenceConfig& cfg) {
  const DesignMatrix design = build_design(spec, panel, raw);
  const detail::CellData cd = detail::make_cell_data(panel);
  auto warm = std::make_shared<ChainState>();

  auto prior_loglik = [&](RngStream& rng, SampleConfig& base) {
    std::vector<double> ll(static_cast<std::size_t>(cfg.keep));
    for (int s = 0; s < cfg.keep; ++s) {
      const ChainState st = prior_state(design, priors, base, rng);
      double l = -cd.lgamma_const;
      for (Eigen::Index i = 0; i < st.z.size(); ++i)
        l += cd.deaths(i) * (st.z(i) + cd.log_exposure(i)) - cd.exposure(i) * std::exp(st.z(i));
      ll[static_cast<std::size_t>(s)] = l;
      if (s + 1 == cfg.keep) *warm = st; // anchor the t > 0 rungs here
    }
    return ll;
  };

  auto runner = [&, warm](double t, int rung) {
    SampleConfig scfg;
    scfg.chains = 1;
    scfg.burnin = cfg.burnin;
    scfg.thin = cfg.thin;
    scfg.iters = cfg.burnin + cfg.keep * cfg.thin;
    scfg.temperature = t;
    if (rung == 0) {
      // the t = 0 rung is the prior itself: sample it exactly
      scfg.seed = cfg.seed + 7919u;
      RngStream rng(scfg.seed, 12);
      return prior_loglik(rng, scfg);
    }
    // rungs far from equilibrium drift; extend the burn-in until the retained
    // series is stationary (first and second half agree within noise)
    std::vector<double> ll;
    for (int attempt = 0;; ++attempt) {
      scfg.seed = cfg.seed + 7919u * static_cast<std::uint64_t>(rung + 1) +
                  104729u * static_cast<std::uint64_t>(attempt);
      const PosteriorDraws d = sample(design, panel, priors, scfg, warm.get());
      ll = d.chains.front().pois_loglik;
      const std::size_t half = ll.size() / 2;
      double m1 = 0.0, m2 = 0.0, v1 = 0.0, v2 = 0.0;
      for (std::size_t j = 0; j < half; ++j) m1 += ll[j];
      for (std::size_t j = half; j < ll.size(); ++j) m2 += ll[j];
      m1 /= half;
      m2 /= static_cast<double>(ll.size() - half);
      for (std::size_t j = 0; j < half; ++j) v1 += (ll[j] - m1) * (ll[j] - m1);
      for (std::size_t j = half; j < ll.size(); ++j) v2 += (ll[j] - m2) * (ll[j] - m2);
      v1 /= half;
      v2 /= static_cast<double>(ll.size() - half);
      const double drift_tol = 4.0 * std::sqrt((v1 + v2) / half) + 1e-6 * std::abs(m2) + 1e-3;
      if (std::abs(m2 - m1) <= drift_tol || attempt >= 5) break;
    }
    return ll;
  };
  EvidenceConfig seq = cfg;
  seq.threads = 1; // the ladder anneals sequentially so the warm start is meaningful
  return thermo_integrate(seq, runner);
}

// --- forward selection --------------------------------------------------------

struct SelectionConfig {
  EvidenceConfig evidence;
  SampleConfig dic_run;        // modest run used only for the trace's DIC column
  DicConfig dic;
  double bf_threshold = 3.0;   // accept when BF against the incumbent exceeds this
  bool two_stage = true;       // stage 1 mains, stage 2 interactions among accepted terms
  int threads = 1;

  SelectionConfig() {
    dic_run.chains = 2;
    dic_run.iters = 3000;
    dic_run.burnin = 1000;
    dic_run.thin = 5;
  }
};

struct SelectionRow {
  std::string added; // "null" on the first row
  double log_bf = std::numeric_limits<double>::quiet_NaN();
  double log_marginal = 0.0;
  double se = 0.0;
  double diff_lml = std::numeric_limits<double>::quiet_NaN();
  double dic = 0.0;
};

struct SelectionTrace {
  std::vector<SelectionRow> rows;
};

namespace detail {

inline bool is_main_term(const Term& t) {
  return t.kind == TermKind::categorical || t.kind == TermKind::covariate || t.kind == TermKind::period;
}

// an interaction is admissible once its constituents are in the model
inline bool admissible(const Term& t, const ModelSpec& spec) {
  auto has_dim = [&](Dimension d) {
    for (const auto& u : spec.terms)
      if (u.kind == TermKind::categorical && u.d1 == d) return true;
    return false;
  };
  auto has_cov = [&](const std::string& c) {
    for (const auto& u : spec.terms)
      if (u.kind == TermKind::covariate && u.covariate == c) return true;
    return false;
  };
  auto has_period = [&] {
    for (const auto& u : spec.terms)
      if (u.kind == TermKind::period) return true;
    return false;
  };
  switch (t.kind) {
    case TermKind::interaction: return has_dim(t.d1) && has_dim(t.d2);
    case TermKind::covariate_by_region: return has_cov(t.covariate) && has_dim(Dimension::region);
    case TermKind::period_by_covariate: return has_cov(t.covariate) && has_period();
    default: return true;
  }
}

} // namespace detail

inline double dic_for_spec(const ModelSpec& spec, const MortalityPanel& panel, const CovariateFn& raw,
                           const PriorSet& priors, const SelectionConfig& cfg, std::uint64_t seed) {
  const DesignMatrix design = build_design(spec, panel, raw);
  SampleConfig run = cfg.dic_run;
  run.seed = seed;
  const PosteriorDraws draws = sample(design, panel, priors, run);
  return dic(draws, design, panel, cfg.dic);
}

// Greedy loop: at each step evaluate every remaining admissible candidate,
// take the largest marginal-likelihood gain if its Bayes factor beats the
// threshold, stop otherwise. Two-stage mode holds interactions back until no
// main effect passes.
inline SelectionTrace forward_select(const std::vector<Term>& candidates, const ModelSpec& null_spec,
                                     const MortalityPanel& panel, const CovariateFn& raw,
                                     const PriorSet& priors, const SelectionConfig& cfg) {
  SelectionTrace trace;
  ModelSpec incumbent = null_spec;

  EvidenceConfig ecfg = cfg.evidence;
  ecfg.seed = cfg.evidence.seed;
  Evidence inc_ev = log_marginal(incumbent, panel, raw, priors, ecfg);

  SelectionRow null_row;
  null_row.added = "null";
  null_row.log_marginal = inc_ev.log_marginal;
  null_row.se = inc_ev.se;
  null_row.dic = dic_for_spec(incumbent, panel, raw, priors, cfg, cfg.evidence.seed ^ 0x5eedull);
  trace.rows.push_back(null_row);

  std::vector<Term> remaining = candidates;
  int stage = cfg.two_stage ? 1 : 0; // 0 = single stage
  int step = 0;

  while (!remaining.empty()) {
    ++step;
    std::vector<int> eval_idx;
    for (int i = 0; i < static_cast<int>(remaining.size()); ++i) {
      const Term& t = remaining[i];
      if (stage == 1 && !detail::is_main_term(t)) continue;
      if (stage == 2 && detail::is_main_term(t)) continue;
      if (!detail::admissible(t, incumbent)) continue;
      eval_idx.push_back(i);
    }
    if (eval_idx.empty()) {
      if (stage == 1) {
        stage = 2;
        continue;
      }
      break;
    }

    struct Result {
      bool ok = false;
      Evidence ev;
      std::exception_ptr error;
    };
    std::vector<Result> results(eval_idx.size());
    auto eval_one = [&](std::size_t j) {
      ModelSpec trial = incumbent;
      trial.terms.push_back(remaining[eval_idx[j]]);
      EvidenceConfig e = cfg.evidence;
      e.seed = cfg.evidence.seed + 1000003ull * static_cast<std::uint64_t>(step) +
               101ull * static_cast<std::uint64_t>(eval_idx[j] + 1);
      try {
        results[j].ev = log_marginal(trial, panel, raw, priors, e);
        results[j].ok = true;
      } catch (const Error& err) {
        // candidates that break the coding drop out of this step; anything
        // else (instability, IO) propagates
        if (err.code() == errc::spec_singular || err.code() == errc::degenerate_covariate)
          results[j].ok = false;
        else
          results[j].error = std::current_exception();
      } catch (...) {
        results[j].error = std::current_exception();
      }
    };
    if (cfg.threads > 1 && eval_idx.size() > 1) {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      const std::size_t workers = std::min<std::size_t>(cfg.threads, eval_idx.size());
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (std::size_t j = next.fetch_add(1); j < eval_idx.size(); j = next.fetch_add(1)) eval_one(j);
        });
      for (auto& th : pool) th.join();
    } else {
      for (std::size_t j = 0; j < eval_idx.size(); ++j) eval_one(j);
    }
    for (const auto& r : results)
      if (r.error) std::rethrow_exception(r.error);

    int best = -1;
    double best_gain = -std::numeric_limits<double>::infinity(), best_se = 0.0;
    for (std::size_t j = 0; j < eval_idx.size(); ++j) {
      if (!results[j].ok) continue;
      const double gain = results[j].ev.log_marginal - inc_ev.log_marginal;
      const double se = std::sqrt(results[j].ev.se * results[j].ev.se + inc_ev.se * inc_ev.se);
      // ties within one combined SE keep the earlier candidate
      if (best < 0 || gain > best_gain + std::sqrt(se * se + best_se * best_se)) {
        best = static_cast<int>(j);
        best_gain = gain;
        best_se = se;
      }
    }

    if (best < 0 || best_gain <= std::log(cfg.bf_threshold)) {
      if (stage == 1) {
        stage = 2;
        continue;
      }
      break;
    }

    const Term accepted = remaining[eval_idx[best]];
    incumbent.terms.push_back(accepted);
    SelectionRow row;
    row.added = accepted.name;
    row.log_bf = best_gain;
    row.log_marginal = results[best].ev.log_marginal;
    row.se = results[best].ev.se;
    row.diff_lml = best_gain;
    row.dic = dic_for_spec(incumbent, panel, raw, priors, cfg,
                           cfg.evidence.seed ^ (0xd1cull + 31ull * static_cast<std::uint64_t>(step)));
    trace.rows.push_back(row);
    inc_ev = results[best].ev;
    remaining.erase(remaining.begin() + eval_idx[best]);
  }
  return trace;
}

// CSV layout mirrors the published selection tables.
inline void write_trace_csv(const SelectionTrace& trace, const std::string& path) {
  CsvWriter w(path);
  w.row({"variable added", "Bayes factor", "marginal likelihood", "diff. in marginal likelihood",
         "DIC"});
  for (const auto& r : trace.rows) {
    std::string bf, diff;
    if (std::isfinite(r.log_bf)) {
      bf = r.log_bf > 700.0 ? "Inf" : num(std::exp(r.log_bf));
      diff = num(r.diff_lml);
    }
    w.row({r.added, bf, num(r.log_marginal), diff, num(r.dic)});
  }
}

} // namespace canmort
