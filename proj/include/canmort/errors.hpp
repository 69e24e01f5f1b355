#pragma once

#include <stdexcept>
#include <string>

namespace canmort {

enum class errc {
  grid_incomplete,
  bad_exposure,
  schema_violation,
  singular_fit,
  lag_unavailable,
  undefined_aad,
  degenerate_covariate,
  no_builtin_spec,
  spec_singular,
  init_failure,
  diagnostics_unavailable,
  dic_failure,
  marginal_unstable,
  bad_horizon,
  covariate_gap,
  std_mismatch,
  undefined_rd,
  aggregation_error,
  share_violation,
  scenario_unsupported,
  oracle_failure,
  io_error,
  usage_error,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::grid_incomplete: return "GridIncomplete";
    case errc::bad_exposure: return "BadExposure";
    case errc::schema_violation: return "SchemaViolation";
    case errc::singular_fit: return "SingularFit";
    case errc::lag_unavailable: return "LagUnavailable";
    case errc::undefined_aad: return "UndefinedAAD";
    case errc::degenerate_covariate: return "DegenerateCovariate";
    case errc::no_builtin_spec: return "NoBuiltinSpec";
    case errc::spec_singular: return "SpecSingular";
    case errc::init_failure: return "InitFailure";
    case errc::diagnostics_unavailable: return "DiagnosticsUnavailable";
    case errc::dic_failure: return "DICFailure";
    case errc::marginal_unstable: return "MarginalUnstable";
    case errc::bad_horizon: return "BadHorizon";
    case errc::covariate_gap: return "CovariateGap";
    case errc::std_mismatch: return "StdMismatch";
    case errc::undefined_rd: return "UndefinedRD";
    case errc::aggregation_error: return "AggregationError";
    case errc::share_violation: return "ShareViolation";
    case errc::scenario_unsupported: return "ScenarioUnsupported";
    case errc::oracle_failure: return "OracleFailure";
    case errc::io_error: return "IoError";
    case errc::usage_error: return "UsageError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  errc code() const noexcept { return code_; }

private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw Error(code, what); }

} // namespace canmort
