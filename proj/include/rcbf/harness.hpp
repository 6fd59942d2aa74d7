#pragma once

#include "rcbf/acc.hpp"
#include "rcbf/multirotor.hpp"
#include "rcbf/simulate.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rcbf {

enum class ScenarioKind { acc, multirotor };

ScenarioKind parse_scenario_kind(const std::string& s);
const char* to_string(ScenarioKind k);

/// Provenance tags attached to every resolved parameter.
namespace provenance {
inline constexpr const char* reported = "reported";              ///< value stated with the method
inline constexpr const char* convention = "external-convention";  ///< benchmark convention or tuning choice
inline constexpr const char* override_ = "override";              ///< set by the user config or CLI
}  // namespace provenance

/// Every scenario parameter is numeric: a scalar or a fixed-length array.
struct Param {
  std::vector<double> value;
  bool scalar = true;
  std::string provenance;

  double as_scalar() const { return value.at(0); }
};

using ParameterSet = std::map<std::string, Param>;

/// Schema and default values of a scenario. Keys are dotted names ("estimator.lambda").
ParameterSet default_parameters(ScenarioKind kind);

/// Throws ConfigError on unknown keys, non-numeric values or a length mismatch.
/// `json_value` is a JSON number or array of numbers.
void apply_override(ParameterSet& params, const std::string& key, const std::string& json_value);

struct RunConfig {
  ScenarioKind scenario = ScenarioKind::acc;
  std::string mode;
  ParameterSet parameters;  ///< defaults with overrides applied
  std::vector<std::uint64_t> seeds{0};
  double dt = 1e-3;
  double t_final = 20.0;
  std::string output_dir = "out";

  IntegratorConfig integrator() const { return {dt, t_final}; }
  bool robust() const;
  /// Mode, scenario and integrator checks plus the scenario's own validate().
  void validate() const;
};

/// Defaults for a scenario: t_final = 20 s for acc, 15 s for multirotor.
RunConfig default_config(ScenarioKind kind, const std::string& mode);

/// Parses the JSON config text. Errors carry `origin:line:column` for syntax errors and
/// the offending key for schema errors.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::string& path);

/// Canonical JSON of the resolved config, including the provenance map.
std::string config_to_json(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

/// Accepts "3", "1..10", "0,2,5" and mixtures like "0,4..6".
std::vector<std::uint64_t> parse_seeds(const std::string& spec);

AccScenario make_acc(const ParameterSet& params, std::uint64_t seed);
MultirotorScenario make_multirotor(const ParameterSet& params, std::uint64_t seed);

/// Runs one seed. IntegrationFault propagates with the partial trace.
SimulationTrace run_scenario(const RunConfig& cfg, std::uint64_t seed);

inline constexpr double kSafetyTolerance = 1e-3;

struct RunSummary {
  std::string scenario;
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<double> min_h;  ///< per barrier
  bool safety_violated = false;
  double rms_tracking_error = 0.0;
  double max_estimation_error = 0.0;
  /// min over time of (err_bound − ‖e‖); negative means the bound was exceeded.
  double max_bound_margin = 0.0;
  double qp_fault_count = 0.0;
  double max_kkt_residual = 0.0;
  double wall_time = 0.0;
  std::string config_hash;
  std::string trace_hash;
  std::string trace_file;
  std::optional<std::string> fault;
  std::vector<std::string> events;
};

/// Statistics recomputed from a trace alone (plus v_d for the acc tracking error).
RunSummary summarize(const SimulationTrace& trace, const RunConfig& cfg);

std::string summary_to_json(const RunSummary& s);

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_safety = 3, exit_fault = 4 };

struct BatchResult {
  std::vector<RunSummary> runs;
  int exit_code = exit_ok;
  std::string summary_file;
  std::string manifest_file;
};

/// Runs every seed on a worker pool, writes one CSV per seed, summary.json and manifest.json
/// into cfg.output_dir. Scenario faults are recorded per run and do not stop the batch.
BatchResult run_batch(const RunConfig& cfg, unsigned workers = 0);

/// CSV body: optional `# seed=` and `# event:` comment lines, header, rows at 17 significant digits.
std::string trace_to_csv(const SimulationTrace& trace);
SimulationTrace trace_from_csv(const std::string& text);
void emit_trace(const SimulationTrace& trace, const std::string& path);
SimulationTrace read_trace(const std::string& path);

/// SHA-1 of "blob <size>\0" + content, hex encoded.
std::string git_blob_sha1(const std::string& content);

/// Columns of a scenario trace grouped by the plot panel they feed.
std::string manifest_json(ScenarioKind kind, std::size_t n_barriers = 1);

/// Largest ‖Δ‖ and forward-difference ‖Δ̇‖ over the closed loops of seeds 0..runs−1 in `mode`,
/// ignoring samples before `burn_in` seconds.
ProbeEstimate probe_scenario(const RunConfig& cfg, std::size_t runs, double burn_in = 0.0);

}  // namespace rcbf
