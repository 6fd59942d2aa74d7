#include "rcbf/errors.hpp"
#include "rcbf/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rcbf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rcbf_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty override block gives pure defaults") {
  const RunConfig c = parse_config(R"({"scenario": "acc", "mode": "method1", "overrides": {}})");
  const ParameterSet d = default_parameters(ScenarioKind::acc);
  REQUIRE(c.parameters.size() == d.size());
  for (const auto& [k, p] : d) {
    CHECK(c.parameters.at(k).value == p.value);
    CHECK(c.parameters.at(k).provenance == p.provenance);
  }
  CHECK(c.t_final == 20.0);
  CHECK(c.seeds == std::vector<std::uint64_t>{0});
  CHECK(parse_config(R"({"scenario": "multirotor", "mode": "nominal"})").t_final == 15.0);
}

TEST_CASE("estimator override reaches the gain") {
  const RunConfig c =
      parse_config(R"({"scenario": "acc", "mode": "method2", "overrides": {"estimator.lambda": [100, 100]}})");
  CHECK(c.parameters.at("estimator.lambda").provenance == provenance::override_);
  CHECK(make_acc(c.parameters, 0).gain().mu_e == doctest::Approx(25.0));
  const RunConfig d =
      parse_config(R"({"scenario": "acc", "mode": "method2", "overrides": {"estimator.lambda": [40, 100]}})");
  CHECK(make_acc(d.parameters, 0).gain().mu_e == doctest::Approx(10.0));
}

TEST_CASE("configuration errors name the problem") {
  CHECK(error_of(R"({"scenario": "acc", "mode": "method1", "overrides": {"estimator.lamda": [1, 2]}})")
            .find("estimator.lamda") != std::string::npos);
  CHECK(error_of(R"({"scenario": "acc", "mode": "method1", "overrides": {"M": "heavy"}})").find("'M'") !=
        std::string::npos);
  CHECK(error_of(R"({"scenario": "acc", "mode": "method1", "overrides": {"x0": [1, 2, 3]}})").find("x0") !=
        std::string::npos);
  CHECK(error_of(R"({"scenario": "acc", "mode": "method1", "sedes": [1]})").find("sedes") != std::string::npos);
  CHECK(error_of(R"({"scenario": "acc", "mode": "warp"})").find("warp") != std::string::npos);
  CHECK(error_of(R"({"scenario": "boat", "mode": "method1"})").find("boat") != std::string::npos);
  CHECK(error_of(R"({"scenario": "acc", "mode": "method1", "dt": "fast"})").find("dt") != std::string::npos);
  CHECK(error_of(R"({"scenario": "acc", "mode": "method1", "overrides": {"tau_d": 1.8}})").find("h(x0)") !=
        std::string::npos);
  const std::string syntax = error_of("{\n  \"scenario\": \"acc\",\n  \"mode\": method1\n}");
  CHECK(syntax.find("cfg.json:3:") != std::string::npos);

  ParameterSet p = default_parameters(ScenarioKind::acc);
  CHECK_THROWS_AS(apply_override(p, "M", "1e"), ConfigError);
  CHECK_THROWS_AS(apply_override(p, "nope", "1"), ConfigError);
  apply_override(p, "M", "1500");
  CHECK(p.at("M").as_scalar() == 1500.0);
}

TEST_CASE("resolved config round-trips") {
  RunConfig c = default_config(ScenarioKind::multirotor, "method2_hocbf");
  apply_override(c.parameters, "hocbf.gains", "[0.8, 0.9, 1.0]");
  c.seeds = {1, 2, 3};
  const RunConfig back = parse_config(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(config_hash(back) == config_hash(c));
  RunConfig other = c;
  other.seeds = {7};
  CHECK(config_hash(other) == config_hash(c));
  apply_override(other.parameters, "r0", "0.2");
  CHECK(config_hash(other) != config_hash(c));
}

TEST_CASE("seed lists") {
  CHECK(parse_seeds("3") == std::vector<std::uint64_t>{3});
  CHECK(parse_seeds("1..4") == std::vector<std::uint64_t>{1, 2, 3, 4});
  CHECK(parse_seeds("0,4..5,9") == std::vector<std::uint64_t>{0, 4, 5, 9});
  CHECK_THROWS_AS(parse_seeds("5..2"), ConfigError);
  CHECK_THROWS_AS(parse_seeds("a"), ConfigError);
  CHECK_THROWS_AS(parse_seeds("-1"), ConfigError);
}

TEST_CASE("git blob hash") {
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("trace CSV round-trips bit-exactly") {
  RunConfig c = default_config(ScenarioKind::acc, "method1");
  c.t_final = 2.0;
  SimulationTrace tr = run_scenario(c, 4);
  tr.events.push_back("t=0.5 qp infeasible; holding last control");
  const fs::path dir = scratch("csv");
  fs::create_directories(dir);
  emit_trace(tr, (dir / "t.csv").string());
  const SimulationTrace back = read_trace((dir / "t.csv").string());
  REQUIRE(back.columns() == tr.columns());
  REQUIRE(back.size() == tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    for (std::size_t i = 0; i < tr.columns().size(); ++i) REQUIRE(back.at(k, i) == tr.at(k, i));
  }
  CHECK(back.seed == 4);
  CHECK(back.events == tr.events);
  CHECK(back.constraint_labels == tr.constraint_labels);
  CHECK(back.metrics == tr.metrics);
  CHECK(summarize(back, c).min_h == summarize(tr, c).min_h);
  CHECK(trace_to_csv(back) == trace_to_csv(tr));
  CHECK_THROWS(read_trace((dir / "missing.csv").string()));
}

TEST_CASE("acc trace schema") {
  RunConfig c = default_config(ScenarioKind::acc, "method2");
  c.t_final = 0.5;
  const SimulationTrace tr = run_scenario(c, 0);
  const std::size_t n = 2, m = 1, nb = 1;
  CHECK(tr.columns().size() == 1 + 9 + n + m + 2 * nb);
  CHECK(tr.columns().front() == "t");
  CHECK(tr.at(0, "t") == 0.0);
  CHECK(tr.at(0, "delta_hat_1") == 0.0);
}

TEST_CASE("batch runs are deterministic and summaries match their traces") {
  RunConfig c = default_config(ScenarioKind::acc, "method2");
  c.t_final = 3.0;
  c.seeds = {0, 1, 2};
  const fs::path dir_a = scratch("batch_a");
  c.output_dir = dir_a.string();
  const BatchResult a = run_batch(c, 3);
  c.output_dir = scratch("batch_b").string();
  const BatchResult b = run_batch(c, 1);
  CHECK(a.exit_code == exit_ok);
  REQUIRE(a.runs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string fa = slurp(dir_a / a.runs[i].trace_file);
    const std::string fb = slurp(fs::path(c.output_dir) / b.runs[i].trace_file);
    CHECK(!fa.empty());
    CHECK(fa == fb);
    CHECK(a.runs[i].trace_hash == git_blob_sha1(fa));
    CHECK(a.runs[i].seed == c.seeds[i]);

    const RunSummary s = summarize(trace_from_csv(fa), c);
    CHECK(std::abs(s.min_h[0] - a.runs[i].min_h[0]) <= 1e-12);
    CHECK(std::abs(s.rms_tracking_error - a.runs[i].rms_tracking_error) <= 1e-12);
    CHECK(std::abs(s.max_estimation_error - a.runs[i].max_estimation_error) <= 1e-12);
    CHECK(std::abs(s.max_bound_margin - a.runs[i].max_bound_margin) <= 1e-12);
    CHECK(s.qp_fault_count == a.runs[i].qp_fault_count);
  }
  CHECK(fs::exists(a.summary_file));
  CHECK(fs::exists(a.manifest_file));
  CHECK(slurp(a.manifest_file).find("acc_safety") != std::string::npos);
}

TEST_CASE("exit codes") {
  RunConfig c = default_config(ScenarioKind::acc, "unprotected");
  c.output_dir = scratch("unprot").string();
  const BatchResult u = run_batch(c);
  CHECK(u.runs[0].safety_violated);
  CHECK(u.exit_code == exit_ok);
  CHECK(slurp(u.summary_file).find("\"expected_violation\": true") != std::string::npos);

  // A robust mode with a badly under-declared uncertainty bound no longer protects the set.
  RunConfig v = default_config(ScenarioKind::acc, "method2");
  apply_override(v.parameters, "estimator.lambda", "[0.5, 0.5]");
  apply_override(v.parameters, "filter.mu_h", "0.1");
  apply_override(v.parameters, "estimator.delta_b", "0.001");
  apply_override(v.parameters, "estimator.delta_L", "0.001");
  v.output_dir = scratch("violate").string();
  const BatchResult vr = run_batch(v);
  CHECK(vr.runs[0].safety_violated);
  CHECK(vr.exit_code == exit_safety);

  // Thrust ratio above one puts every state outside the chart: the run faults at t = 0.
  RunConfig f = default_config(ScenarioKind::multirotor, "nominal");
  apply_override(f.parameters, "chart.min_thrust_ratio", "1.5");
  f.t_final = 1.0;
  f.seeds = {0, 1};
  f.output_dir = scratch("fault").string();
  const BatchResult fr = run_batch(f);
  CHECK(fr.exit_code == exit_fault);
  REQUIRE(fr.runs.size() == 2);
  CHECK(fr.runs[0].fault.has_value());
  CHECK(fs::exists(fs::path(f.output_dir) / fr.runs[1].trace_file));
}

TEST_CASE("acc probe: declared rate bound holds after the initial bound transient") {
  RunConfig c = default_config(ScenarioKind::acc, "method2");
  c.t_final = 5.0;
  const double dL = c.parameters.at("estimator.delta_L").as_scalar();
  const double db = c.parameters.at("estimator.delta_b").as_scalar();
  // The filter row tracks error_bound(t), which decays at rate 100/s from t = 0, and the input-dependent
  // part of Δ follows u. The first few samples therefore exceed δ_L.
  const ProbeEstimate raw = probe_scenario(c, 5);
  CHECK(raw.delta_b <= db);
  CHECK(raw.delta_L > dL);
  const ProbeEstimate settled = probe_scenario(c, 5, 0.1);
  CHECK(settled.delta_b <= db);
  CHECK(settled.delta_L <= dL);
}

TEST_CASE("multirotor probe stays inside the declared bounds") {
  RunConfig c = default_config(ScenarioKind::multirotor, "method2_hocbf");
  const ProbeEstimate e = probe_scenario(c, 4);
  CHECK(e.delta_b <= c.parameters.at("estimator.delta_b").as_scalar());
  CHECK(e.delta_L <= c.parameters.at("estimator.delta_L").as_scalar());
}
