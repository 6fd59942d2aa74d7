#include "rcbf/errors.hpp"
#include "rcbf/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Common {
  std::string config;
  std::string scenario;
  std::string mode;
  std::vector<std::string> sets;
  std::optional<double> dt, t_final;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration");
  app->add_option("--scenario", c.scenario, "acc or multirotor");
  app->add_option("--mode", c.mode, "filter mode");
  app->add_option("--set", c.sets, "parameter override key=value (JSON value), repeatable");
  app->add_option("--dt", c.dt, "integrator step [s]");
  app->add_option("--t-final", c.t_final, "horizon [s]");
}

rcbf::RunConfig resolve(const Common& c, const std::string& default_mode) {
  rcbf::RunConfig cfg;
  if (!c.config.empty()) {
    cfg = rcbf::load_config(c.config);
    if (!c.scenario.empty() && rcbf::parse_scenario_kind(c.scenario) != cfg.scenario) {
      throw rcbf::ConfigError("--scenario disagrees with the scenario in " + c.config);
    }
    if (!c.mode.empty()) cfg.mode = c.mode;
  } else {
    if (c.scenario.empty()) throw rcbf::ConfigError("--scenario or --config is required");
    const std::string mode = c.mode.empty() ? default_mode : c.mode;
    if (mode.empty()) throw rcbf::ConfigError("--mode is required");
    cfg = rcbf::default_config(rcbf::parse_scenario_kind(c.scenario), mode);
  }
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw rcbf::ConfigError("--set expects key=value, got '" + s + "'");
    rcbf::apply_override(cfg.parameters, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.dt) cfg.dt = *c.dt;
  if (c.t_final) cfg.t_final = *c.t_final;
  return cfg;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust control barrier function simulations"};
  app.require_subcommand(1);

  Common run_opts;
  std::string seeds, out;
  unsigned workers = 0;
  auto* run = app.add_subcommand("run", "simulate one or more seeds and write traces and a summary");
  add_common(run, run_opts);
  run->add_option("--seeds", seeds, "seed list, e.g. 0 or 1..10 or 0,3,5");
  run->add_option("--out", out, "output directory");
  run->add_option("--workers", workers, "parallel runs (0 = hardware threads)");

  Common val_opts;
  auto* validate = app.add_subcommand("validate", "load a configuration and print it fully resolved");
  add_common(validate, val_opts);

  Common probe_opts;
  std::size_t runs = 100;
  double burn_in = 0.0;
  auto* probe = app.add_subcommand("bounds-probe", "measure sup |delta| and sup |d delta/dt| along closed loops");
  add_common(probe, probe_opts);
  probe->add_option("--runs", runs, "number of seeded draws (seeds 0..runs-1)");
  probe->add_option("--burn-in", burn_in, "ignore samples before this time [s]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : rcbf::exit_config;
  }

  try {
    if (*run) {
      rcbf::RunConfig cfg = resolve(run_opts, "");
      if (!seeds.empty()) cfg.seeds = rcbf::parse_seeds(seeds);
      if (!out.empty()) cfg.output_dir = out;
      cfg.validate();
      const rcbf::BatchResult res = rcbf::run_batch(cfg, workers);
      for (const auto& s : res.runs) {
        std::string h;
        for (double v : s.min_h) h += (h.empty() ? "" : ",") + fmt(v);
        std::cout << s.scenario << " " << s.mode << " seed=" << s.seed << " min_h=" << h
                  << (s.safety_violated ? " VIOLATED" : " safe") << " rms=" << fmt(s.rms_tracking_error)
                  << " bound_margin=" << fmt(s.max_bound_margin) << " qp_faults=" << s.qp_fault_count
                  << " wall=" << fmt(s.wall_time) << "s";
        if (s.fault) std::cout << " fault: " << *s.fault;
        std::cout << "\n";
      }
      std::cout << "summary: " << res.summary_file << "\nmanifest: " << res.manifest_file << "\n";
      if (!cfg.robust()) {
        bool any = false;
        for (const auto& s : res.runs) any = any || s.safety_violated;
        if (any) std::cout << "note: unprotected/nominal mode violated safety (expected in demo runs)\n";
      }
      return res.exit_code;
    }
    if (*validate) {
      const rcbf::RunConfig cfg = resolve(val_opts, "");
      cfg.validate();
      std::cout << rcbf::config_to_json(cfg);
      return rcbf::exit_ok;
    }
    if (*probe) {
      rcbf::RunConfig cfg = resolve(probe_opts, probe_opts.scenario == "multirotor" ? "method2_hocbf" : "method2");
      const rcbf::ProbeEstimate est = rcbf::probe_scenario(cfg, runs, burn_in);
      const double dL = cfg.parameters.at("estimator.delta_L").as_scalar();
      const double db = cfg.parameters.at("estimator.delta_b").as_scalar();
      std::cout << "{\n  \"scenario\": \"" << rcbf::to_string(cfg.scenario) << "\",\n  \"mode\": \"" << cfg.mode
                << "\",\n  \"runs\": " << runs << ",\n  \"burn_in\": " << fmt(burn_in) << ",\n  \"observed_delta_b\": " << fmt(est.delta_b)
                << ",\n  \"observed_delta_L\": " << fmt(est.delta_L) << ",\n  \"assumed_delta_b\": " << fmt(db)
                << ",\n  \"assumed_delta_L\": " << fmt(dL)
                << ",\n  \"bounds_hold\": " << ((est.delta_b <= db && est.delta_L <= dL) ? "true" : "false") << "\n}\n";
      return rcbf::exit_ok;
    }
  } catch (const rcbf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return rcbf::exit_config;
  } catch (const rcbf::IntegrationFault& e) {
    std::cerr << "scenario fault: " << e.what() << "\n";
    return rcbf::exit_fault;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rcbf::exit_ok;
}
