#include "rcbf/harness.hpp"

#include "rcbf/errors.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace rcbf {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

Param scalar(double v, const char* prov) { return Param{{v}, true, prov}; }
Param array(std::vector<double> v, const char* prov) { return Param{std::move(v), false, prov}; }

std::vector<double> vec(const ParameterSet& p, const std::string& key) { return p.at(key).value; }
double num(const ParameterSet& p, const std::string& key) { return p.at(key).as_scalar(); }

Eigen::Vector3d vec3(const ParameterSet& p, const std::string& key) {
  const auto v = vec(p, key);
  return {v[0], v[1], v[2]};
}

void apply_json(ParameterSet& params, const std::string& key, const json& value) {
  const auto it = params.find(key);
  if (it == params.end()) {
    std::string known;
    for (const auto& [k, _] : params) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown parameter '" + key + "' (known: " + known + ")");
  }
  Param& p = it->second;
  std::vector<double> v;
  if (value.is_number()) {
    v.push_back(value.get<double>());
  } else if (value.is_array()) {
    for (const auto& e : value) {
      if (!e.is_number()) throw ConfigError("parameter '" + key + "': array entries must be numbers");
      v.push_back(e.get<double>());
    }
  } else {
    throw ConfigError("parameter '" + key + "': expected a number or an array of numbers, got " + value.dump());
  }
  if (p.scalar && !value.is_number()) throw ConfigError("parameter '" + key + "' is a scalar");
  if (!p.scalar && (!value.is_array() || v.size() != p.value.size())) {
    throw ConfigError("parameter '" + key + "' expects an array of " + std::to_string(p.value.size()) + " numbers");
  }
  for (double d : v) {
    if (!std::isfinite(d)) throw ConfigError("parameter '" + key + "' must be finite");
  }
  p.value = std::move(v);
  p.provenance = provenance::override_;
}

json param_json(const Param& p) { return p.scalar ? json(p.value[0]) : json(p.value); }

std::string position(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  const std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
  for (std::size_t i = 0; i < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("'" + key + "': expected a number, got " + j.dump());
  return j.get<double>();
}

std::string hex(const unsigned char* d, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(2 * n);
  for (unsigned i = 0; i < n; ++i) {
    s.push_back(digits[d[i] >> 4]);
    s.push_back(digits[d[i] & 15]);
  }
  return s;
}

std::string sha1_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("sha1 digest failed");
  }
  return hex(md, len);
}

json canonical_json(const RunConfig& cfg) {
  json params = json::object(), prov = json::object();
  for (const auto& [k, p] : cfg.parameters) {
    params[k] = param_json(p);
    prov[k] = p.provenance;
  }
  return json{{"scenario", to_string(cfg.scenario)}, {"mode", cfg.mode},       {"seeds", cfg.seeds},
              {"dt", cfg.dt},                      {"t_final", cfg.t_final}, {"output_dir", cfg.output_dir},
              {"parameters", params},              {"provenance", prov}};
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

std::vector<std::string> barrier_columns(const SimulationTrace& tr) {
  if (tr.has_column("h")) return {"h"};
  std::vector<std::string> out;
  for (std::size_t i = 1; tr.has_column("h_" + std::to_string(i)); ++i) out.push_back("h_" + std::to_string(i));
  return out;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; the first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, unsigned workers, F fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace

ScenarioKind parse_scenario_kind(const std::string& s) {
  if (s == "acc") return ScenarioKind::acc;
  if (s == "multirotor") return ScenarioKind::multirotor;
  throw ConfigError("unknown scenario '" + s + "' (expected acc or multirotor)");
}

const char* to_string(ScenarioKind k) { return k == ScenarioKind::acc ? "acc" : "multirotor"; }

ParameterSet default_parameters(ScenarioKind kind) {
  using namespace provenance;
  ParameterSet p;
  if (kind == ScenarioKind::acc) {
    const AccScenario d = acc_defaults();
    p["M"] = scalar(d.M, convention);
    p["f0"] = scalar(d.f0, convention);
    p["f1"] = scalar(d.f1, convention);
    p["f2"] = scalar(d.f2, convention);
    p["tau_d"] = scalar(d.tau_d, convention);
    p["v_l"] = scalar(d.v_l, reported);
    p["v_d"] = scalar(d.v_d, convention);
    p["x0"] = array({d.x0(0), d.x0(1)}, reported);
    p["uncertainty.amplitude"] = scalar(d.uncertainty.amplitude, reported);
    p["uncertainty.omega"] = scalar(d.uncertainty.omega, reported);
    p["uncertainty.drag_fraction"] = scalar(d.uncertainty.drag_fraction, reported);
    p["uncertainty.mass_fraction"] = scalar(d.uncertainty.mass_fraction, reported);
    p["estimator.lambda"] = array(d.lambda, reported);
    p["estimator.delta_L"] = scalar(d.delta_L, reported);
    p["estimator.delta_b"] = scalar(d.delta_b, reported);
    p["filter.mu_h"] = scalar(d.mu_h, reported);
    p["filter.sigma_V"] = scalar(d.sigma_V, reported);
    p["filter.clf_rate"] = scalar(d.clf_rate, reported);
    p["filter.p_c"] = scalar(d.p_c, reported);
    p["filter.alpha"] = scalar(d.alpha, convention);
    p["filter.k_p"] = scalar(d.k_p, convention);
    return p;
  }
  const MultirotorScenario d = multirotor_defaults();
  const ReferenceSample r0 = d.reference(0.0);
  p["gravity"] = scalar(d.gravity, convention);
  p["reference.start"] = array({r0.p(0), r0.p(1), r0.p(2)}, convention);
  p["reference.goal"] = array({0.0, 0.0, 0.0}, convention);
  p["reference.duration"] = scalar(6.0, convention);
  p["reference.yaw"] = scalar(r0.psi, convention);
  const Obstacle& o = d.obstacles.at(0);
  p["obstacle.center"] = array({o.center(0), o.center(1), o.center(2)}, convention);
  p["obstacle.radius"] = scalar(o.radius, convention);
  p["r0"] = scalar(d.r0, convention);
  p["uncertainty.c_max"] = scalar(d.c_max, convention);
  p["uncertainty.delta_u_min"] = scalar(d.delta_u_min, convention);
  p["hocbf.gains"] = array(d.cascade_gains, convention);
  p["tracker.poles"] = array(d.tracker_poles, convention);
  p["tracker.yaw_gain"] = scalar(d.yaw_gain, convention);
  p["estimator.lambda"] = array(d.lambda, convention);
  p["estimator.delta_L"] = scalar(d.delta_L, reported);
  p["estimator.delta_b"] = scalar(d.delta_b, reported);
  p["chart.min_thrust_ratio"] = scalar(d.min_thrust_ratio, convention);
  p["chart.min_cos_theta"] = scalar(d.min_cos_theta, convention);
  return p;
}

void apply_override(ParameterSet& params, const std::string& key, const std::string& json_value) {
  json v;
  try {
    v = json::parse(json_value);
  } catch (const json::parse_error&) {
    throw ConfigError("parameter '" + key + "': malformed value '" + json_value + "'");
  }
  apply_json(params, key, v);
}

bool RunConfig::robust() const {
  return scenario == ScenarioKind::acc ? is_robust(parse_acc_mode(mode)) : is_robust(parse_multirotor_mode(mode));
}

void RunConfig::validate() const {
  integrator().validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (scenario == ScenarioKind::acc) {
    parse_acc_mode(mode);
    make_acc(parameters, 0).validate();
  } else {
    parse_multirotor_mode(mode);
    make_multirotor(parameters, 0).validate();
  }
}

RunConfig default_config(ScenarioKind kind, const std::string& mode) {
  RunConfig c;
  c.scenario = kind;
  c.mode = mode;
  c.parameters = default_parameters(kind);
  c.t_final = kind == ScenarioKind::acc ? 20.0 : 15.0;
  return c;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    const auto colon = msg.find(": ", msg.find("parse error"));
    throw ConfigError(origin + ":" + position(text, e.byte) + ": parse error" +
                      (colon == std::string::npos ? "" : msg.substr(colon)));
  }
  if (!j.is_object()) throw ConfigError(origin + ": top level must be an object");

  static const std::vector<std::string> allowed{"scenario", "mode",       "seeds",      "dt",        "t_final",
                                                "output_dir", "overrides", "parameters", "provenance"};
  for (const auto& [k, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ConfigError(origin + ": unknown key '" + k + "'");
    }
  }
  if (!j.contains("scenario") || !j["scenario"].is_string()) throw ConfigError(origin + ": 'scenario' (string) is required");
  if (!j.contains("mode") || !j["mode"].is_string()) throw ConfigError(origin + ": 'mode' (string) is required");

  RunConfig c = default_config(parse_scenario_kind(j["scenario"].get<std::string>()), j["mode"].get<std::string>());
  if (j.contains("dt")) c.dt = get_number(j["dt"], "dt");
  if (j.contains("t_final")) c.t_final = get_number(j["t_final"], "t_final");
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ConfigError("'output_dir': expected a string");
    c.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("seeds")) {
    const json& s = j["seeds"];
    if (s.is_string()) {
      c.seeds = parse_seeds(s.get<std::string>());
    } else if (s.is_array()) {
      c.seeds.clear();
      for (const auto& e : s) {
        if (!e.is_number_unsigned()) throw ConfigError("'seeds': entries must be nonnegative integers");
        c.seeds.push_back(e.get<std::uint64_t>());
      }
    } else {
      throw ConfigError("'seeds': expected an array or a range string");
    }
  }
  for (const char* block : {"parameters", "overrides"}) {
    if (!j.contains(block)) continue;
    if (!j[block].is_object()) throw ConfigError(std::string("'") + block + "' must be an object");
    for (const auto& [k, v] : j[block].items()) apply_json(c.parameters, k, v);
  }
  if (j.contains("provenance")) {
    if (!j["provenance"].is_object()) throw ConfigError("'provenance' must be an object");
    for (const auto& [k, v] : j["provenance"].items()) {
      const auto it = c.parameters.find(k);
      if (it == c.parameters.end()) throw ConfigError("provenance: unknown parameter '" + k + "'");
      const std::string tag = v.is_string() ? v.get<std::string>() : "";
      if (tag != provenance::reported && tag != provenance::convention && tag != provenance::override_) {
        throw ConfigError("provenance of '" + k + "': unknown tag " + v.dump());
      }
      it->second.provenance = tag;
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path);
}

std::string config_to_json(const RunConfig& cfg) { return canonical_json(cfg).dump(2) + "\n"; }

std::string config_hash(const RunConfig& cfg) {
  json j = canonical_json(cfg);
  j.erase("seeds");
  j.erase("output_dir");
  j.erase("provenance");
  return sha1_hex(j.dump());
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> out;
  auto parse_u = [&](const std::string& s) -> std::uint64_t {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      if (s.empty() || s[0] == '-') throw std::invalid_argument(s);
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      throw ConfigError("seeds: malformed entry '" + s + "' in '" + spec + "'");
    }
    if (used != s.size()) throw ConfigError("seeds: malformed entry '" + s + "' in '" + spec + "'");
    return v;
  };
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_u(item));
      continue;
    }
    const std::uint64_t a = parse_u(item.substr(0, dots)), b = parse_u(item.substr(dots + 2));
    if (b < a) throw ConfigError("seeds: empty range '" + item + "'");
    if (b - a > 1000000) throw ConfigError("seeds: range '" + item + "' too large");
    for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
  }
  if (out.empty()) throw ConfigError("seeds: no seeds in '" + spec + "'");
  return out;
}

AccScenario make_acc(const ParameterSet& p, std::uint64_t seed) {
  AccScenario sc = acc_defaults();
  sc.M = num(p, "M");
  sc.f0 = num(p, "f0");
  sc.f1 = num(p, "f1");
  sc.f2 = num(p, "f2");
  sc.tau_d = num(p, "tau_d");
  sc.v_l = num(p, "v_l");
  sc.v_d = num(p, "v_d");
  const auto x0 = vec(p, "x0");
  sc.x0 = Eigen::Map<const Vector>(x0.data(), static_cast<Eigen::Index>(x0.size()));
  AccUncertainty base;
  base.amplitude = num(p, "uncertainty.amplitude");
  base.omega = num(p, "uncertainty.omega");
  base.drag_fraction = num(p, "uncertainty.drag_fraction");
  base.mass_fraction = num(p, "uncertainty.mass_fraction");
  sc.uncertainty = acc_uncertainty_draw(seed, base);
  sc.lambda = vec(p, "estimator.lambda");
  sc.delta_L = num(p, "estimator.delta_L");
  sc.delta_b = num(p, "estimator.delta_b");
  sc.mu_h = num(p, "filter.mu_h");
  sc.sigma_V = num(p, "filter.sigma_V");
  sc.clf_rate = num(p, "filter.clf_rate");
  sc.p_c = num(p, "filter.p_c");
  sc.alpha = num(p, "filter.alpha");
  sc.k_p = num(p, "filter.k_p");
  return sc;
}

MultirotorScenario make_multirotor(const ParameterSet& p, std::uint64_t seed) {
  MultirotorScenario sc = multirotor_defaults();
  sc.gravity = num(p, "gravity");
  sc.reference = rest_to_rest_reference(vec3(p, "reference.start"), vec3(p, "reference.goal"),
                                        num(p, "reference.duration"), num(p, "reference.yaw"));
  sc.obstacles = {Obstacle{vec3(p, "obstacle.center"), num(p, "obstacle.radius")}};
  sc.r0 = num(p, "r0");
  sc.c_max = num(p, "uncertainty.c_max");
  sc.delta_u_min = num(p, "uncertainty.delta_u_min");
  if (!(sc.c_max >= 0.0)) throw ConfigError("uncertainty.c_max must be nonnegative");
  if (!(sc.delta_u_min > -1.0 && sc.delta_u_min <= 0.0)) throw ConfigError("uncertainty.delta_u_min must lie in (-1, 0]");
  sc.uncertainty = multirotor_uncertainty_draw(seed, sc.c_max, sc.delta_u_min);
  sc.cascade_gains = vec(p, "hocbf.gains");
  sc.tracker_poles = vec(p, "tracker.poles");
  sc.yaw_gain = num(p, "tracker.yaw_gain");
  sc.lambda = vec(p, "estimator.lambda");
  sc.delta_L = num(p, "estimator.delta_L");
  sc.delta_b = num(p, "estimator.delta_b");
  sc.min_thrust_ratio = num(p, "chart.min_thrust_ratio");
  sc.min_cos_theta = num(p, "chart.min_cos_theta");
  return sc;
}

SimulationTrace run_scenario(const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.scenario == ScenarioKind::acc) {
    return run_acc(make_acc(cfg.parameters, seed), parse_acc_mode(cfg.mode), cfg.integrator(), seed);
  }
  return run_multirotor(make_multirotor(cfg.parameters, seed), parse_multirotor_mode(cfg.mode), cfg.integrator(),
                        seed);
}

RunSummary summarize(const SimulationTrace& tr, const RunConfig& cfg) {
  RunSummary s;
  s.scenario = to_string(cfg.scenario);
  s.mode = cfg.mode;
  s.seed = tr.seed;
  s.events = tr.events;
  const std::size_t N = tr.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();

  double worst = std::numeric_limits<double>::infinity();
  for (const auto& name : barrier_columns(tr)) {
    const std::size_t c = tr.column_index(name);
    double m = N ? std::numeric_limits<double>::infinity() : nan;
    for (std::size_t k = 0; k < N; ++k) m = std::min(m, tr.at(k, c));
    s.min_h.push_back(m);
    if (N) worst = std::min(worst, m);
  }
  s.safety_violated = worst < -kSafetyTolerance;

  double sq = 0.0;
  if (cfg.scenario == ScenarioKind::acc) {
    const double v_d = num(cfg.parameters, "v_d");
    const std::size_t c = tr.column_index("v_f");
    for (std::size_t k = 0; k < N; ++k) sq += (tr.at(k, c) - v_d) * (tr.at(k, c) - v_d);
  } else {
    const std::size_t c = tr.column_index("track_err");
    for (std::size_t k = 0; k < N; ++k) sq += tr.at(k, c) * tr.at(k, c);
  }
  s.rms_tracking_error = N ? std::sqrt(sq / static_cast<double>(N)) : nan;

  const std::size_t ce = tr.column_index("err_norm"), cb = tr.column_index("err_bound"),
                    cq = tr.column_index("qp_status");
  s.max_estimation_error = N ? 0.0 : nan;
  s.max_bound_margin = N ? std::numeric_limits<double>::infinity() : nan;
  for (std::size_t k = 0; k < N; ++k) {
    s.max_estimation_error = std::max(s.max_estimation_error, tr.at(k, ce));
    s.max_bound_margin = std::min(s.max_bound_margin, tr.at(k, cb) - tr.at(k, ce));
    s.qp_fault_count += tr.at(k, cq);
  }
  const auto kkt = tr.metrics.find("max_kkt_residual");
  if (kkt != tr.metrics.end()) s.max_kkt_residual = kkt->second;
  return s;
}

std::string summary_to_json(const RunSummary& s) {
  json j{{"scenario", s.scenario},
         {"mode", s.mode},
         {"seed", s.seed},
         {"min_h", s.min_h},
         {"safety_violated", s.safety_violated},
         {"rms_tracking_error", s.rms_tracking_error},
         {"max_estimation_error", s.max_estimation_error},
         {"max_bound_margin", s.max_bound_margin},
         {"qp_fault_count", s.qp_fault_count},
         {"max_kkt_residual", s.max_kkt_residual},
         {"wall_time", s.wall_time},
         {"config_hash", s.config_hash},
         {"trace_hash", s.trace_hash},
         {"trace_file", s.trace_file},
         {"fault", s.fault ? json(*s.fault) : json(nullptr)},
         {"events", s.events}};
  return j.dump(2);
}

BatchResult run_batch(const RunConfig& cfg, unsigned workers) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + cfg.output_dir + "': " + ec.message());

  const std::string chash = config_hash(cfg);
  BatchResult out;
  out.runs.resize(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), workers, [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    const auto t0 = std::chrono::steady_clock::now();
    SimulationTrace tr;
    std::optional<std::string> fault;
    try {
      tr = run_scenario(cfg, seed);
    } catch (const IntegrationFault& f) {
      tr = f.partial;
      std::ostringstream os;
      os.precision(17);
      os << "t=" << f.time << ": " << f.what();
      fault = os.str();
      tr.events.push_back("fault " + *fault);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string csv = trace_to_csv(tr);
    const std::string name = std::string(to_string(cfg.scenario)) + "_" + cfg.mode + "_seed" + std::to_string(seed) + ".csv";
    const std::string path = (fs::path(cfg.output_dir) / name).string();
    write_file(path, csv);

    RunSummary s = summarize(tr, cfg);
    s.seed = seed;
    s.wall_time = wall;
    s.config_hash = chash;
    s.trace_hash = git_blob_sha1(csv);
    s.trace_file = name;
    s.fault = fault;
    out.runs[i] = std::move(s);
  });

  bool violated = false, faulted = false;
  double worst = std::numeric_limits<double>::infinity();
  json runs = json::array();
  for (const auto& s : out.runs) {
    violated = violated || s.safety_violated;
    faulted = faulted || s.fault.has_value();
    for (double h : s.min_h) worst = std::min(worst, h);
    runs.push_back(json::parse(summary_to_json(s)));
  }
  const bool robust = cfg.robust();
  if (robust && violated) {
    out.exit_code = exit_safety;
  } else if (faulted) {
    out.exit_code = exit_fault;
  }
  json summary{{"config", canonical_json(cfg)},
               {"config_hash", chash},
               {"runs", runs},
               {"aggregate",
                {{"min_h", worst},
                 {"any_violation", violated},
                 {"robust_mode", robust},
                 {"expected_violation", !robust && violated},
                 {"any_fault", faulted},
                 {"exit_code", out.exit_code}}}};
  out.summary_file = (fs::path(cfg.output_dir) / "summary.json").string();
  write_file(out.summary_file, summary.dump(2) + "\n");
  out.manifest_file = (fs::path(cfg.output_dir) / "manifest.json").string();
  write_file(out.manifest_file, manifest_json(cfg.scenario));
  return out;
}

std::string trace_to_csv(const SimulationTrace& tr) {
  std::string s;
  s += "# seed=" + std::to_string(tr.seed) + "\n";
  for (const auto& l : tr.constraint_labels) s += "# constraint: " + one_line(l) + "\n";
  for (const auto& [k, v] : tr.metrics) s += "# metric: " + k + "=" + fmt17(v) + "\n";
  for (const auto& e : tr.events) s += "# event: " + one_line(e) + "\n";
  const auto& cols = tr.columns();
  for (std::size_t i = 0; i < cols.size(); ++i) s += (i ? "," : "") + cols[i];
  s += "\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const auto row = tr.row(k);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s += ',';
      s += fmt17(row[i]);
    }
    s += '\n';
  }
  return s;
}

SimulationTrace trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::uint64_t seed = 0;
  std::vector<std::string> labels, events;
  std::map<std::string, double> metrics;
  std::optional<SimulationTrace> tr;
  std::vector<double> row;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# seed=", 0) == 0) {
        seed = std::stoull(line.substr(7));
      } else if (line.rfind("# constraint: ", 0) == 0) {
        labels.push_back(line.substr(14));
      } else if (line.rfind("# metric: ", 0) == 0) {
        const std::string kv = line.substr(10);
        const auto eq = kv.rfind('=');
        if (eq == std::string::npos) throw std::runtime_error("trace line " + std::to_string(lineno) + ": bad metric");
        metrics[kv.substr(0, eq)] = std::strtod(kv.c_str() + eq + 1, nullptr);
      } else if (line.rfind("# event: ", 0) == 0) {
        events.push_back(line.substr(9));
      }
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!tr) {
      tr.emplace(cells);
      row.resize(cells.size());
      continue;
    }
    if (cells.size() != tr->columns().size()) {
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": expected " +
                               std::to_string(tr->columns().size()) + " cells");
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      char* end = nullptr;
      row[i] = std::strtod(cells[i].c_str(), &end);
      if (end == cells[i].c_str() || *end != '\0') {
        throw std::runtime_error("trace line " + std::to_string(lineno) + ": malformed number '" + cells[i] + "'");
      }
    }
    tr->append_row(row);
  }
  if (!tr) throw std::runtime_error("trace has no header");
  tr->seed = seed;
  tr->constraint_labels = std::move(labels);
  tr->metrics = std::move(metrics);
  tr->events = std::move(events);
  return std::move(*tr);
}

void emit_trace(const SimulationTrace& trace, const std::string& path) { write_file(path, trace_to_csv(trace)); }

SimulationTrace read_trace(const std::string& path) {
  try {
    return trace_from_csv(read_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string git_blob_sha1(const std::string& content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob += content;
  return sha1_hex(blob);
}

std::string manifest_json(ScenarioKind kind, std::size_t n_barriers) {
  json panels = json::array();
  auto panel = [&](const char* name, const char* title, const char* x, std::vector<std::string> y) {
    panels.push_back({{"panel", name}, {"title", title}, {"x", x}, {"y", y}});
  };
  if (kind == ScenarioKind::acc) {
    panel("acc_safety", "barrier value h and shrunk barrier h_V", "t", {"h", "h_V"});
    panel("acc_velocity", "follower velocity against the desired speed", "t", {"v_f", "V_clf"});
    panel("acc_estimation", "estimation error norm and its bound", "t", {"err_norm", "err_bound"});
    panel("acc_estimate", "true and estimated uncertainty", "t", {"delta_true_1", "delta_hat_1", "out_bound"});
    panel("acc_control", "applied and filtered control", "t", {"u_applied", "u_tilde", "delta_c", "qp_status"});
  } else {
    std::vector<std::string> h, he;
    for (std::size_t i = 1; i <= n_barriers; ++i) {
      h.push_back("h_" + std::to_string(i));
      he.push_back("h_e_" + std::to_string(i));
    }
    panel("multirotor_path", "position in the horizontal plane", "p_x", {"p_y"});
    panel("multirotor_barrier", "obstacle barrier values", "t", h);
    panel("multirotor_cascade", "top barrier of the exponential cascade", "t", he);
    panel("multirotor_estimation", "estimation error norm and its bound", "t", {"err_norm", "err_bound"});
    panel("multirotor_tracking", "position tracking error", "t", {"track_err"});
    panel("multirotor_inputs", "thrust rate and body rates", "t", {"u_1", "u_2", "u_3", "u_4"});
  }
  return json{{"scenario", to_string(kind)}, {"panels", panels}}.dump(2) + "\n";
}

ProbeEstimate probe_scenario(const RunConfig& cfg, std::size_t runs, double burn_in) {
  if (runs < 1) throw ConfigError("probe needs at least one run");
  cfg.validate();
  std::vector<ProbeEstimate> per(runs);
  parallel_for(runs, 0, [&](std::size_t i) {
    const SimulationTrace tr = run_scenario(cfg, i);
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < tr.columns().size(); ++c) {
      if (tr.columns()[c].rfind("delta_true_", 0) == 0) cols.push_back(c);
    }
    Vector prev, cur(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < tr.size(); ++k) {
      for (std::size_t j = 0; j < cols.size(); ++j) cur(static_cast<Eigen::Index>(j)) = tr.at(k, cols[j]);
      if (tr.at(k, 0) >= burn_in) {
        per[i].delta_b = std::max(per[i].delta_b, cur.norm());
        if (prev.size()) per[i].delta_L = std::max(per[i].delta_L, (cur - prev).norm() / cfg.dt);
        prev = cur;
      }
    }
  });
  ProbeEstimate out;
  for (const auto& p : per) {
    out.delta_b = std::max(out.delta_b, p.delta_b);
    out.delta_L = std::max(out.delta_L, p.delta_L);
  }
  return out;
}

}  // namespace rcbf
