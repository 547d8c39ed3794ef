#include "aloha/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/core.h>

namespace aloha::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "1.0.0";

std::string type_name(const json& v) { return v.type_name(); }

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, fmt::format("expected a number, got {}", type_name(v)));
  return v.get<double>();
}

std::int64_t get_integer(const json& v, const std::string& path) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (std::isfinite(x) && x == std::floor(x) && std::abs(x) < 9.0e18) return static_cast<std::int64_t>(x);
  }
  throw ConfigError(path, fmt::format("expected an integer, got {}", type_name(v)));
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, fmt::format("expected a string, got {}", type_name(v)));
  return v.get<std::string>();
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, fmt::format("expected a boolean, got {}", type_name(v)));
  return v.get<bool>();
}

std::vector<double> get_numbers(const json& v, const std::string& path, bool allow_scalar) {
  if (allow_scalar && v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw ConfigError(path, fmt::format("expected an array of numbers, got {}", type_name(v)));
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_number(v[i], fmt::format("{}[{}]", path, i)));
  return out;
}

std::vector<std::int64_t> get_integers(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, fmt::format("expected an array of integers, got {}", type_name(v)));
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_integer(v[i], fmt::format("{}[{}]", path, i)));
  return out;
}

int to_int(std::int64_t x, const std::string& path) {
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigError(path, "integer out of range");
  }
  return static_cast<int>(x);
}

bool mode_uses_lambda(const std::string& mode) { return mode != "spectral" && mode != "sweep"; }

Vec expand_lambda(const std::vector<double>& lambda, int k) {
  if (lambda.empty()) return Vec::Zero(k);
  if (lambda.size() == 1) return Vec::Constant(k, lambda.front());
  return Eigen::Map<const Vec>(lambda.data(), static_cast<Eigen::Index>(lambda.size()));
}

bool is_symmetric(const Vec& lambda) { return lambda.size() > 0 && lambda.minCoeff() == lambda.maxCoeff(); }

ArrivalModel make_arrivals(const RunConfig& c, const Vec& lambda) {
  const ArrivalFamily family = parse_arrival_family(c.arrivals);
  std::vector<double> rates(lambda.data(), lambda.data() + lambda.size());
  switch (family) {
    case ArrivalFamily::Poisson: return ArrivalModel::poisson(std::move(rates), c.broadcast);
    case ArrivalFamily::Bernoulli: return ArrivalModel::bernoulli(std::move(rates), c.broadcast);
    case ArrivalFamily::Deterministic: return ArrivalModel::deterministic(std::move(rates));
    case ArrivalFamily::Zero: return ArrivalModel::zero(static_cast<int>(lambda.size()));
  }
  throw std::invalid_argument("unknown arrival family");
}

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt::format("{:.6g}", v[i]);
  return out;
}

std::string join(const Vec& v) { return join(std::vector<double>(v.data(), v.data() + v.size())); }

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  f << content;
  if (!f) throw std::runtime_error(fmt::format("write to {} failed", path.string()));
}

struct Outcome {
  Json result;
  std::string csv;
  std::vector<std::string> summary;
  bool partial = false;
};

Outcome run_spectral(const RunConfig& c, const Graph& g) {
  const SpectralReport r = spectral_report(g, c.lambda.empty() ? 0.0 : c.lambda.front());
  Outcome o;
  o.result = to_json(r);
  std::ostringstream csv;
  write_spectral_csv(csv, r);
  o.csv = csv.str();
  o.summary.push_back(fmt::format("eigenvalues nu:   {}", join(r.eigenvalues)));
  o.summary.push_back(fmt::format("spectral gap:     {:.12g}", r.spectral_gap));
  o.summary.push_back(fmt::format("global threshold: {:.12g}  (e^-1/V, V = {})", r.global_threshold,
                                  r.neighborhood_size));
  o.summary.push_back(r.local_threshold ? fmt::format("local threshold:  {:.12g}", *r.local_threshold)
                                        : fmt::format("local threshold:  {}", r.note));
  return o;
}

Outcome run_classify(const RunConfig& c, const Graph& g) {
  const Vec lambda = expand_lambda(c.lambda, g.node_count());
  const StabilityVerdict v = classify(g, lambda);
  Outcome o;
  o.result = {{"verdict", to_json(v)}};
  o.summary.push_back(fmt::format("lambda = {:.6g}  global threshold = {:.12g}  local threshold = {}", v.lambda,
                                  v.global_threshold,
                                  v.local_threshold ? fmt::format("{:.12g}", *v.local_threshold) : "n/a"));
  o.summary.push_back(fmt::format("fluid_stable={}  diagonal={}  regime: {}", v.fluid_stable,
                                  to_string(v.diagonal), v.regime));
  if (v.symmetric) {
    const DiagonalSpectrum s = diagonal_spectrum(g, v.lambda);
    o.result["diagonal_spectrum"] = to_json(s);
    o.summary.push_back(fmt::format("mu0 = {:.6g}  mu_i = {}", s.mu0, join(s.mu)));
  } else {
    StolyarSearch search;
    search.seed = c.seed;
    const StolyarResult w = stolyar_search(g, lambda, search);
    o.result["stolyar"] = to_json(w);
    o.summary.push_back(fmt::format("stolyar search: {} (margin {:.6g})", w.status, w.best.margin));
  }
  for (const auto& n : v.notes) o.summary.push_back("note: " + n);
  std::ostringstream csv;
  csv << "lambda,global_threshold,local_threshold,fluid_stable,diagonal,regime\n"
      << fmt::format("{:.17g},{:.17g},{},{},{},\"{}\"\n", v.lambda, v.global_threshold,
                     v.local_threshold ? fmt::format("{:.17g}", *v.local_threshold) : "", v.fluid_stable,
                     to_string(v.diagonal), v.regime);
  o.csv = csv.str();
  return o;
}

Outcome run_simulate(const RunConfig& c, const Graph& g, const fs::path& dir) {
  const int k = g.node_count();
  const Vec lambda = expand_lambda(c.lambda, k);
  const ArrivalModel arrivals = make_arrivals(c, lambda);
  WorkloadState initial{c.initial.empty() ? Counts(static_cast<std::size_t>(k), 0) : Counts(c.initial), 0};
  SimulationOptions opt;
  opt.slots = c.slots;
  opt.seed = c.seed;
  opt.thinning = c.thinning;
  opt.record = c.trace;
  const Trace trace = simulate(g, arrivals, initial, opt);
  Outcome o;
  o.partial = trace.aborted;
  o.result = {{"summary", to_json(trace.summary)},
              {"aborted", trace.aborted},
              {"abort_reason", trace.abort_reason}};
  if (c.trace) {
    std::ostringstream lines;
    write_trace_jsonl(lines, trace);
    write_file(dir / "trace.jsonl", lines.str());
    o.result["trace_file"] = "trace.jsonl";
  }
  std::ostringstream csv;
  write_summary_csv(csv, trace.summary);
  o.csv = csv.str();
  const auto& s = trace.summary;
  o.summary.push_back(fmt::format("slots run: {}  mean |W|: {:.6g}  final |W|: {}  zero visits: {}", s.slots_run,
                                  s.mean_total, s.final_state.total(), s.zero_visits));
  o.summary.push_back(fmt::format("throughput per node: {}", join(s.throughput)));
  if (trace.aborted) o.summary.push_back("ABORTED: " + trace.abort_reason);
  return o;
}

Outcome run_fluid(const RunConfig& c, const Graph& g) {
  const int k = g.node_count();
  const Vec lambda = expand_lambda(c.lambda, k);
  const Vec z0 = c.z0.empty() ? Vec::Constant(k, 1.0 / k) : to_vec(c.z0);
  FluidParams params{g, lambda};
  params.horizon = c.horizon > 0.0 ? c.horizon : 100.0;
  params.step = c.step;
  params.sample_dt = c.sample_dt > 0.0 ? c.sample_dt : 0.1;
  const FluidTrajectory traj = integrate(z0, params);
  Outcome o;
  o.result = {{"trajectory", to_json(traj, true)}};
  std::ostringstream csv;
  write_trajectory_csv(csv, traj);
  o.csv = csv.str();
  o.summary.push_back(fmt::format("end: {} at t = {:.6g}; final z = ({})",
                                  traj.end == FluidEnd::Drained ? "drained" : "horizon", traj.end_time,
                                  join(traj.samples.back().z)));
  if (traj.empty_neighborhood_seen) {
    o.summary.push_back("note: a whole neighborhood was empty at some sample (rhs_i = lambda_i used)");
  }
  if (g.is_regular() && is_symmetric(lambda) &&
      std::abs(lambda(0) - kInvE / g.regular_size()) > 1e-12) {
    DrainGrowthOptions dg;
    dg.lambda = lambda(0);
    dg.starts = {z0};
    dg.horizon = c.horizon;
    if (c.step > 0.0) dg.step = c.step;
    const DrainGrowthReport r = drain_growth_check(g, dg);
    o.result["drain_growth"] = to_json(r);
    o.summary.push_back(fmt::format("drain/growth check ({}): {}", r.subcritical ? "subcritical" : "supercritical",
                                    r.all_ok ? "ok" : "not satisfied"));
  }
  return o;
}

Outcome run_stable_points(const RunConfig& c, const Graph& g) {
  StablePointSearch search;
  search.starts = c.starts;
  search.seed = c.seed;
  search.tol = c.tol;
  search.symmetric_ansatz = c.ansatz == "on" || (c.ansatz == "auto" && g == make_cycle(4));
  const StablePointResult r = find_stable_points(g, c.lambda.front(), search);
  Outcome o;
  o.result = to_json(r);
  o.result["symmetric_ansatz"] = search.symmetric_ansatz;
  std::ostringstream csv;
  write_stable_points_csv(csv, r);
  o.csv = csv.str();
  o.summary.push_back(fmt::format("{} point(s){}; {} of {} starts dropped", r.points.size(),
                                  search.symmetric_ansatz ? " on the symmetric ansatz line" : "",
                                  r.dropped_starts, r.attempted_starts));
  for (const auto& p : r.points) {
    o.summary.push_back(fmt::format("  y = ({})  |alpha| = {:.2e}  {}", join(p.y), p.residual, to_string(p.kind)));
  }
  return o;
}

Outcome run_sweep(const RunConfig& c, const Graph& g) {
  SweepOptions opt;
  opt.grid = c.grid;
  opt.slots = c.slots;
  opt.reps = c.reps > 0 ? c.reps : 4;
  opt.seed = c.seed;
  opt.initial_per_node = c.initial_per_node >= 0 ? c.initial_per_node : 0;
  opt.family = parse_arrival_family(c.arrivals);
  const SweepResult r = lambda_sweep(g, opt);
  Outcome o;
  o.result = to_json(r);
  std::ostringstream csv;
  write_sweep_csv(csv, r);
  o.csv = csv.str();
  o.summary.push_back(fmt::format("global threshold {:.6g}, local threshold {}", r.global_threshold,
                                  r.local_threshold ? fmt::format("{:.6g}", *r.local_threshold) : "n/a"));
  for (const auto& p : r.points) {
    o.summary.push_back(fmt::format("  lambda {:.6g}: mean |W| {:.4g}, slope {:.4g} (fluid {:.4g}), returns {:.2f}  [{}]",
                                    p.lambda, p.mean_total, p.slope, std::max(0.0, p.fluid_slope),
                                    p.return_fraction, p.label));
  }
  return o;
}

Outcome run_convergence(const RunConfig& c, const Graph& g) {
  ConvergenceOptions opt;
  opt.lambda = c.lambda.front();
  if (!c.z0.empty()) opt.direction = to_vec(c.z0);
  if (!c.scales.empty()) opt.scales = c.scales;
  if (c.horizon > 0.0) opt.horizon = c.horizon;
  if (c.sample_dt > 0.0) opt.grid_dt = c.sample_dt;
  opt.reps = c.reps > 0 ? c.reps : 20;
  opt.seed = c.seed;
  opt.family = parse_arrival_family(c.arrivals);
  const ConvergenceRecord r = fluid_limit_convergence(g, opt);
  Outcome o;
  o.result = to_json(r);
  std::ostringstream csv;
  write_convergence_csv(csv, r);
  o.csv = csv.str();
  for (const auto& s : r.scales) {
    o.summary.push_back(fmt::format("  scale {:>8g}: median sup L1 gap {:.4g} ({} flagged)", s.scale, s.median, s.flagged));
  }
  o.summary.push_back(fmt::format("medians strictly decreasing: {}", r.strictly_decreasing));
  return o;
}

Outcome run_boundary(const RunConfig& c, const Graph& g) {
  BoundaryOptions opt;
  opt.lambda = expand_lambda(c.lambda, g.node_count());
  if (!c.z0.empty()) opt.starts = {to_vec(c.z0)};
  if (c.horizon > 0.0) opt.horizon = c.horizon;
  if (c.step > 0.0) opt.step = c.step;
  if (c.sample_dt > 0.0) opt.sample_dt = c.sample_dt;
  const BoundaryReport r = boundary_repulsion_check(g, opt);
  Outcome o;
  o.result = to_json(r);
  std::ostringstream csv;
  write_boundary_csv(csv, r);
  o.csv = csv.str();
  o.summary.push_back(fmt::format("lambda_* = {:.6g}  K1 = {:.6g}  K2 = {:.6g}  c = {:.6g}  a = {:.6g}", r.lambda_star,
                                  r.k1, r.k2, r.c, r.a));
  for (const auto& t : r.trajectories) {
    o.summary.push_back(fmt::format("  start ({}): min z on (0, {:.4g}) = {:.4g}, dominance violations {}",
                                    join(t.start), t.end_time, t.min_interior, t.dominance_violations));
  }
  o.summary.push_back(fmt::format("all positive: {}  dominance ok: {}", r.all_positive, r.dominance_ok));
  return o;
}

Outcome run_rates(const RunConfig& c, const Graph& g) {
  const ArrivalModel arrivals = make_arrivals(c, expand_lambda(c.lambda, g.node_count()));
  RateProbeOptions opt;
  if (!c.checkpoints.empty()) opt.checkpoints = c.checkpoints;
  if (c.reps > 0) opt.reps = c.reps;
  if (c.initial_per_node >= 0) opt.initial_per_node = c.initial_per_node;
  opt.reference_slots = c.reference_slots;
  opt.seed = c.seed;
  const RateProbeReport r = convergence_rate_probe(g, arrivals, opt);
  Outcome o;
  o.result = to_json(r);
  std::ostringstream csv;
  write_rate_probe_csv(csv, r);
  o.csv = csv.str();
  for (std::size_t i = 0; i < r.checkpoints.size(); ++i) {
    o.summary.push_back(fmt::format("  n = {:>8}: TV = {:.4f} +- {:.4f}", r.checkpoints[i], r.tv[i], r.tv_sd[i]));
  }
  o.summary.push_back(fmt::format("truncation Q = {} ({} bins), reference self-TV {:.4f}, non-increasing: {}",
                                  r.truncation, r.bins, r.self_tv, r.non_increasing));
  for (const auto& w : r.warnings) o.summary.push_back("warning: " + w);
  return o;
}

void add_options(CLI::App* app, RunConfig& c, std::string& config_path) {
  app->add_option("--config", config_path, "JSON configuration file (flags override it)");
  app->add_option("--graph", c.graph, "cycle:K, complete:K, torus:RxC, random-regular:K:d[:seed] or edge-list file");
  app->add_option("--lambda", c.lambda, "arrival rate, or one rate per node (comma separated)")->delimiter(',');
  app->add_option("--arrivals", c.arrivals, "poisson | bernoulli | deterministic | zero");
  app->add_flag("--broadcast", c.broadcast, "one uniform drives the arrivals of every node");
  app->add_option("--seed", c.seed, "RNG seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--format", c.format, "json | csv");
  app->add_option("--slots", c.slots, "slots to simulate");
  app->add_option("--thinning", c.thinning, "record every n-th slot");
  app->add_option("--initial", c.initial, "initial workload per node")->delimiter(',');
  app->add_flag("--trace", c.trace, "write the slot-by-slot trace as JSON lines");
  app->add_option("--z0", c.z0, "initial fluid state or direction")->delimiter(',');
  app->add_option("--horizon", c.horizon, "time horizon");
  app->add_option("--step", c.step, "integrator step");
  app->add_option("--sample-dt", c.sample_dt, "sampling interval");
  app->add_option("--starts", c.starts, "multistart count");
  app->add_option("--tol", c.tol, "root-finding tolerance on |alpha|");
  app->add_option("--ansatz", c.ansatz, "auto | on | off (symmetric ansatz, cycle(4) only)");
  app->add_option("--grid", c.grid, "lambda grid")->delimiter(',');
  app->add_option("--scales", c.scales, "initial masses")->delimiter(',');
  app->add_option("--checkpoints", c.checkpoints, "slots at which laws are compared")->delimiter(',');
  app->add_option("--reps", c.reps, "replications");
  app->add_option("--initial-per-node", c.initial_per_node, "initial users per node");
  app->add_option("--reference-slots", c.reference_slots, "length of the reference chain");
}

}  // namespace

RunConfig config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("$", "configuration must be a JSON object");
  using Setter = std::function<void(const json&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"mode", [&](const json& v, const std::string& p) { c.mode = get_string(v, p); }},
      {"graph", [&](const json& v, const std::string& p) { c.graph = get_string(v, p); }},
      {"lambda", [&](const json& v, const std::string& p) { c.lambda = get_numbers(v, p, true); }},
      {"arrivals", [&](const json& v, const std::string& p) { c.arrivals = get_string(v, p); }},
      {"broadcast", [&](const json& v, const std::string& p) { c.broadcast = get_bool(v, p); }},
      {"seed",
       [&](const json& v, const std::string& p) {
         const auto s = get_integer(v, p);
         if (s < 0) throw ConfigError(p, "seed must be nonnegative");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      {"out", [&](const json& v, const std::string& p) { c.out = get_string(v, p); }},
      {"format", [&](const json& v, const std::string& p) { c.format = get_string(v, p); }},
      {"slots", [&](const json& v, const std::string& p) { c.slots = get_integer(v, p); }},
      {"thinning", [&](const json& v, const std::string& p) { c.thinning = get_integer(v, p); }},
      {"initial", [&](const json& v, const std::string& p) { c.initial = get_integers(v, p); }},
      {"trace", [&](const json& v, const std::string& p) { c.trace = get_bool(v, p); }},
      {"z0", [&](const json& v, const std::string& p) { c.z0 = get_numbers(v, p, false); }},
      {"horizon", [&](const json& v, const std::string& p) { c.horizon = get_number(v, p); }},
      {"step", [&](const json& v, const std::string& p) { c.step = get_number(v, p); }},
      {"sample_dt", [&](const json& v, const std::string& p) { c.sample_dt = get_number(v, p); }},
      {"starts", [&](const json& v, const std::string& p) { c.starts = to_int(get_integer(v, p), p); }},
      {"tol", [&](const json& v, const std::string& p) { c.tol = get_number(v, p); }},
      {"ansatz", [&](const json& v, const std::string& p) { c.ansatz = get_string(v, p); }},
      {"grid", [&](const json& v, const std::string& p) { c.grid = get_numbers(v, p, false); }},
      {"scales", [&](const json& v, const std::string& p) { c.scales = get_numbers(v, p, false); }},
      {"checkpoints", [&](const json& v, const std::string& p) { c.checkpoints = get_integers(v, p); }},
      {"reps", [&](const json& v, const std::string& p) { c.reps = to_int(get_integer(v, p), p); }},
      {"initial_per_node", [&](const json& v, const std::string& p) { c.initial_per_node = get_integer(v, p); }},
      {"reference_slots", [&](const json& v, const std::string& p) { c.reference_slots = get_integer(v, p); }},
  };
  for (const auto& [key, value] : j.items()) {
    const std::string path = "$." + key;
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(path, "unknown key");
    it->second(value, path);
  }
  return c;
}

void validate(const RunConfig& c) {
  if (c.mode.empty()) throw ConfigError("$.mode", "no mode given");
  if (std::find(modes().begin(), modes().end(), c.mode) == modes().end()) {
    throw ConfigError("$.mode", fmt::format("unknown mode '{}'", c.mode));
  }
  if (c.graph.empty()) throw ConfigError("$.graph", "missing graph");
  std::optional<Graph> g;
  try {
    g = parse_graph_spec(c.graph);
  } catch (const std::exception& e) {
    throw ConfigError("$.graph", e.what());
  }
  const int k = g->node_count();
  if (c.format != "json" && c.format != "csv") throw ConfigError("$.format", "expected json or csv");
  ArrivalFamily family;
  try {
    family = parse_arrival_family(c.arrivals);
  } catch (const std::exception& e) {
    throw ConfigError("$.arrivals", e.what());
  }
  if (c.lambda.size() > 1 && static_cast<int>(c.lambda.size()) != k) {
    throw ConfigError("$.lambda", fmt::format("expected 1 or {} rates, got {}", k, c.lambda.size()));
  }
  const bool zero_model = family == ArrivalFamily::Zero && c.mode == "simulate";
  if (zero_model) {
    if (std::any_of(c.lambda.begin(), c.lambda.end(), [](double x) { return x != 0.0; })) {
      throw ConfigError("$.lambda", "lambda/model mismatch: the zero-arrival model carries no rate");
    }
  } else {
    if (mode_uses_lambda(c.mode) && c.lambda.empty()) throw ConfigError("$.lambda", "missing lambda");
    for (std::size_t i = 0; i < c.lambda.size(); ++i) {
      if (!(c.lambda[i] > 0.0) || !std::isfinite(c.lambda[i])) {
        throw ConfigError(fmt::format("$.lambda[{}]", i), "lambda_i > 0 required");
      }
      if (family == ArrivalFamily::Bernoulli && c.lambda[i] > 1.0) {
        throw ConfigError(fmt::format("$.lambda[{}]", i), "Bernoulli rates must be <= 1");
      }
    }
  }
  if ((c.mode == "stable-points" || c.mode == "convergence") && c.lambda.size() > 1 &&
      !is_symmetric(to_vec(c.lambda))) {
    throw ConfigError("$.lambda", "this mode needs one common rate");
  }
  if (c.slots < 1) throw ConfigError("$.slots", "slots must be >= 1");
  if (c.thinning < 1) throw ConfigError("$.thinning", "thinning must be >= 1");
  if (!c.initial.empty()) {
    if (static_cast<int>(c.initial.size()) != k) throw ConfigError("$.initial", fmt::format("expected {} counts", k));
    for (std::size_t i = 0; i < c.initial.size(); ++i) {
      if (c.initial[i] < 0) throw ConfigError(fmt::format("$.initial[{}]", i), "counts must be nonnegative");
    }
  }
  if (!c.z0.empty()) {
    if (static_cast<int>(c.z0.size()) != k) throw ConfigError("$.z0", fmt::format("expected {} coordinates", k));
    double mass = 0.0;
    for (std::size_t i = 0; i < c.z0.size(); ++i) {
      if (!(c.z0[i] >= 0.0)) throw ConfigError(fmt::format("$.z0[{}]", i), "coordinates must be nonnegative");
      mass += c.z0[i];
    }
    if (!(mass > 0.0)) throw ConfigError("$.z0", "state must have positive mass");
  }
  if (c.horizon < 0.0) throw ConfigError("$.horizon", "must be >= 0");
  if (c.step < 0.0) throw ConfigError("$.step", "must be >= 0");
  if (c.sample_dt < 0.0) throw ConfigError("$.sample_dt", "must be >= 0");
  if (c.starts < 0) throw ConfigError("$.starts", "must be >= 0");
  if (!(c.tol > 0.0)) throw ConfigError("$.tol", "must be > 0");
  if (c.ansatz != "auto" && c.ansatz != "on" && c.ansatz != "off") {
    throw ConfigError("$.ansatz", "expected auto, on or off");
  }
  if (c.mode == "stable-points" && c.ansatz == "on" && !(*g == make_cycle(4))) {
    throw ConfigError("$.ansatz", "the symmetric ansatz needs cycle(4)");
  }
  if (c.mode == "sweep") {
    if (c.grid.empty()) throw ConfigError("$.grid", "missing lambda grid");
    for (std::size_t i = 0; i < c.grid.size(); ++i) {
      if (!(c.grid[i] > 0.0)) throw ConfigError(fmt::format("$.grid[{}]", i), "lambda_i > 0 required");
    }
  }
  for (std::size_t i = 0; i < c.scales.size(); ++i) {
    if (!(c.scales[i] > 0.0)) throw ConfigError(fmt::format("$.scales[{}]", i), "scales must be positive");
  }
  for (std::size_t i = 0; i < c.checkpoints.size(); ++i) {
    if (c.checkpoints[i] < 1) throw ConfigError(fmt::format("$.checkpoints[{}]", i), "checkpoints must be >= 1");
  }
  if (c.reps < 0) throw ConfigError("$.reps", "must be >= 0");
  if (c.reference_slots < 2) throw ConfigError("$.reference_slots", "must be >= 2");
}

Json to_json(const RunConfig& c) {
  return {{"mode", c.mode},
          {"graph", c.graph},
          {"lambda", c.lambda},
          {"arrivals", c.arrivals},
          {"broadcast", c.broadcast},
          {"seed", c.seed},
          {"format", c.format},
          {"slots", c.slots},
          {"thinning", c.thinning},
          {"initial", c.initial},
          {"trace", c.trace},
          {"z0", c.z0},
          {"horizon", c.horizon},
          {"step", c.step},
          {"sample_dt", c.sample_dt},
          {"starts", c.starts},
          {"tol", c.tol},
          {"ansatz", c.ansatz},
          {"grid", c.grid},
          {"scales", c.scales},
          {"checkpoints", c.checkpoints},
          {"reps", c.reps},
          {"initial_per_node", c.initial_per_node},
          {"reference_slots", c.reference_slots}};
}

std::optional<RunConfig> parse_config(int argc, const char* const* argv, std::ostream& out) {
  RunConfig c;
  // The file is applied first so that any flag given on the command line wins.
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg = argv[i];
    std::string path;
    if (arg == "--config" && i + 1 < argc) path = argv[i + 1];
    if (arg.starts_with("--config=")) path = std::string(arg.substr(9));
    if (path.empty()) continue;
    std::ifstream f(path);
    if (!f) throw ConfigError("--config", fmt::format("cannot open '{}'", path));
    json j;
    try {
      j = json::parse(f);
    } catch (const json::parse_error& e) {
      throw ConfigError("--config", e.what());
    }
    c = config_from_json(j, c);
  }

  CLI::App app{"Spatial slotted ALOHA: simulation, fluid limits and stability analysis", "aloha"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(0, 1);
  std::string config_path;
  add_options(&app, c, config_path);
  std::vector<CLI::App*> subs;
  for (const auto& mode : modes()) {
    CLI::App* sub = app.add_subcommand(mode, "run the " + mode + " mode");
    add_options(sub, c, config_path);
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, out);
    return std::nullopt;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, out);
    return std::nullopt;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, out);
    return std::nullopt;
  } catch (const CLI::ParseError& e) {
    throw ConfigError("argv", e.what());
  }
  for (auto* sub : subs) {
    if (sub->parsed()) c.mode = sub->get_name();
  }
  validate(c);
  return c;
}

int run(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    const Graph g = parse_graph_spec(c.graph);
    const fs::path dir(c.out);
    fs::create_directories(dir);
    Outcome o;
    if (c.mode == "spectral") o = run_spectral(c, g);
    else if (c.mode == "classify") o = run_classify(c, g);
    else if (c.mode == "simulate") o = run_simulate(c, g, dir);
    else if (c.mode == "fluid") o = run_fluid(c, g);
    else if (c.mode == "stable-points") o = run_stable_points(c, g);
    else if (c.mode == "sweep") o = run_sweep(c, g);
    else if (c.mode == "convergence") o = run_convergence(c, g);
    else if (c.mode == "boundary") o = run_boundary(c, g);
    else if (c.mode == "rates") o = run_rates(c, g);
    else throw ConfigError("$.mode", fmt::format("unknown mode '{}'", c.mode));

    const std::string artifact = c.mode + "." + c.format;
    if (c.format == "json") {
      const Json doc = {{"mode", c.mode},
                        {"version", kVersion},
                        {"partial", o.partial},
                        {"config", to_json(c)},
                        {"graph", to_json(g)},
                        {"result", o.result}};
      write_file(dir / artifact, doc.dump(2) + "\n");
    } else {
      write_file(dir / artifact, o.csv);
    }
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    const Json meta = {{"mode", c.mode},
                       {"artifact", artifact},
                       {"version", kVersion},
                       {"created", fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now))},
                       {"partial", o.partial}};
    write_file(dir / "metadata.json", meta.dump(2) + "\n");

    out << fmt::format("[{}] graph {} (K = {})\n", c.mode, c.graph, g.node_count());
    for (const auto& line : o.summary) out << line << '\n';
    out << fmt::format("wrote {}\n", (dir / artifact).string());
    return o.partial ? kExitRuntime : kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::optional<RunConfig> config;
  try {
    config = parse_config(argc, argv, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (!config) return kExitOk;
  return run(*config, out, err);
}

}  // namespace aloha::cli
