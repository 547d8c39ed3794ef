#include "aloha/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <fmt/core.h>

#include "aloha/parallel.hpp"
#include "aloha/rng.hpp"
#include "aloha/stability.hpp"

namespace aloha {
namespace {

std::int64_t scaled_slot(double norm, double t) {
  const double x = norm * t;
  return static_cast<std::int64_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
}

ArrivalModel symmetric_arrivals(ArrivalFamily family, int k, double lambda) {
  std::vector<double> rates(static_cast<std::size_t>(k), lambda);
  switch (family) {
    case ArrivalFamily::Poisson: return ArrivalModel::poisson(std::move(rates));
    case ArrivalFamily::Bernoulli: return ArrivalModel::bernoulli(std::move(rates));
    case ArrivalFamily::Deterministic: return ArrivalModel::deterministic(std::move(rates));
    case ArrivalFamily::Zero: return ArrivalModel::zero(k);
  }
  throw std::invalid_argument("unknown arrival family");
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

std::int64_t total_of(const Counts& c) { return std::accumulate(c.begin(), c.end(), std::int64_t{0}); }

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ConvergenceRecord fluid_limit_convergence(const Graph& g, const ConvergenceOptions& options) {
  const int k = g.node_count();
  Vec dir = options.direction.size() == 0 ? Vec::Constant(k, 1.0 / k) : options.direction;
  if (dir.size() != k) throw std::invalid_argument("direction has wrong length");
  if (!((dir.array() > 0.0).all())) throw std::invalid_argument("direction must lie in the interior");
  dir /= dir.sum();
  if (options.reps < 1) throw std::invalid_argument("reps must be >= 1");
  if (!(options.grid_dt > 0.0) || !(options.horizon > 0.0)) {
    throw std::invalid_argument("grid step and horizon must be positive");
  }
  for (std::size_t i = 1; i < options.scales.size(); ++i) {
    if (!(options.scales[i] > options.scales[i - 1])) throw std::invalid_argument("scales must increase");
  }
  const Vec lambda = Vec::Constant(k, options.lambda);
  const ArrivalModel arrivals = symmetric_arrivals(options.family, k, options.lambda);
  arrivals.validate(k);

  std::vector<double> times;
  const auto steps = static_cast<long>(std::llround(options.horizon / options.grid_dt));
  for (long i = 0; i <= steps; ++i) times.push_back(std::min(options.horizon, i * options.grid_dt));
  if (times.back() < options.horizon) times.push_back(options.horizon);

  struct ScaleSetup {
    Counts w0;
    double norm = 0.0;
    std::vector<std::int64_t> slots;
    std::vector<Vec> fluid;
  };
  std::vector<ScaleSetup> setups;
  for (double s : options.scales) {
    ScaleSetup setup;
    for (int i = 0; i < k; ++i) setup.w0.push_back(std::llround(s * dir(i)));
    setup.norm = static_cast<double>(total_of(setup.w0));
    if (!(setup.norm > 0.0)) throw std::invalid_argument(fmt::format("scale {} rounds to an empty state", s));
    FluidParams params{g, lambda};
    params.horizon = options.horizon;
    params.sample_dt = options.grid_dt;
    params.zero_tol = 1e-9;
    Vec z0(k);
    for (int i = 0; i < k; ++i) z0(i) = static_cast<double>(setup.w0[static_cast<std::size_t>(i)]) / setup.norm;
    const FluidTrajectory traj = integrate(z0, params);
    for (double t : times) {
      setup.slots.push_back(scaled_slot(setup.norm, t));
      setup.fluid.push_back(traj.at(t));
    }
    setups.push_back(std::move(setup));
  }

  const std::size_t jobs = setups.size() * static_cast<std::size_t>(options.reps);
  const auto streams = substreams(options.seed, jobs);
  std::vector<double> distance(jobs, 0.0);
  std::vector<char> flagged(jobs, 0);
  parallel_for(jobs, [&](std::size_t job) {
    const ScaleSetup& setup = setups[job / static_cast<std::size_t>(options.reps)];
    std::vector<Vec> path(times.size());
    std::size_t next = 0;
    const auto capture = [&](const WorkloadState& w) {
      while (next < times.size() && setup.slots[next] == w.slot) {
        path[next++] = w.as_vector() / setup.norm;
      }
    };
    const WorkloadState initial{setup.w0, 0};
    capture(initial);
    SimulationOptions sim;
    sim.slots = std::max<std::int64_t>(1, setup.slots.back());
    sim.record = false;
    sim.generator = streams[job];
    simulate(g, arrivals, initial, sim, [&](const WorkloadState&, const SlotOutcome&, const WorkloadState& after) {
      capture(after);
    });
    double d = 0.0;
    bool touched = false;
    for (std::size_t i = 0; i < times.size(); ++i) {
      d = std::max(d, (path[i] - setup.fluid[i]).lpNorm<1>());
      if (i > 0 && times[i] < options.horizon && path[i].minCoeff() <= 0.0) touched = true;
    }
    distance[job] = d;
    flagged[job] = touched ? 1 : 0;
  });

  ConvergenceRecord record;
  record.horizon = options.horizon;
  for (std::size_t m = 0; m < setups.size(); ++m) {
    ScaleRecord sr;
    sr.scale = options.scales[m];
    for (int r = 0; r < options.reps; ++r) {
      const std::size_t job = m * static_cast<std::size_t>(options.reps) + static_cast<std::size_t>(r);
      sr.distances.push_back(distance[job]);
      sr.flagged += flagged[job];
    }
    sr.median = median(sr.distances);
    record.scales.push_back(std::move(sr));
  }
  record.strictly_decreasing = true;
  for (std::size_t m = 1; m < record.scales.size(); ++m) {
    if (!(record.scales[m].median < record.scales[m - 1].median)) record.strictly_decreasing = false;
  }
  return record;
}

SweepResult lambda_sweep(const Graph& g, const SweepOptions& options) {
  if (!g.is_regular()) throw GraphError("lambda sweep needs a regular graph");
  if (options.reps < 1 || options.slots < 1) throw std::invalid_argument("reps and slots must be >= 1");
  if (options.initial_per_node < 0) throw std::invalid_argument("initial workload must be nonnegative");
  const int k = g.node_count();
  const SpectralReport spectrum = spectral_report(g, 0.0);

  SweepResult result;
  result.global_threshold = spectrum.global_threshold;
  result.local_threshold = spectrum.local_threshold;
  result.slots = options.slots;
  result.reps = options.reps;

  std::vector<double> grid = options.grid;
  std::sort(grid.begin(), grid.end());
  for (double lambda : grid) {
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda_i > 0 required");
    symmetric_arrivals(options.family, k, lambda).validate(k);
  }

  const std::size_t jobs = grid.size() * static_cast<std::size_t>(options.reps);
  const auto streams = substreams(options.seed, jobs);
  struct RepOutcome {
    double mean_total = 0.0;
    double slope = 0.0;
    bool returned = false;
    double zero_fraction = 0.0;
  };
  std::vector<RepOutcome> outcomes(jobs);
  const WorkloadState initial{Counts(static_cast<std::size_t>(k), options.initial_per_node), 0};
  const auto initial_total = static_cast<double>(initial.total());
  parallel_for(jobs, [&](std::size_t job) {
    const double lambda = grid[job / static_cast<std::size_t>(options.reps)];
    SimulationOptions sim;
    sim.slots = options.slots;
    sim.record = false;
    sim.generator = streams[job];
    bool returned = false;
    const std::int64_t half = options.slots / 2;
    const Trace trace = simulate(g, symmetric_arrivals(options.family, k, lambda), initial, sim,
                                 [&](const WorkloadState&, const SlotOutcome&, const WorkloadState& after) {
                                   if (!returned && after.slot > half && after.total() <= k) returned = true;
                                 });
    const auto& s = trace.summary;
    const auto run = static_cast<double>(std::max<std::int64_t>(1, s.slots_run));
    outcomes[job] = {s.mean_total, (static_cast<double>(s.final_state.total()) - initial_total) / run,
                     returned, static_cast<double>(s.zero_visits) / run};
  });

  for (std::size_t m = 0; m < grid.size(); ++m) {
    SweepPoint p;
    p.lambda = grid[m];
    std::vector<double> slopes;
    int returned = 0;
    for (int r = 0; r < options.reps; ++r) {
      const RepOutcome& o = outcomes[m * static_cast<std::size_t>(options.reps) + static_cast<std::size_t>(r)];
      p.mean_total += o.mean_total / options.reps;
      p.zero_fraction += o.zero_fraction / options.reps;
      slopes.push_back(o.slope);
      returned += o.returned ? 1 : 0;
    }
    p.slope = std::accumulate(slopes.begin(), slopes.end(), 0.0) / options.reps;
    if (options.reps > 1) {
      double ss = 0.0;
      for (double v : slopes) ss += (v - p.slope) * (v - p.slope);
      p.slope_se = std::sqrt(ss / (options.reps - 1) / options.reps);
    }
    p.fluid_slope = k * (p.lambda - result.global_threshold);
    p.return_fraction = static_cast<double>(returned) / options.reps;
    if (near(p.lambda, result.global_threshold)) {
      p.label = "critical - inconclusive";
    } else if (p.lambda < result.global_threshold) {
      p.label = "below e^-1/V";
    } else {
      p.label = "above e^-1/V (growth reported; transience is conjectural)";
    }
    result.points.push_back(std::move(p));
  }
  return result;
}

BoundaryReport boundary_repulsion_check(const Graph& g, const BoundaryOptions& options) {
  const int k = g.node_count();
  if (options.lambda.size() != k) throw std::invalid_argument("rate vector has wrong length");
  if (!((options.lambda.array() > 0.0).all())) throw std::invalid_argument("lambda_i > 0 required");

  BoundaryReport report;
  report.lambda_star = options.lambda.minCoeff();
  if (!(report.lambda_star < 1.0)) throw std::invalid_argument("lambda_* < 1 required");
  report.k1 = 2.0 / report.lambda_star - 1.0;
  report.k2 = report.lambda_star / 2.0;
  report.c = 1.0 / (k * (1.0 - report.lambda_star));
  report.diameter = g.diameter();
  if (report.diameter > 0) {
    report.a = report.k2 * (report.k1 - 1.0) / (std::pow(report.k1, report.diameter) - 1.0);
  }

  std::vector<Vec> starts = options.starts;
  if (starts.empty()) {
    for (int i = 0; i < k; ++i) starts.push_back(Vec::Unit(k, i));
  }

  report.all_positive = true;
  report.dominance_ok = true;
  for (const Vec& raw : starts) {
    if (raw.size() != k || (raw.array() < 0.0).any() || !(raw.sum() > 0.0)) {
      throw std::invalid_argument("starts must be nonnegative with positive mass");
    }
    BoundaryTrajectory bt;
    bt.start = raw / raw.sum();
    FluidParams params{g, options.lambda};
    params.horizon = options.horizon;
    params.sample_dt = options.sample_dt;
    params.step = options.step;
    const FluidTrajectory traj = integrate(bt.start, params);
    bt.end_event = traj.end == FluidEnd::Drained ? "drained" : "horizon";
    bt.end_time = traj.end_time;
    bt.empty_neighborhood_seen = traj.empty_neighborhood_seen;

    const auto& samples = traj.samples;
    // The last sample of a drained run sits at the zero-tolerance level.
    const std::size_t interior_end = traj.end == FluidEnd::Drained ? samples.size() - 1 : samples.size();
    bt.min_interior = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < interior_end; ++s) {
      const FluidSample& sample = samples[s];
      bt.symmetry_spread = std::max(bt.symmetry_spread, sample.z.maxCoeff() - sample.z.minCoeff());
      if (s > 0) bt.min_interior = std::min(bt.min_interior, sample.z.minCoeff());
      const Vec rhs = fluid_rhs(sample.z, g, options.lambda);
      for (int i = 0; i < k; ++i) {
        for (int j : g.neighborhood(i)) {
          if (j == i || !(sample.z(i) > report.k1 * sample.z(j))) continue;
          ++bt.dominance_checks;
          if (!(rhs(j) > report.k2)) ++bt.dominance_violations;
        }
      }
    }
    if (samples.size() > 1) {
      bt.first_sample_time = samples[1].t;
      bt.min_at_first_sample = samples[1].z.minCoeff();
    }
    if (!std::isfinite(bt.min_interior)) bt.min_interior = 0.0;
    bt.positive = interior_end > 1 && bt.min_interior > 0.0;

    for (double eps : options.epsilons) {
      EnvelopePoint ep;
      ep.epsilon = eps;
      ep.window_start = report.c * eps;
      ep.window_end = traj.end_time;
      for (const auto& sample : samples) {
        if (sample.z.sum() < 1.0 - eps) {
          ep.window_end = sample.t;
          break;
        }
      }
      double lo = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < interior_end; ++s) {
        if (samples[s].t >= ep.window_start && samples[s].t < ep.window_end) {
          lo = std::min(lo, samples[s].z.minCoeff());
        }
      }
      if (!std::isfinite(lo)) continue;  // empty window
      ep.min_coordinate = lo;
      ep.b_hat = lo / eps;
      bt.envelope.push_back(ep);
    }

    report.all_positive = report.all_positive && bt.positive;
    report.dominance_ok = report.dominance_ok && bt.dominance_violations == 0;
    report.trajectories.push_back(std::move(bt));
  }
  return report;
}

DrainGrowthReport drain_growth_check(const Graph& g, const DrainGrowthOptions& options) {
  if (!g.is_regular()) throw GraphError("drain/growth check needs a regular graph");
  const int k = g.node_count();
  const double v = g.regular_size();
  DrainGrowthReport report;
  report.lambda = options.lambda;
  if (!(options.lambda > 0.0)) throw std::invalid_argument("lambda_i > 0 required");
  if (near(options.lambda, kInvE / v)) {
    throw std::invalid_argument("lambda equals e^-1/V: the drain/growth dichotomy is inconclusive");
  }
  if (options.starts.empty()) throw std::invalid_argument("at least one start is required");
  report.epsilon = kInvE / v - options.lambda;
  report.subcritical = report.epsilon > 0.0;
  report.expected_rate = -report.epsilon;
  report.drain_bound = report.subcritical ? 2.0 / report.epsilon + 10.0 : 0.0;
  report.horizon = options.horizon > 0.0 ? options.horizon : (report.subcritical ? report.drain_bound : 1000.0);
  report.diagonal_locally_stable = classify(g, options.lambda).diagonal == LocalStability::Stable;
  if (!report.subcritical && !report.diagonal_locally_stable) {
    report.notes.push_back("lambda is below the local threshold: convergence of phi(z) to 1/V is not asserted");
  }

  const Vec lambda = Vec::Constant(k, options.lambda);
  std::vector<DrainTrajectory> results(options.starts.size());
  parallel_for(results.size(), [&](std::size_t s) {
    const Vec& z0 = options.starts[s];
    DrainTrajectory dt;
    dt.start = z0;
    FluidParams params{g, lambda};
    params.horizon = report.horizon;
    params.step = options.step;
    params.sample_dt = options.sample_dt;
    params.zero_tol = options.zero_tol;
    const FluidTrajectory traj = integrate(z0, params);
    if (report.subcritical) {
      dt.drain_time = traj.drain_time;
      dt.drained = traj.end == FluidEnd::Drained && *traj.drain_time <= report.drain_bound;
      dt.max_norm_rate = -std::numeric_limits<double>::infinity();
      for (const auto& sample : traj.samples) {
        if (!(sample.z.minCoeff() > 0.0) || !(sample.sum_sq > 0.0)) continue;
        dt.max_norm_rate = std::max(dt.max_norm_rate, sample.sum_sq_rate / (2.0 * std::sqrt(sample.sum_sq)));
      }
      dt.rate_ok = dt.max_norm_rate <= -report.epsilon / 2.0 + options.rate_tol;
    } else {
      const FluidSample& last = traj.samples.back();
      const double r = report.expected_rate;
      dt.growth = last.z / last.t;
      dt.increment_growth = (last.z - z0) / last.t;
      dt.relative_error = ((dt.growth.array() - r).abs() / r).maxCoeff();
      dt.increment_relative_error = ((dt.increment_growth.array() - r).abs() / r).maxCoeff();
      dt.phi_end = phi(last.z, g);
      dt.phi_error = (dt.phi_end.array() - 1.0 / v).abs().maxCoeff();
      dt.growth_ok = dt.relative_error <= options.relative_tol;
      dt.phi_ok = dt.phi_error <= options.phi_tol;
    }
    results[s] = std::move(dt);
  });

  report.all_ok = true;
  for (const auto& dt : results) {
    const bool ok = report.subcritical
                        ? dt.drained && dt.rate_ok
                        : dt.growth_ok && (dt.phi_ok || !report.diagonal_locally_stable);
    report.all_ok = report.all_ok && ok;
  }
  report.trajectories = std::move(results);
  return report;
}

RateProbeReport convergence_rate_probe(const Graph& g, const ArrivalModel& arrivals,
                                       const RateProbeOptions& options) {
  const int k = g.node_count();
  arrivals.validate(k);
  if (arrivals.family == ArrivalFamily::Zero ||
      std::any_of(arrivals.rates.begin(), arrivals.rates.end(), [](double r) { return !(r > 0.0); })) {
    throw std::invalid_argument("hypothesis violation: lambda_i > 0 required");
  }
  if (!arrivals.can_be_all_zero()) {
    throw std::invalid_argument("hypothesis violation: arrivals must be all zero with positive probability");
  }
  const double rate = *std::max_element(arrivals.rates.begin(), arrivals.rates.end());
  if (!(rate < kInvE / g.max_neighborhood_size())) {
    throw std::invalid_argument("hypothesis violation: lambda < e^-1/V required");
  }
  std::vector<std::int64_t> checkpoints = options.checkpoints;
  std::sort(checkpoints.begin(), checkpoints.end());
  if (checkpoints.empty() || checkpoints.front() < 1) throw std::invalid_argument("checkpoints must be >= 1");
  if (options.reps < 2 || options.reference_slots < 2 || options.reference_thinning < 1) {
    throw std::invalid_argument("reps, reference length and thinning must be positive");
  }

  const auto streams = substreams(options.seed, static_cast<std::size_t>(options.reps) + 2);

  // Long-run reference law from one chain after burn-in.
  std::vector<Counts> reference;
  {
    SimulationOptions sim;
    sim.slots = options.burn_in + options.reference_slots;
    sim.record = false;
    sim.generator = streams[0];
    simulate(g, arrivals, WorkloadState{Counts(static_cast<std::size_t>(k), 0), 0}, sim,
             [&](const WorkloadState&, const SlotOutcome&, const WorkloadState& after) {
               const std::int64_t n = after.slot - options.burn_in;
               if (n > 0 && n % options.reference_thinning == 0) reference.push_back(after.counts);
             });
  }

  // Empirical laws at the checkpoints over independent replications.
  const std::size_t reps = static_cast<std::size_t>(options.reps);
  std::vector<std::vector<Counts>> at(checkpoints.size(), std::vector<Counts>(reps));
  const WorkloadState initial{Counts(static_cast<std::size_t>(k), options.initial_per_node), 0};
  parallel_for(reps, [&](std::size_t r) {
    SimulationOptions sim;
    sim.slots = checkpoints.back();
    sim.record = false;
    sim.generator = streams[r + 2];
    std::size_t next = 0;
    simulate(g, arrivals, initial, sim, [&](const WorkloadState&, const SlotOutcome&, const WorkloadState& after) {
      while (next < checkpoints.size() && checkpoints[next] == after.slot) at[next++][r] = after.counts;
    });
  });

  RateProbeReport report;
  report.checkpoints = checkpoints;

  std::vector<std::int64_t> totals;
  totals.reserve(reference.size());
  for (const auto& c : reference) totals.push_back(total_of(c));
  std::sort(totals.begin(), totals.end());
  const auto covered = static_cast<std::size_t>(std::ceil(options.coverage * static_cast<double>(totals.size())));
  report.truncation = totals[std::min(totals.size(), std::max<std::size_t>(covered, 1)) - 1];
  const auto q = report.truncation;
  report.reference_coverage =
      static_cast<double>(std::upper_bound(totals.begin(), totals.end(), q) - totals.begin()) /
      static_cast<double>(totals.size());

  std::map<Counts, int> bin_of;
  const auto register_state = [&](const Counts& c) {
    if (total_of(c) <= q) bin_of.emplace(c, 0);
  };
  for (const auto& c : reference) register_state(c);
  for (const auto& column : at) {
    for (const auto& c : column) register_state(c);
  }
  int next_bin = 0;
  for (auto& [state, index] : bin_of) index = next_bin++;
  const int tail = next_bin;
  report.bins = tail + 1;
  const auto bin = [&](const Counts& c) {
    if (total_of(c) > q) return tail;
    return bin_of.at(c);
  };
  const auto histogram = [&](const std::vector<int>& indices) {
    std::vector<double> h(static_cast<std::size_t>(report.bins), 0.0);
    for (int b : indices) h[static_cast<std::size_t>(b)] += 1.0;
    for (double& x : h) x /= static_cast<double>(indices.size());
    return h;
  };

  std::vector<int> ref_bins;
  ref_bins.reserve(reference.size());
  for (const auto& c : reference) ref_bins.push_back(bin(c));
  const std::vector<double> ref_law = histogram(ref_bins);
  {
    const std::size_t half = ref_bins.size() / 2;
    report.self_tv = total_variation(histogram({ref_bins.begin(), ref_bins.begin() + static_cast<long>(half)}),
                                     histogram({ref_bins.begin() + static_cast<long>(half), ref_bins.end()}));
  }

  double widen = 1.0;
  if (options.reps < 5 * report.bins) {
    widen = std::sqrt(5.0 * report.bins / options.reps);
    report.warnings.push_back(fmt::format(
        "{} replications for {} bins: fewer than 5 per bin, error bars widened by {:.3g}",
        options.reps, report.bins, widen));
  }

  Xoshiro256 boot = streams[1];
  for (const auto& column : at) {
    std::vector<int> bins;
    bins.reserve(column.size());
    for (const auto& c : column) bins.push_back(bin(c));
    report.tv.push_back(total_variation(histogram(bins), ref_law));
    std::vector<double> resampled;
    std::vector<int> draw(bins.size());
    for (int b = 0; b < options.bootstrap; ++b) {
      for (auto& d : draw) d = bins[static_cast<std::size_t>(boot.uniform() * static_cast<double>(bins.size()))];
      resampled.push_back(total_variation(histogram(draw), ref_law));
    }
    double sd = 0.0;
    if (resampled.size() > 1) {
      const double mean = std::accumulate(resampled.begin(), resampled.end(), 0.0) / static_cast<double>(resampled.size());
      for (double x : resampled) sd += (x - mean) * (x - mean);
      sd = std::sqrt(sd / static_cast<double>(resampled.size() - 1));
    }
    report.tv_sd.push_back(sd * widen);
  }

  report.non_increasing = true;
  for (std::size_t i = 1; i < report.tv.size(); ++i) {
    const double band = 3.0 * std::hypot(report.tv_sd[i - 1], report.tv_sd[i]);
    if (report.tv[i] > report.tv[i - 1] + band) report.non_increasing = false;
  }
  return report;
}

}  // namespace aloha
