#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aloha/fluid.hpp"
#include "aloha/graph.hpp"
#include "aloha/protocol.hpp"

namespace aloha {

// ---------------------------------------------------------------- fluid limit

struct ConvergenceOptions {
  double lambda = 0.1;
  Vec direction;  // interior point, rescaled to |direction| = 1; empty selects 1/K
  std::vector<double> scales{1e2, 1e3, 1e4};
  double horizon = 5.0;
  double grid_dt = 0.05;
  int reps = 20;
  std::uint64_t seed = 1;
  ArrivalFamily family = ArrivalFamily::Poisson;
};

struct ScaleRecord {
  double scale = 0.0;
  std::vector<double> distances;  // per replication: max over the grid of the L1 gap
  double median = 0.0;
  int flagged = 0;  // replications whose scaled path touched the boundary before T
};

struct ConvergenceRecord {
  std::vector<ScaleRecord> scales;
  double horizon = 0.0;
  bool strictly_decreasing = false;  // medians
};

/// Scaled simulation paths W(ceil(s t)) / s against the fluid ODE started at
/// the same normalized point.
ConvergenceRecord fluid_limit_convergence(const Graph& g, const ConvergenceOptions& options);

// --------------------------------------------------------------------- sweep

struct SweepOptions {
  std::vector<double> grid;
  std::int64_t slots = 100000;
  int reps = 4;
  std::uint64_t seed = 1;
  std::int64_t initial_per_node = 0;
  ArrivalFamily family = ArrivalFamily::Poisson;
};

struct SweepPoint {
  double lambda = 0.0;
  double mean_total = 0.0;        // time average of |W|, averaged over reps
  double slope = 0.0;             // (|W(n)| - |W(0)|) / n, averaged over reps
  double slope_se = 0.0;
  double fluid_slope = 0.0;       // K (lambda - e^-1/V), the diagonal growth rate
  double return_fraction = 0.0;   // reps visiting {|W| <= K} in the second half of the run
  double zero_fraction = 0.0;     // fraction of slots with W = 0
  std::string label;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  double global_threshold = 0.0;
  std::optional<double> local_threshold;
  std::int64_t slots = 0;
  int reps = 0;
};

SweepResult lambda_sweep(const Graph& g, const SweepOptions& options);

// ---------------------------------------------------------- boundary repulsion

struct BoundaryOptions {
  Vec lambda;
  std::vector<Vec> starts;  // empty selects the extreme points e_1..e_K
  double horizon = 10.0;
  double sample_dt = 1e-3;
  double step = 1e-3;
  std::vector<double> epsilons{0.02, 0.05, 0.1, 0.2};
};

struct EnvelopePoint {
  double epsilon = 0.0;
  double window_start = 0.0;  // c * epsilon
  double window_end = 0.0;    // tau_{1 - epsilon}, or the end of the run
  double min_coordinate = 0.0;
  double b_hat = 0.0;         // min_coordinate / epsilon
};

struct BoundaryTrajectory {
  Vec start;
  std::string end_event;  // "drained" or "horizon"
  double end_time = 0.0;
  double first_sample_time = 0.0;
  double min_at_first_sample = 0.0;
  double min_interior = 0.0;  // min_i z_i over sampled t in (0, end)
  bool positive = false;
  int dominance_checks = 0;
  int dominance_violations = 0;  // z_i > K1 z_j on an edge but z_j' <= K2
  double symmetry_spread = 0.0;  // max over samples of max_i z_i - min_i z_i
  bool empty_neighborhood_seen = false;
  std::vector<EnvelopePoint> envelope;
};

struct BoundaryReport {
  double lambda_star = 0.0;
  double k1 = 0.0;  // 2 / lambda_* - 1
  double k2 = 0.0;  // lambda_* / 2
  double c = 0.0;   // 1 / (K (1 - lambda_*))
  double a = 0.0;   // K2 (K1 - 1) / (K1^D - 1)
  int diameter = 0;
  std::vector<BoundaryTrajectory> trajectories;
  bool all_positive = false;
  bool dominance_ok = false;
};

BoundaryReport boundary_repulsion_check(const Graph& g, const BoundaryOptions& options);

// --------------------------------------------------------------- drain/growth

struct DrainGrowthOptions {
  double lambda = 0.1;
  std::vector<Vec> starts;
  double horizon = 0.0;  // 0 selects 2/eps + 10 below threshold, 1000 above
  double step = 0.01;
  double sample_dt = 0.05;
  double zero_tol = 1e-3;
  double rate_tol = 1e-3;
  double relative_tol = 0.01;
  double phi_tol = 1e-3;
};

struct DrainTrajectory {
  Vec start;
  // Below threshold.
  bool drained = false;
  std::optional<double> drain_time;
  double max_norm_rate = 0.0;  // max sampled d/dt sqrt(sum z^2) with z > 0
  bool rate_ok = false;
  // Above threshold.
  Vec growth;            // z(T) / T
  Vec increment_growth;  // (z(T) - z(0)) / T
  double relative_error = 0.0;            // max_i |z_i(T)/T - r| / r
  double increment_relative_error = 0.0;  // same for the increment
  Vec phi_end;
  double phi_error = 0.0;  // max_i |phi_i(z(T)) - 1/V|
  bool growth_ok = false;
  bool phi_ok = false;
};

struct DrainGrowthReport {
  double lambda = 0.0;
  bool subcritical = false;
  double epsilon = 0.0;        // e^-1/V - lambda
  double drain_bound = 0.0;    // 2 / epsilon + 10
  double expected_rate = 0.0;  // lambda - e^-1/V
  double horizon = 0.0;
  bool diagonal_locally_stable = false;
  std::vector<DrainTrajectory> trajectories;
  bool all_ok = false;
  std::vector<std::string> notes;
};

DrainGrowthReport drain_growth_check(const Graph& g, const DrainGrowthOptions& options);

// ----------------------------------------------------------- ergodicity probe

struct RateProbeOptions {
  std::vector<std::int64_t> checkpoints{100, 1000, 10000};
  int reps = 4000;
  std::uint64_t seed = 1;
  std::int64_t initial_per_node = 10;
  std::int64_t reference_slots = 2000000;
  std::int64_t burn_in = 20000;
  std::int64_t reference_thinning = 10;
  int bootstrap = 200;
  double coverage = 0.99;
};

struct RateProbeReport {
  std::vector<std::int64_t> checkpoints;
  std::vector<double> tv;
  std::vector<double> tv_sd;  // bootstrap standard deviation
  std::int64_t truncation = 0;  // Q: exact states with |W| <= Q, one tail bin
  int bins = 0;
  double reference_coverage = 0.0;
  double self_tv = 0.0;  // first vs second half of the reference chain
  bool non_increasing = false;  // within 3 combined standard deviations
  std::vector<std::string> warnings;
};

/// Needs lambda < e^-1/V and arrivals that can all be zero in a slot.
RateProbeReport convergence_rate_probe(const Graph& g, const ArrivalModel& arrivals,
                                       const RateProbeOptions& options);

/// Median of a nonempty sample (mean of the middle pair for even sizes).
double median(std::vector<double> values);

}  // namespace aloha
