#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aloha/fluid.hpp"
#include "aloha/graph.hpp"
#include "aloha/rng.hpp"

namespace aloha {

using Counts = std::vector<std::int64_t>;

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WorkloadState {
  Counts counts;
  std::int64_t slot = 0;

  std::int64_t total() const;
  Vec as_vector() const;
  friend bool operator==(const WorkloadState&, const WorkloadState&) = default;
};

enum class ArrivalFamily { Poisson, Bernoulli, Deterministic, Zero };

/// Per-node arrival law with mean rates lambda_i users per slot. Draws are
/// independent across slots; across nodes they are independent unless
/// `broadcast` is set, in which case one uniform per slot drives every node.
struct ArrivalModel {
  ArrivalFamily family = ArrivalFamily::Poisson;
  std::vector<double> rates;
  bool broadcast = false;

  static ArrivalModel poisson(std::vector<double> rates, bool broadcast = false);
  static ArrivalModel bernoulli(std::vector<double> rates, bool broadcast = false);
  static ArrivalModel deterministic(std::vector<double> rates);
  static ArrivalModel zero(int node_count);

  /// Throws std::invalid_argument if the model is inconsistent with K nodes.
  void validate(int node_count) const;

  /// Arrivals A(n) for slot index n >= 1.
  Counts sample(std::int64_t slot, Xoshiro256& rng) const;

  /// P(A_1 = ... = A_K = 0) > 0.
  bool can_be_all_zero() const;
};

ArrivalFamily parse_arrival_family(std::string_view name);
std::string to_string(ArrivalFamily family);

struct SlotOutcome {
  Counts arrivals;
  Counts attempts;
  std::vector<std::uint8_t> successes;
  int graph_index = 0;
};

struct StepResult {
  WorkloadState next;
  SlotOutcome outcome;
};

/// One slot of the protocol: attempts N_i ~ Binomial(W_i, 1 / sum_{V_i} W),
/// success iff N_i = 1 and every other node of V_i is silent, then
/// W' = W + A - S.
StepResult step(const WorkloadState& w, const Graph& g, const ArrivalModel& arrivals,
                Xoshiro256& rng);

/// Draws the slot's graph from the mixture, then behaves as step().
StepResult step_mixture(const WorkloadState& w, const GraphMixture& mixture,
                        const ArrivalModel& arrivals, Xoshiro256& rng);

/// Exact number of attempts: Binomial(trials, p) by inversion.
std::int64_t sample_binomial(std::int64_t trials, double p, Xoshiro256& rng);

/// E[W(1) - W(0) | W(0) = x] = lambda - G(x).
Vec analytic_drift(const Vec& x, const Graph& g, const Vec& lambda);

struct SimulationOptions {
  std::int64_t slots = 1000;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  std::int64_t thinning = 1;   // record every thinning-th slot
  bool record = true;
  std::int64_t return_bound = -1;  // |W| <= bound counts as "returned"; -1 selects K
  std::optional<Xoshiro256> generator;  // when set, used instead of (seed, stream)
};

struct TraceRecord {
  WorkloadState state;  // state after the slot
  SlotOutcome outcome;
};

struct TraceSummary {
  std::int64_t slots_run = 0;
  double mean_total = 0.0;           // time average of |W(n)|, n = 1..slots
  std::vector<double> throughput;    // successes per slot at each node
  std::vector<double> arrival_rate;  // arrivals per slot at each node
  std::int64_t zero_visits = 0;
  std::int64_t bounded_visits = 0;
  std::int64_t returns = 0;          // entries into {|W| <= bound} from outside
  double mean_return_time = 0.0;     // mean excursion length outside the set
  WorkloadState final_state;
};

struct Trace {
  WorkloadState initial;
  std::vector<TraceRecord> records;
  std::int64_t thinning = 1;
  TraceSummary summary;
  bool aborted = false;
  std::string abort_reason;
};

using SlotObserver =
    std::function<void(const WorkloadState& before, const SlotOutcome& outcome,
                       const WorkloadState& after)>;

/// Runs `options.slots` slots from `initial`. Reproducible from
/// (seed, stream, configuration). Count overflow aborts the run and returns
/// the partial trace with `aborted` set.
Trace simulate(const GraphMixture& topology, const ArrivalModel& arrivals,
               const WorkloadState& initial, const SimulationOptions& options,
               const SlotObserver& observer = {});

/// Path t -> W(ceil(norm t)) / norm at the given times. Needs an unthinned
/// trace long enough for the largest time.
std::vector<Vec> scaled_path(const Trace& trace, double norm, std::span<const double> times);

void write_trace_jsonl(std::ostream& out, const Trace& trace);
void write_summary_csv(std::ostream& out, const TraceSummary& summary);

}  // namespace aloha
