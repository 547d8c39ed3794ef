#include "aloha/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include <fmt/core.h>
#include <json.hpp>

namespace aloha {
namespace {

constexpr std::int64_t kMaxCount = std::numeric_limits<std::int64_t>::max();

// Poisson quantile at u by sequential search; exact up to rounding.
std::int64_t poisson_inverse(double mean, double u) {
  if (mean <= 0.0) return 0;
  double p = std::exp(-mean);
  double cdf = p;
  std::int64_t k = 0;
  while (u > cdf && p > 0.0) {
    ++k;
    p *= mean / static_cast<double>(k);
    cdf += p;
  }
  return k;
}

std::int64_t deterministic_count(double rate, std::int64_t slot) {
  const auto n = static_cast<double>(slot);
  return static_cast<std::int64_t>(std::floor(n * rate) - std::floor((n - 1.0) * rate));
}

std::int64_t add_checked(std::int64_t a, std::int64_t b) {
  if (b > 0 && a > kMaxCount - b) {
    throw SimulationError(fmt::format("user count overflow ({} + {})", a, b));
  }
  return a + b;
}

}  // namespace

std::int64_t WorkloadState::total() const {
  std::int64_t sum = 0;
  for (auto c : counts) sum = add_checked(sum, c);
  return sum;
}

Vec WorkloadState::as_vector() const {
  Vec v(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t i = 0; i < counts.size(); ++i) v(static_cast<Eigen::Index>(i)) = static_cast<double>(counts[i]);
  return v;
}

ArrivalModel ArrivalModel::poisson(std::vector<double> rates, bool broadcast) {
  return {ArrivalFamily::Poisson, std::move(rates), broadcast};
}

ArrivalModel ArrivalModel::bernoulli(std::vector<double> rates, bool broadcast) {
  return {ArrivalFamily::Bernoulli, std::move(rates), broadcast};
}

ArrivalModel ArrivalModel::deterministic(std::vector<double> rates) {
  return {ArrivalFamily::Deterministic, std::move(rates), false};
}

ArrivalModel ArrivalModel::zero(int node_count) {
  return {ArrivalFamily::Zero, std::vector<double>(static_cast<std::size_t>(node_count), 0.0), false};
}

void ArrivalModel::validate(int node_count) const {
  if (static_cast<int>(rates.size()) != node_count) {
    throw std::invalid_argument(
        fmt::format("arrival model has {} rates, graph has {} nodes", rates.size(), node_count));
  }
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const double r = rates[i];
    if (!std::isfinite(r) || r < 0.0) {
      throw std::invalid_argument(fmt::format("arrival rate {} at node {} is invalid", r, i + 1));
    }
    switch (family) {
      case ArrivalFamily::Zero:
        if (r != 0.0) {
          throw std::invalid_argument(fmt::format(
              "zero-arrival model cannot carry a positive rate ({} at node {})", r, i + 1));
        }
        break;
      case ArrivalFamily::Bernoulli:
        if (r > 1.0) throw std::invalid_argument("Bernoulli arrival rates must be <= 1");
        [[fallthrough]];
      case ArrivalFamily::Poisson:
      case ArrivalFamily::Deterministic:
        if (r <= 0.0) {
          throw std::invalid_argument(fmt::format("lambda_i > 0 required (node {} has {})", i + 1, r));
        }
        break;
    }
  }
}

Counts ArrivalModel::sample(std::int64_t slot, Xoshiro256& rng) const {
  Counts out(rates.size(), 0);
  switch (family) {
    case ArrivalFamily::Zero:
      break;
    case ArrivalFamily::Deterministic:
      for (std::size_t i = 0; i < rates.size(); ++i) out[i] = deterministic_count(rates[i], slot);
      break;
    case ArrivalFamily::Bernoulli:
      if (broadcast) {
        const double u = rng.uniform();
        for (std::size_t i = 0; i < rates.size(); ++i) out[i] = u < rates[i] ? 1 : 0;
      } else {
        for (std::size_t i = 0; i < rates.size(); ++i) out[i] = rng.uniform() < rates[i] ? 1 : 0;
      }
      break;
    case ArrivalFamily::Poisson:
      if (broadcast) {
        const double u = rng.uniform();
        for (std::size_t i = 0; i < rates.size(); ++i) out[i] = poisson_inverse(rates[i], u);
      } else {
        for (std::size_t i = 0; i < rates.size(); ++i) {
          if (rates[i] <= 30.0) {
            out[i] = poisson_inverse(rates[i], rng.uniform());
          } else {
            out[i] = std::poisson_distribution<std::int64_t>(rates[i])(rng);
          }
        }
      }
      break;
  }
  return out;
}

bool ArrivalModel::can_be_all_zero() const {
  switch (family) {
    case ArrivalFamily::Zero:
    case ArrivalFamily::Poisson:
      return true;
    case ArrivalFamily::Bernoulli:
      return std::all_of(rates.begin(), rates.end(), [](double r) { return r < 1.0; });
    case ArrivalFamily::Deterministic:
      return false;
  }
  return false;
}

ArrivalFamily parse_arrival_family(std::string_view name) {
  if (name == "poisson") return ArrivalFamily::Poisson;
  if (name == "bernoulli") return ArrivalFamily::Bernoulli;
  if (name == "deterministic") return ArrivalFamily::Deterministic;
  if (name == "zero") return ArrivalFamily::Zero;
  throw std::invalid_argument(fmt::format("unknown arrival family '{}'", name));
}

std::string to_string(ArrivalFamily family) {
  switch (family) {
    case ArrivalFamily::Poisson: return "poisson";
    case ArrivalFamily::Bernoulli: return "bernoulli";
    case ArrivalFamily::Deterministic: return "deterministic";
    case ArrivalFamily::Zero: return "zero";
  }
  return "unknown";
}

std::int64_t sample_binomial(std::int64_t trials, double p, Xoshiro256& rng) {
  if (trials <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  const double u = rng.uniform();
  const double odds = p / (1.0 - p);
  double pk = std::exp(static_cast<double>(trials) * std::log1p(-p));
  double cdf = pk;
  std::int64_t k = 0;
  while (u > cdf && k < trials) {
    pk *= static_cast<double>(trials - k) / static_cast<double>(k + 1) * odds;
    ++k;
    cdf += pk;
  }
  return k;
}

StepResult step(const WorkloadState& w, const Graph& g, const ArrivalModel& arrivals,
                Xoshiro256& rng) {
  const int k = g.node_count();
  if (static_cast<int>(w.counts.size()) != k) {
    throw std::invalid_argument("workload length does not match the graph");
  }
  StepResult result;
  SlotOutcome& out = result.outcome;
  out.attempts.assign(static_cast<std::size_t>(k), 0);
  out.successes.assign(static_cast<std::size_t>(k), 0);

  for (int i = 0; i < k; ++i) {
    const auto wi = w.counts[static_cast<std::size_t>(i)];
    if (wi == 0) continue;  // then N_i = 0 whatever the neighborhood holds
    std::int64_t load = 0;
    for (int j : g.neighborhood(i)) load = add_checked(load, w.counts[static_cast<std::size_t>(j)]);
    out.attempts[static_cast<std::size_t>(i)] =
        sample_binomial(wi, 1.0 / static_cast<double>(load), rng);
  }
  for (int i = 0; i < k; ++i) {
    if (out.attempts[static_cast<std::size_t>(i)] != 1) continue;
    bool alone = true;
    for (int j : g.neighborhood(i)) {
      if (j != i && out.attempts[static_cast<std::size_t>(j)] != 0) {
        alone = false;
        break;
      }
    }
    out.successes[static_cast<std::size_t>(i)] = alone ? 1 : 0;
  }

  result.next.slot = w.slot + 1;
  out.arrivals = arrivals.sample(result.next.slot, rng);
  result.next.counts.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    result.next.counts[i] = add_checked(w.counts[i], out.arrivals[i]) - out.successes[i];
  }
  return result;
}

StepResult step_mixture(const WorkloadState& w, const GraphMixture& mixture,
                        const ArrivalModel& arrivals, Xoshiro256& rng) {
  int index = 0;
  if (!mixture.single()) {
    const double u = rng.uniform();
    double cdf = 0.0;
    index = static_cast<int>(mixture.probs.size()) - 1;
    for (std::size_t m = 0; m < mixture.probs.size(); ++m) {
      cdf += mixture.probs[m];
      if (u < cdf) {
        index = static_cast<int>(m);
        break;
      }
    }
  }
  StepResult result = step(w, mixture.graphs[static_cast<std::size_t>(index)], arrivals, rng);
  result.outcome.graph_index = index;
  return result;
}

Vec analytic_drift(const Vec& x, const Graph& g, const Vec& lambda) {
  if (lambda.size() != g.node_count()) throw std::invalid_argument("rate vector has wrong length");
  return lambda - g_exact(x, g);
}

Trace simulate(const GraphMixture& topology, const ArrivalModel& arrivals,
               const WorkloadState& initial, const SimulationOptions& options,
               const SlotObserver& observer) {
  const int k = topology.node_count();
  arrivals.validate(k);
  if (static_cast<int>(initial.counts.size()) != k) {
    throw std::invalid_argument("initial state length does not match the graph");
  }
  if (std::any_of(initial.counts.begin(), initial.counts.end(), [](auto c) { return c < 0; })) {
    throw std::invalid_argument("initial state must be nonnegative");
  }
  if (options.slots < 1) throw std::invalid_argument("slots must be >= 1");
  if (options.thinning < 1) throw std::invalid_argument("thinning must be >= 1");

  Xoshiro256 rng = options.generator ? *options.generator : Xoshiro256(options.seed, options.stream);
  Trace trace;
  trace.initial = initial;
  trace.thinning = options.thinning;
  const std::int64_t bound = options.return_bound < 0 ? k : options.return_bound;

  TraceSummary& summary = trace.summary;
  summary.throughput.assign(static_cast<std::size_t>(k), 0.0);
  summary.arrival_rate.assign(static_cast<std::size_t>(k), 0.0);
  std::vector<std::int64_t> successes(static_cast<std::size_t>(k), 0);
  std::vector<std::int64_t> arrived(static_cast<std::size_t>(k), 0);
  long double total_sum = 0.0L;
  bool outside = initial.total() > bound;
  std::int64_t left_at = 0;
  std::int64_t excursion_sum = 0;

  WorkloadState w = initial;
  for (std::int64_t n = 1; n <= options.slots; ++n) {
    StepResult r;
    try {
      r = step_mixture(w, topology, arrivals, rng);
    } catch (const SimulationError& e) {
      trace.aborted = true;
      trace.abort_reason = fmt::format("slot {}: {}", n, e.what());
      break;
    }
    if (observer) observer(w, r.outcome, r.next);

    const std::int64_t total = r.next.total();
    total_sum += static_cast<long double>(total);
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
      successes[i] += r.outcome.successes[i];
      arrived[i] += r.outcome.arrivals[i];
    }
    if (total == 0) ++summary.zero_visits;
    if (total <= bound) {
      ++summary.bounded_visits;
      if (outside) {
        ++summary.returns;
        excursion_sum += n - left_at;
        outside = false;
      }
    } else if (!outside) {
      outside = true;
      left_at = n - 1;
    }
    summary.slots_run = n;
    if (options.record && n % options.thinning == 0) trace.records.push_back({r.next, r.outcome});
    w = std::move(r.next);
  }

  if (summary.slots_run > 0) {
    const auto slots = static_cast<double>(summary.slots_run);
    summary.mean_total = static_cast<double>(total_sum / static_cast<long double>(slots));
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
      summary.throughput[i] = static_cast<double>(successes[i]) / slots;
      summary.arrival_rate[i] = static_cast<double>(arrived[i]) / slots;
    }
  }
  if (summary.returns > 0) {
    summary.mean_return_time = static_cast<double>(excursion_sum) / static_cast<double>(summary.returns);
  }
  summary.final_state = w;
  return trace;
}

std::vector<Vec> scaled_path(const Trace& trace, double norm, std::span<const double> times) {
  if (!(norm > 0.0)) throw std::invalid_argument("scaling norm must be positive");
  if (trace.thinning != 1) throw std::invalid_argument("scaled_path needs an unthinned trace");
  std::vector<Vec> path;
  path.reserve(times.size());
  for (double t : times) {
    if (t < 0.0) throw std::invalid_argument("path times must be nonnegative");
    const double x = norm * t;
    const auto slot = static_cast<std::int64_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
    if (slot > static_cast<std::int64_t>(trace.records.size())) {
      throw std::invalid_argument(fmt::format(
          "trace has {} slots, time {} at norm {} needs {}", trace.records.size(), t, norm, slot));
    }
    const WorkloadState& w =
        slot == 0 ? trace.initial : trace.records[static_cast<std::size_t>(slot - 1)].state;
    path.push_back(w.as_vector() / norm);
  }
  return path;
}

void write_trace_jsonl(std::ostream& out, const Trace& trace) {
  for (const auto& rec : trace.records) {
    nlohmann::json line;
    line["n"] = rec.state.slot;
    line["W"] = rec.state.counts;
    line["N"] = rec.outcome.attempts;
    line["S"] = rec.outcome.successes;
    line["A"] = rec.outcome.arrivals;
    line["graph_index"] = rec.outcome.graph_index;
    out << line.dump() << '\n';
  }
}

void write_summary_csv(std::ostream& out, const TraceSummary& summary) {
  out << "node,throughput,arrival_rate\n";
  for (std::size_t i = 0; i < summary.throughput.size(); ++i) {
    out << fmt::format("{},{:.17g},{:.17g}\n", i + 1, summary.throughput[i], summary.arrival_rate[i]);
  }
  out << fmt::format("# slots_run={} mean_total={:.17g} zero_visits={} returns={} mean_return_time={:.17g}\n",
                     summary.slots_run, summary.mean_total, summary.zero_visits, summary.returns,
                     summary.mean_return_time);
}

}  // namespace aloha
