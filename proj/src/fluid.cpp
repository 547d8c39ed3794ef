#include "aloha/fluid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <fmt/core.h>
#include <json.hpp>

namespace aloha {
namespace {

double neighborhood_sum(const Vec& z, const Graph& g, int i) {
  double s = 0.0;
  for (int j : g.neighborhood(i)) s += z(j);
  return s;
}

void check_size(const Vec& z, const Graph& g, const char* what) {
  if (z.size() != g.node_count()) {
    throw std::invalid_argument(
        fmt::format("{} has length {}, graph has {} nodes", what, z.size(), g.node_count()));
  }
}

Vec clamp_nonnegative(Vec z) { return z.cwiseMax(0.0); }

}  // namespace

GraphMixture::GraphMixture(Graph g) : graphs{std::move(g)}, probs{1.0} {}

GraphMixture::GraphMixture(std::vector<Graph> gs, std::vector<double> ps)
    : graphs(std::move(gs)), probs(std::move(ps)) {
  if (graphs.empty()) throw std::invalid_argument("mixture needs at least one graph");
  if (graphs.size() != probs.size()) {
    throw std::invalid_argument("mixture needs one probability per graph");
  }
  const int k = graphs.front().node_count();
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    if (graphs[m].node_count() != k) {
      throw GraphError(fmt::format("mixture graph {} has {} nodes, expected {}", m,
                                   graphs[m].node_count(), k));
    }
    if (!(probs[m] >= 0.0)) throw std::invalid_argument("mixture probabilities must be nonnegative");
  }
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument(fmt::format("mixture probabilities sum to {}, not 1", total));
  }
}

Vec phi(const Vec& z, const Graph& g) {
  check_size(z, g, "state");
  const int k = g.node_count();
  Vec out = Vec::Zero(k);
  for (int i = 0; i < k; ++i) {
    if (z(i) > 0.0) out(i) = z(i) / neighborhood_sum(z, g, i);
  }
  return out;
}

Vec g_exact(const Vec& x, const Graph& g) {
  check_size(x, g, "workload");
  const int k = g.node_count();
  // Attempt probability 1/S_j, capped at 1 so that real-valued workloads
  // below one user stay in range.
  Vec attempt(k);
  for (int j = 0; j < k; ++j) {
    const double s = neighborhood_sum(x, g, j);
    attempt(j) = s > 0.0 ? std::min(1.0, 1.0 / s) : 0.0;
  }
  Vec out = Vec::Zero(k);
  for (int i = 0; i < k; ++i) {
    if (!(x(i) > 0.0)) continue;
    const double p = attempt(i);
    double value = x(i) * p * std::pow(1.0 - p, x(i) - 1.0);
    for (int j : g.neighborhood(i)) {
      if (j != i) value *= std::pow(1.0 - attempt(j), x(j));
    }
    out(i) = value;
  }
  return out;
}

Vec g_tilde(const Vec& z, const Graph& g) {
  const Vec f = phi(z, g);
  const int k = g.node_count();
  Vec out = Vec::Zero(k);
  for (int i = 0; i < k; ++i) {
    if (f(i) == 0.0) continue;
    double exposure = 0.0;
    for (int j : g.neighborhood(i)) exposure += f(j);
    out(i) = f(i) * std::exp(-exposure);
  }
  return out;
}

bool has_empty_neighborhood(const Vec& z, const Graph& g) {
  for (int i = 0; i < g.node_count(); ++i) {
    if (neighborhood_sum(z, g, i) <= 0.0) return true;
  }
  return false;
}

Vec fluid_rhs(const Vec& z, const Graph& g, const Vec& lambda) {
  check_size(lambda, g, "rate vector");
  return lambda - g_tilde(z, g);
}

Vec fluid_rhs_mixture(const Vec& z, std::span<const Graph> graphs, std::span<const double> probs,
                      const Vec& lambda) {
  if (graphs.size() != probs.size() || graphs.empty()) {
    throw std::invalid_argument("mixture needs one probability per graph");
  }
  Vec rhs = lambda;
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    if (graphs[m].node_count() != graphs.front().node_count()) {
      throw GraphError("mixture graphs have mismatched node sets");
    }
    check_size(lambda, graphs[m], "rate vector");
    if (probs[m] != 0.0) rhs -= probs[m] * g_tilde(z, graphs[m]);
  }
  return rhs;
}

Vec fluid_rhs(const Vec& z, const GraphMixture& mixture, const Vec& lambda) {
  if (mixture.single()) return fluid_rhs(z, mixture.graphs.front(), lambda);
  return fluid_rhs_mixture(z, mixture.graphs, mixture.probs, lambda);
}

Vec FluidTrajectory::at(double t) const {
  if (samples.empty()) throw FluidError("empty trajectory");
  if (t <= samples.front().t) return samples.front().z;
  if (t >= samples.back().t) return samples.back().z;
  const auto it = std::lower_bound(samples.begin(), samples.end(), t,
                                   [](const FluidSample& s, double v) { return s.t < v; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (t - lo.t) / (hi.t - lo.t);
  return (1.0 - w) * lo.z + w * hi.z;
}

FluidTrajectory integrate(const Vec& z0, const FluidParams& params) {
  const GraphMixture& topo = params.topology;
  const int k = topo.node_count();
  if (z0.size() != k) throw std::invalid_argument("initial state has wrong length");
  if (params.lambda.size() != k) throw std::invalid_argument("rate vector has wrong length");
  if ((z0.array() < 0.0).any()) throw std::invalid_argument("initial state must be nonnegative");
  if (!(z0.sum() > 0.0)) throw std::invalid_argument("initial state must have positive mass");
  if ((params.lambda.array() < 0.0).any()) throw std::invalid_argument("rates must be nonnegative");
  if (params.step < 0.0 || !(params.horizon > 0.0)) {
    throw std::invalid_argument("step must be positive and horizon > 0");
  }

  const double nominal = params.step > 0.0 ? params.step : 1e-3 / k;
  auto rhs = [&](const Vec& z) { return fluid_rhs(z, topo, params.lambda); };
  auto rk4 = [&](const Vec& z, double h) {
    const Vec k1 = rhs(z);
    const Vec k2 = rhs(clamp_nonnegative(z + 0.5 * h * k1));
    const Vec k3 = rhs(clamp_nonnegative(z + 0.5 * h * k2));
    const Vec k4 = rhs(clamp_nonnegative(z + h * k3));
    return clamp_nonnegative(z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  };
  auto empty_anywhere = [&](const Vec& z) {
    return std::any_of(topo.graphs.begin(), topo.graphs.end(),
                       [&](const Graph& g) { return has_empty_neighborhood(z, g); });
  };
  auto make_sample = [&](double t, const Vec& z) {
    return FluidSample{t, z, z.squaredNorm(), 2.0 * z.dot(rhs(z))};
  };

  FluidTrajectory traj;
  double t = 0.0;
  Vec z = z0;
  traj.samples.push_back(make_sample(t, z));
  traj.empty_neighborhood_seen = empty_anywhere(z);
  if (z.sum() <= params.zero_tol) {
    traj.end = FluidEnd::Drained;
    traj.drain_time = 0.0;
    return traj;
  }

  long sample_index = 1;
  auto next_sample = [&] { return static_cast<double>(sample_index) * params.sample_dt; };
  double h = nominal;
  // Where a closed neighborhood holds little mass, phi jumps within one step:
  // the field is scale invariant near such corners and an RK4 step overshoots,
  // leaving the clamp to pin entering coordinates at 0. Steps are therefore
  // limited to moving any neighborhood mass by about 1%.
  auto corner_cap = [&](const Vec& state) {
    const Vec r = rhs(state);
    double cap = std::numeric_limits<double>::infinity();
    for (const Graph& g : topo.graphs) {
      for (int i = 0; i < k; ++i) {
        double mass = 0.0;
        double rate = 0.0;
        for (int j : g.neighborhood(i)) {
          mass += state(j);
          rate += std::abs(r(j));
        }
        if (rate > 0.0) cap = std::min(cap, std::max(0.01 * mass / rate, 1e-9 * nominal));
      }
    }
    return cap;
  };
  while (t < params.horizon) {
    double hs = std::min({h, params.horizon - t, corner_cap(z)});
    bool lands_on_sample = false;
    if (params.sample_dt > 0.0 && next_sample() - t <= hs) {
      hs = next_sample() - t;
      lands_on_sample = true;
    }
    const Vec full = rk4(z, hs);
    const Vec half = rk4(rk4(z, 0.5 * hs), 0.5 * hs);
    const double err = (full - half).cwiseAbs().maxCoeff();
    if (err > params.doubling_tol) {
      h = 0.5 * hs;
      ++traj.step_halvings;
      if (h < params.min_step) {
        throw FluidError(fmt::format("step fell below {} at t = {} (disagreement {})",
                                     params.min_step, t, err));
      }
      continue;
    }

    const double prev_mass = z.sum();
    const double t_prev = t;
    z = half;
    t = lands_on_sample ? next_sample() : t + hs;
    if (hs == params.horizon - t_prev) t = params.horizon;
    if (!traj.empty_neighborhood_seen && empty_anywhere(z)) traj.empty_neighborhood_seen = true;

    const double mass = z.sum();
    if (mass <= params.zero_tol) {
      const double frac = (prev_mass - params.zero_tol) / std::max(prev_mass - mass, 1e-300);
      traj.drain_time = t_prev + std::clamp(frac, 0.0, 1.0) * hs;
      traj.end = FluidEnd::Drained;
      traj.end_time = *traj.drain_time;
      traj.samples.push_back(make_sample(t, z));
      return traj;
    }
    if (!traj.first_boundary_contact && z.minCoeff() <= 0.0) traj.first_boundary_contact = t;

    if (params.sample_dt <= 0.0) {
      traj.samples.push_back(make_sample(t, z));
    } else if (lands_on_sample) {
      traj.samples.push_back(make_sample(t, z));
      ++sample_index;
    }
    if (err < params.doubling_tol / 32.0 && h < nominal) h = std::min(2.0 * h, nominal);
  }
  if (traj.samples.back().t < t) traj.samples.push_back(make_sample(t, z));
  traj.end = FluidEnd::Horizon;
  traj.end_time = t;
  return traj;
}

LyapunovRate lyapunov_derivative(const Vec& z, const Graph& g, double lambda) {
  if (!g.is_regular()) {
    throw GraphError("Lyapunov inequality is only available in the symmetric (regular) case");
  }
  check_size(z, g, "state");
  if (!((z.array() > 0.0).all())) throw std::invalid_argument("state must be strictly positive");
  const double v = g.regular_size();
  const Vec gt = g_tilde(z, g);
  const double mass = z.sum();
  LyapunovRate out;
  out.value = 2.0 * (lambda * mass - z.dot(gt));
  out.bound = (lambda - kInvE / v) * mass;
  out.strict_bound = 2.0 * out.bound;
  return out;
}

GapEstimate estimate_gap_constant(const Graph& g, std::span<const Vec> directions,
                                  std::span<const double> scales) {
  GapEstimate est;
  est.per_scale.assign(scales.size(), 0.0);
  for (const Vec& d : directions) {
    check_size(d, g, "direction");
    for (std::size_t s = 0; s < scales.size(); ++s) {
      const Vec x = scales[s] * d;
      const Vec exact = g_exact(x, g);
      const Vec limit = g_tilde(x, g);
      for (int i = 0; i < g.node_count(); ++i) {
        if (x(i) < 2.0) continue;
        const double scaled = std::abs(exact(i) - limit(i)) * x(i);
        est.per_scale[s] = std::max(est.per_scale[s], scaled);
        est.constant = std::max(est.constant, scaled);
      }
    }
  }
  return est;
}

namespace {
const char* end_label(FluidEnd end) { return end == FluidEnd::Drained ? "drained" : "horizon"; }
}  // namespace

void write_trajectory_csv(std::ostream& out, const FluidTrajectory& traj) {
  const auto k = traj.samples.empty() ? 0 : traj.samples.front().z.size();
  out << 't';
  for (Eigen::Index i = 0; i < k; ++i) out << ",z" << i + 1;
  out << ",sum_sq,event\n";
  for (std::size_t s = 0; s < traj.samples.size(); ++s) {
    const auto& sample = traj.samples[s];
    out << fmt::format("{:.17g}", sample.t);
    for (Eigen::Index i = 0; i < k; ++i) out << fmt::format(",{:.17g}", sample.z(i));
    out << fmt::format(",{:.17g},", sample.sum_sq);
    if (s == 0) out << "start";
    if (s + 1 == traj.samples.size() && s != 0) out << end_label(traj.end);
    out << '\n';
  }
}

void write_trajectory_jsonl(std::ostream& out, const FluidTrajectory& traj) {
  for (std::size_t s = 0; s < traj.samples.size(); ++s) {
    const auto& sample = traj.samples[s];
    nlohmann::json line;
    line["t"] = sample.t;
    line["z"] = std::vector<double>(sample.z.data(), sample.z.data() + sample.z.size());
    line["sum_sq"] = sample.sum_sq;
    line["sum_sq_rate"] = sample.sum_sq_rate;
    line["event"] = s == 0 ? "start" : (s + 1 == traj.samples.size() ? end_label(traj.end) : "");
    out << line.dump() << '\n';
  }
}

}  // namespace aloha
