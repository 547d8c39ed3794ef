#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aloha/graph.hpp"

namespace aloha {

class FluidError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Graphs on a common node set with selection probabilities. A single graph
/// converts implicitly with probability 1.
struct GraphMixture {
  std::vector<Graph> graphs;
  std::vector<double> probs;

  GraphMixture(Graph g);  // NOLINT(google-explicit-constructor)
  GraphMixture(std::vector<Graph> graphs, std::vector<double> probs);

  int node_count() const { return graphs.front().node_count(); }
  bool single() const { return graphs.size() == 1; }
};

/// phi_i(z) = z_i / sum_{j in V_i} z_j, with phi_i = 0 when z_i = 0.
Vec phi(const Vec& z, const Graph& g);

/// Exact one-slot success probability G_i(x) for a workload x.
Vec g_exact(const Vec& x, const Graph& g);

/// Large-workload limit G~_i(z) = phi_i exp(-sum_{j in V_i} phi_j).
Vec g_tilde(const Vec& z, const Graph& g);

/// True when some node has an entirely empty closed neighborhood.
bool has_empty_neighborhood(const Vec& z, const Graph& g);

/// z' = lambda - G~(z).
Vec fluid_rhs(const Vec& z, const Graph& g, const Vec& lambda);

/// z' = lambda - sum_k p_k G~^k(z).
Vec fluid_rhs_mixture(const Vec& z, std::span<const Graph> graphs, std::span<const double> probs,
                      const Vec& lambda);
Vec fluid_rhs(const Vec& z, const GraphMixture& mixture, const Vec& lambda);

struct FluidParams {
  GraphMixture topology;
  Vec lambda;
  double step = 0.0;  // 0 selects 1e-3 / K
  double min_step = 1e-12;
  double doubling_tol = 1e-6;
  double zero_tol = 1e-6;
  double horizon = 100.0;
  double sample_dt = 0.0;  // 0 records every accepted step
};

enum class FluidEnd { Drained, Horizon };

struct FluidSample {
  double t = 0.0;
  Vec z;
  double sum_sq = 0.0;       // sum z_i^2
  double sum_sq_rate = 0.0;  // d/dt sum z_i^2 = 2 z . rhs(z)
};

struct FluidTrajectory {
  std::vector<FluidSample> samples;
  FluidEnd end = FluidEnd::Horizon;
  double end_time = 0.0;
  std::optional<double> drain_time;
  std::optional<double> first_boundary_contact;  // first t > 0 with some z_i = 0
  bool empty_neighborhood_seen = false;
  int step_halvings = 0;

  /// Linear interpolation between recorded samples.
  Vec at(double t) const;
};

/// Classical RK4 with step-doubling control and clamping at 0. Stops at the
/// first of |z| <= zero_tol or t = horizon.
FluidTrajectory integrate(const Vec& z0, const FluidParams& params);

struct LyapunovRate {
  double value = 0.0;        // d/dt sum z_i^2
  double bound = 0.0;        // (lambda - e^-1/V) sum z_i
  double strict_bound = 0.0; // 2 (lambda - e^-1/V) sum z_i, valid for every lambda
};

/// Symmetric case only (regular graph, scalar lambda).
LyapunovRate lyapunov_derivative(const Vec& z, const Graph& g, double lambda);

struct GapEstimate {
  double constant = 0.0;           // max of |G_i - G~_i| * x_i over all samples with x_i >= 2
  std::vector<double> per_scale;   // same maximum restricted to each scale
};

/// Empirical constant C in |G_i(x) - G~_i(x)| <= C / x_i along rays t * direction.
GapEstimate estimate_gap_constant(const Graph& g, std::span<const Vec> directions,
                                  std::span<const double> scales);

void write_trajectory_csv(std::ostream& out, const FluidTrajectory& traj);
void write_trajectory_jsonl(std::ostream& out, const FluidTrajectory& traj);

}  // namespace aloha
