#include "aloha/serialize.hpp"

#include <ostream>

#include <fmt/core.h>

namespace aloha {
namespace {

Json optional_number(const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); }

Json eigen_list(const std::vector<std::complex<double>>& eig) {
  Json out = Json::array();
  for (const auto& e : eig) out.push_back({{"re", e.real()}, {"im", e.imag()}});
  return out;
}

std::string csv_number(double x) { return fmt::format("{:.17g}", x); }

std::string csv_vec(const Vec& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ' ';
    out += csv_number(v(i));
  }
  return out;
}

}  // namespace

Json to_json(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json to_json(const Graph& g) {
  Json nbhd = Json::array();
  for (int i = 0; i < g.node_count(); ++i) {
    Json row = Json::array();
    for (int j : g.neighborhood(i)) row.push_back(j + 1);
    nbhd.push_back(std::move(row));
  }
  return {{"nodes", g.node_count()}, {"regular", g.is_regular()}, {"neighborhoods", std::move(nbhd)}};
}

Json to_json(const SpectralReport& r) {
  return {{"lambda", r.lambda},
          {"eigenvalues", r.eigenvalues},
          {"top_eigenvalue", r.top_eigenvalue},
          {"spectral_gap", r.spectral_gap},
          {"is_regular", r.is_regular},
          {"neighborhood_size", r.neighborhood_size},
          {"jacobian_eigenvalues", r.jacobian_eigenvalues},
          {"global_threshold", r.global_threshold},
          {"local_threshold", optional_number(r.local_threshold)},
          {"note", r.note}};
}

Json to_json(const StabilityVerdict& v) {
  return {{"lambda", v.lambda},
          {"symmetric", v.symmetric},
          {"neighborhood_size", v.neighborhood_size},
          {"spectral_gap", v.spectral_gap},
          {"global_threshold", v.global_threshold},
          {"fluid_stable", v.fluid_stable},
          {"local_threshold", optional_number(v.local_threshold)},
          {"diagonal_locally_stable", to_string(v.diagonal)},
          {"regime", v.regime},
          {"notes", v.notes}};
}

Json to_json(const DiagonalSpectrum& s) {
  return {{"mu0", s.mu0},
          {"mu", s.mu},
          {"local_threshold", s.local_threshold},
          {"locally_stable", s.locally_stable}};
}

Json to_json(const StablePointResult& r) {
  Json points = Json::array();
  for (const auto& p : r.points) {
    points.push_back({{"y", to_json(p.y)},
                      {"residual", p.residual},
                      {"tangent_eigenvalues", eigen_list(p.eigenvalues)},
                      {"classification", to_string(p.kind)},
                      {"origin", p.origin}});
  }
  return {{"count", r.points.size()},
          {"points", std::move(points)},
          {"attempted_starts", r.attempted_starts},
          {"dropped_starts", r.dropped_starts},
          {"notes", r.notes}};
}

Json to_json(const StolyarResult& r) {
  return {{"status", r.status},
          {"witness_found", r.witness.has_value()},
          {"p", to_json(r.best.p)},
          {"mu", to_json(r.best.mu)},
          {"margin", r.best.margin}};
}

Json to_json(const TraceSummary& s) {
  return {{"slots_run", s.slots_run},
          {"mean_total", s.mean_total},
          {"throughput", s.throughput},
          {"arrival_rate", s.arrival_rate},
          {"zero_visits", s.zero_visits},
          {"bounded_visits", s.bounded_visits},
          {"returns", s.returns},
          {"mean_return_time", s.mean_return_time},
          {"final_state", s.final_state.counts}};
}

Json to_json(const FluidTrajectory& t, bool with_samples) {
  Json out = {{"end", t.end == FluidEnd::Drained ? "drained" : "horizon"},
              {"end_time", t.end_time},
              {"drain_time", optional_number(t.drain_time)},
              {"first_boundary_contact", optional_number(t.first_boundary_contact)},
              {"empty_neighborhood_seen", t.empty_neighborhood_seen},
              {"step_halvings", t.step_halvings},
              {"sample_count", t.samples.size()},
              {"final_state", to_json(t.samples.back().z)}};
  if (with_samples) {
    Json samples = Json::array();
    for (const auto& s : t.samples) {
      samples.push_back({{"t", s.t}, {"z", to_json(s.z)}, {"sum_sq", s.sum_sq}, {"sum_sq_rate", s.sum_sq_rate}});
    }
    out["samples"] = std::move(samples);
  }
  return out;
}

Json to_json(const ConvergenceRecord& r) {
  Json scales = Json::array();
  for (const auto& s : r.scales) {
    scales.push_back({{"scale", s.scale},
                      {"median", s.median},
                      {"replications", s.distances.size()},
                      {"flagged", s.flagged},
                      {"distances", s.distances}});
  }
  return {{"horizon", r.horizon}, {"strictly_decreasing", r.strictly_decreasing}, {"scales", std::move(scales)}};
}

Json to_json(const SweepResult& r) {
  Json points = Json::array();
  for (const auto& p : r.points) {
    points.push_back({{"lambda", p.lambda},
                      {"mean_total", p.mean_total},
                      {"slope", p.slope},
                      {"slope_se", p.slope_se},
                      {"fluid_slope", p.fluid_slope},
                      {"return_fraction", p.return_fraction},
                      {"zero_fraction", p.zero_fraction},
                      {"label", p.label}});
  }
  return {{"global_threshold", r.global_threshold},
          {"local_threshold", optional_number(r.local_threshold)},
          {"slots", r.slots},
          {"reps", r.reps},
          {"points", std::move(points)}};
}

Json to_json(const BoundaryReport& r) {
  Json trajectories = Json::array();
  for (const auto& t : r.trajectories) {
    Json envelope = Json::array();
    for (const auto& e : t.envelope) {
      envelope.push_back({{"epsilon", e.epsilon},
                          {"window_start", e.window_start},
                          {"window_end", e.window_end},
                          {"min_coordinate", e.min_coordinate},
                          {"b_hat", e.b_hat}});
    }
    trajectories.push_back({{"start", to_json(t.start)},
                            {"end_event", t.end_event},
                            {"end_time", t.end_time},
                            {"first_sample_time", t.first_sample_time},
                            {"min_at_first_sample", t.min_at_first_sample},
                            {"min_interior", t.min_interior},
                            {"positive", t.positive},
                            {"dominance_checks", t.dominance_checks},
                            {"dominance_violations", t.dominance_violations},
                            {"symmetry_spread", t.symmetry_spread},
                            {"empty_neighborhood_seen", t.empty_neighborhood_seen},
                            {"envelope", std::move(envelope)}});
  }
  return {{"lambda_star", r.lambda_star},
          {"K1", r.k1},
          {"K2", r.k2},
          {"c", r.c},
          {"a", r.a},
          {"diameter", r.diameter},
          {"all_positive", r.all_positive},
          {"dominance_ok", r.dominance_ok},
          {"trajectories", std::move(trajectories)}};
}

Json to_json(const DrainGrowthReport& r) {
  Json trajectories = Json::array();
  for (const auto& t : r.trajectories) {
    Json item = {{"start", to_json(t.start)}};
    if (r.subcritical) {
      item["drained"] = t.drained;
      item["drain_time"] = optional_number(t.drain_time);
      item["max_norm_rate"] = t.max_norm_rate;
      item["rate_ok"] = t.rate_ok;
    } else {
      item["growth"] = to_json(t.growth);
      item["increment_growth"] = to_json(t.increment_growth);
      item["relative_error"] = t.relative_error;
      item["increment_relative_error"] = t.increment_relative_error;
      item["phi_end"] = to_json(t.phi_end);
      item["phi_error"] = t.phi_error;
      item["growth_ok"] = t.growth_ok;
      item["phi_ok"] = t.phi_ok;
    }
    trajectories.push_back(std::move(item));
  }
  return {{"lambda", r.lambda},
          {"subcritical", r.subcritical},
          {"epsilon", r.epsilon},
          {"drain_bound", r.drain_bound},
          {"expected_rate", r.expected_rate},
          {"horizon", r.horizon},
          {"diagonal_locally_stable", r.diagonal_locally_stable},
          {"all_ok", r.all_ok},
          {"notes", r.notes},
          {"trajectories", std::move(trajectories)}};
}

Json to_json(const RateProbeReport& r) {
  return {{"checkpoints", r.checkpoints},
          {"tv", r.tv},
          {"tv_sd", r.tv_sd},
          {"truncation", r.truncation},
          {"bins", r.bins},
          {"reference_coverage", r.reference_coverage},
          {"self_tv", r.self_tv},
          {"non_increasing", r.non_increasing},
          {"warnings", r.warnings}};
}

void write_stable_points_csv(std::ostream& out, const StablePointResult& r) {
  out << "y,residual,max_real_eigenvalue,classification,origin\n";
  for (const auto& p : r.points) {
    const double top = p.eigenvalues.empty() ? 0.0 : p.eigenvalues.front().real();
    out << csv_vec(p.y) << ',' << csv_number(p.residual) << ',' << csv_number(top) << ','
        << to_string(p.kind) << ',' << p.origin << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << "lambda,mean_total,slope,slope_se,fluid_slope,return_fraction,zero_fraction,label\n";
  for (const auto& p : r.points) {
    out << csv_number(p.lambda) << ',' << csv_number(p.mean_total) << ',' << csv_number(p.slope) << ','
        << csv_number(p.slope_se) << ',' << csv_number(p.fluid_slope) << ','
        << csv_number(p.return_fraction) << ',' << csv_number(p.zero_fraction) << ",\"" << p.label
        << "\"\n";
  }
}

void write_convergence_csv(std::ostream& out, const ConvergenceRecord& r) {
  out << "scale,median,replications,flagged\n";
  for (const auto& s : r.scales) {
    out << csv_number(s.scale) << ',' << csv_number(s.median) << ',' << s.distances.size() << ','
        << s.flagged << '\n';
  }
}

void write_boundary_csv(std::ostream& out, const BoundaryReport& r) {
  out << "start,epsilon,window_start,window_end,min_coordinate,b_hat\n";
  for (const auto& t : r.trajectories) {
    for (const auto& e : t.envelope) {
      out << csv_vec(t.start) << ',' << csv_number(e.epsilon) << ',' << csv_number(e.window_start) << ','
          << csv_number(e.window_end) << ',' << csv_number(e.min_coordinate) << ','
          << csv_number(e.b_hat) << '\n';
    }
  }
}

void write_drain_growth_csv(std::ostream& out, const DrainGrowthReport& r) {
  if (r.subcritical) {
    out << "start,drained,drain_time,max_norm_rate,rate_ok\n";
    for (const auto& t : r.trajectories) {
      out << csv_vec(t.start) << ',' << t.drained << ','
          << (t.drain_time ? csv_number(*t.drain_time) : std::string()) << ','
          << csv_number(t.max_norm_rate) << ',' << t.rate_ok << '\n';
    }
  } else {
    out << "start,relative_error,increment_relative_error,phi_error,growth_ok,phi_ok\n";
    for (const auto& t : r.trajectories) {
      out << csv_vec(t.start) << ',' << csv_number(t.relative_error) << ','
          << csv_number(t.increment_relative_error) << ',' << csv_number(t.phi_error) << ','
          << t.growth_ok << ',' << t.phi_ok << '\n';
    }
  }
}

void write_rate_probe_csv(std::ostream& out, const RateProbeReport& r) {
  out << "checkpoint,tv,tv_sd\n";
  for (std::size_t i = 0; i < r.checkpoints.size(); ++i) {
    out << r.checkpoints[i] << ',' << csv_number(r.tv[i]) << ',' << csv_number(r.tv_sd[i]) << '\n';
  }
}

void write_spectral_csv(std::ostream& out, const SpectralReport& r) {
  out << "index,nu,eta\n";
  for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) {
    out << i + 1 << ',' << csv_number(r.eigenvalues[i]) << ',';
    if (i < r.jacobian_eigenvalues.size()) out << csv_number(r.jacobian_eigenvalues[i]);
    out << '\n';
  }
}

}  // namespace aloha
