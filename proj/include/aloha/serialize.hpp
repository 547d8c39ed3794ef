#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "aloha/experiments.hpp"
#include "aloha/fluid.hpp"
#include "aloha/graph.hpp"
#include "aloha/protocol.hpp"
#include "aloha/stability.hpp"

namespace aloha {

/// Insertion-ordered so that identical inputs dump to identical bytes.
using Json = nlohmann::ordered_json;

Json to_json(const Vec& v);
Json to_json(const Graph& g);  // 1-based closed neighborhoods
Json to_json(const SpectralReport& r);
Json to_json(const StabilityVerdict& v);
Json to_json(const DiagonalSpectrum& s);
Json to_json(const StablePointResult& r);
Json to_json(const StolyarResult& r);
Json to_json(const TraceSummary& s);
Json to_json(const FluidTrajectory& t, bool with_samples);
Json to_json(const ConvergenceRecord& r);
Json to_json(const SweepResult& r);
Json to_json(const BoundaryReport& r);
Json to_json(const DrainGrowthReport& r);
Json to_json(const RateProbeReport& r);

void write_stable_points_csv(std::ostream& out, const StablePointResult& r);
void write_sweep_csv(std::ostream& out, const SweepResult& r);
void write_convergence_csv(std::ostream& out, const ConvergenceRecord& r);
void write_boundary_csv(std::ostream& out, const BoundaryReport& r);
void write_drain_growth_csv(std::ostream& out, const DrainGrowthReport& r);
void write_rate_probe_csv(std::ostream& out, const RateProbeReport& r);
void write_spectral_csv(std::ostream& out, const SpectralReport& r);

}  // namespace aloha
