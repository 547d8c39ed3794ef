#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aloha/serialize.hpp"

namespace aloha::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Invalid configuration; `path` locates the offending field (e.g. "$.lambda[1]").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct RunConfig {
  std::string mode;
  std::string graph;
  std::vector<double> lambda;  // one value or one per node
  std::string arrivals = "poisson";
  bool broadcast = false;
  std::uint64_t seed = 1;
  std::string out = "aloha-out";
  std::string format = "json";

  // simulate
  std::int64_t slots = 1000;
  std::int64_t thinning = 1;
  std::vector<std::int64_t> initial;
  bool trace = false;

  // fluid / boundary
  std::vector<double> z0;
  double horizon = 0.0;  // 0 selects a per-mode default
  double step = 0.0;
  double sample_dt = 0.0;

  // stable-points
  int starts = 64;
  double tol = 1e-10;
  std::string ansatz = "auto";  // auto | on | off

  // sweep / convergence / rates
  std::vector<double> grid;
  std::vector<double> scales;
  std::vector<std::int64_t> checkpoints;
  int reps = 0;  // 0 selects a per-mode default
  std::int64_t initial_per_node = -1;  // -1 selects a per-mode default
  std::int64_t reference_slots = 2000000;
};

inline const std::vector<std::string>& modes() {
  static const std::vector<std::string> m{"spectral", "classify",     "simulate", "fluid",
                                          "stable-points", "sweep", "convergence", "boundary",
                                          "rates"};
  return m;
}

/// Applies a JSON object onto `base`. Unknown keys and wrong types are ConfigErrors.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});

/// Checks cross-field constraints; throws ConfigError.
void validate(const RunConfig& config);

/// Echo of the effective configuration (deterministic key order).
Json to_json(const RunConfig& config);

/// Parses argv (subcommand, flags, optional --config file; flags win) and
/// validates. Throws ConfigError, or returns std::nullopt after printing help.
std::optional<RunConfig> parse_config(int argc, const char* const* argv, std::ostream& out);

/// Runs one mode, writes `<out>/<mode>.<format>` plus `<out>/metadata.json`,
/// and prints a summary. Returns an exit code.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// parse_config + run with exit-code mapping.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace aloha::cli
