#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace aloha {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInvE = 0.36787944117144233;  // e^-1

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Finite connected interaction graph stored as closed neighborhoods.
///
/// Nodes are 0-based. Every neighborhood V_i contains i itself, the relation
/// j in V_i <=> i in V_j holds, and the open graph is connected; all three
/// are checked on construction.
class Graph {
 public:
  /// Builds from undirected open edges. Duplicates are collapsed; self-loops
  /// are rejected because self-inclusion is added internally.
  static Graph from_edges(int node_count, std::span<const std::pair<int, int>> edges);

  /// Builds from explicit closed neighborhoods (validated, not repaired).
  static Graph from_neighborhoods(std::vector<std::vector<int>> neighborhoods);

  int node_count() const { return static_cast<int>(nbhd_.size()); }

  /// Closed neighborhood V_i, sorted ascending.
  std::span<const int> neighborhood(int i) const { return nbhd_[static_cast<std::size_t>(i)]; }

  /// |V_i|, counting i itself.
  int neighborhood_size(int i) const { return static_cast<int>(nbhd_[static_cast<std::size_t>(i)].size()); }

  bool contains(int i, int j) const;
  bool is_regular() const;

  /// Common |V_i| of a regular graph; throws GraphError otherwise.
  int regular_size() const;
  int max_neighborhood_size() const;

  /// Longest shortest-path distance in the open graph.
  int diameter() const;

  std::vector<std::pair<int, int>> edges() const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  explicit Graph(std::vector<std::vector<int>> nbhd);
  std::vector<std::vector<int>> nbhd_;
};

Graph make_cycle(int k);
Graph make_complete(int k);
Graph make_torus(int rows, int cols);

/// Pairing model with rejection until the multigraph is simple and connected.
Graph make_random_regular(int k, int degree, std::uint64_t seed);

/// Edge-list text: first line K, then one `i j` pair per line (1-based).
Graph read_edge_list(std::istream& in);
Graph load_edge_list(const std::filesystem::path& path);
void write_edge_list(std::ostream& out, const Graph& g);

/// Parses `cycle:K`, `complete:K`, `torus:RxC`, `random-regular:K:d[:seed]`
/// or a path to an edge-list file.
Graph parse_graph_spec(std::string_view spec, std::uint64_t default_seed = 1);

/// K x K 0/1 matrix with A_ij = 1 iff j in V_i (diagonal included), so that
/// (A^2)_ij = |V_i intersect V_j|.
Mat closed_neighborhood_matrix(const Graph& g);

struct SpectralReport {
  double lambda = 0.0;
  std::vector<double> eigenvalues;  // nu_1 <= ... <= nu_K
  double top_eigenvalue = 0.0;
  double spectral_gap = 0.0;  // nu_K - nu_{K-1}
  bool is_regular = false;
  int neighborhood_size = 0;  // V when regular, max |V_i| otherwise
  std::vector<double> jacobian_eigenvalues;  // eta_0 = 0, eta_1, ..., eta_{K-1}
  double global_threshold = 0.0;             // e^-1 / V
  std::optional<double> local_threshold;     // e^-1/V (1 - gamma^2/V^2), regular only
  std::string note;
};

SpectralReport spectral_report(const Graph& g, double lambda);

/// D(F o phi)(1) for a regular graph, entry by entry from the neighborhood
/// unions and intersections. Throws GraphError for irregular graphs.
Mat diagonal_jacobian(const Graph& g);

}  // namespace aloha
