#include "aloha/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>

#include <fmt/core.h>

#include "aloha/rng.hpp"

namespace aloha {
namespace {

int parse_int(std::string_view text, std::string_view what) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw GraphError(fmt::format("invalid {} '{}' in graph spec", what, text));
  }
  return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

// Hop distances from source; -1 marks unreachable nodes.
std::vector<int> bfs_distances(const std::vector<std::vector<int>>& nbhd, int source) {
  std::vector<int> dist(nbhd.size(), -1);
  std::queue<int> frontier;
  dist[static_cast<std::size_t>(source)] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : nbhd[static_cast<std::size_t>(u)]) {
      if (dist[static_cast<std::size_t>(v)] < 0) {
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
        frontier.push(v);
      }
    }
  }
  return dist;
}

}  // namespace

Graph::Graph(std::vector<std::vector<int>> nbhd) : nbhd_(std::move(nbhd)) {
  const int k = node_count();
  if (k < 1) throw GraphError("graph needs at least one node");
  for (int i = 0; i < k; ++i) {
    auto& v = nbhd_[static_cast<std::size_t>(i)];
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (int j : v) {
      if (j < 0 || j >= k) {
        throw GraphError(fmt::format("node {} lists out-of-range neighbor {}", i + 1, j + 1));
      }
    }
    if (!std::binary_search(v.begin(), v.end(), i)) {
      throw GraphError(fmt::format("node {} is missing from its own neighborhood", i + 1));
    }
  }
  for (int i = 0; i < k; ++i) {
    for (int j : nbhd_[static_cast<std::size_t>(i)]) {
      if (!contains(j, i)) {
        throw GraphError(
            fmt::format("asymmetric neighborhoods: {} lists {} but not conversely", i + 1, j + 1));
      }
    }
  }
  const auto dist = bfs_distances(nbhd_, 0);
  for (int i = 0; i < k; ++i) {
    if (dist[static_cast<std::size_t>(i)] < 0) {
      throw GraphError(fmt::format("graph is disconnected: node {} unreachable from node 1", i + 1));
    }
  }
}

Graph Graph::from_edges(int node_count, std::span<const std::pair<int, int>> edges) {
  if (node_count < 1) throw GraphError("graph needs at least one node");
  std::vector<std::vector<int>> nbhd(static_cast<std::size_t>(node_count));
  for (int i = 0; i < node_count; ++i) nbhd[static_cast<std::size_t>(i)].push_back(i);
  for (auto [a, b] : edges) {
    if (a < 0 || a >= node_count || b < 0 || b >= node_count) {
      throw GraphError(fmt::format("edge ({}, {}) out of range for K = {}", a + 1, b + 1, node_count));
    }
    if (a == b) throw GraphError(fmt::format("self-loop at node {}", a + 1));
    nbhd[static_cast<std::size_t>(a)].push_back(b);
    nbhd[static_cast<std::size_t>(b)].push_back(a);
  }
  return Graph(std::move(nbhd));
}

Graph Graph::from_neighborhoods(std::vector<std::vector<int>> neighborhoods) {
  return Graph(std::move(neighborhoods));
}

bool Graph::contains(int i, int j) const {
  const auto& v = nbhd_[static_cast<std::size_t>(i)];
  return std::binary_search(v.begin(), v.end(), j);
}

bool Graph::is_regular() const {
  const auto first = nbhd_.front().size();
  return std::all_of(nbhd_.begin(), nbhd_.end(), [&](const auto& v) { return v.size() == first; });
}

int Graph::regular_size() const {
  if (!is_regular()) throw GraphError("graph is not regular");
  return neighborhood_size(0);
}

int Graph::max_neighborhood_size() const {
  std::size_t best = 0;
  for (const auto& v : nbhd_) best = std::max(best, v.size());
  return static_cast<int>(best);
}

int Graph::diameter() const {
  int best = 0;
  for (int i = 0; i < node_count(); ++i) {
    const auto dist = bfs_distances(nbhd_, i);
    best = std::max(best, *std::max_element(dist.begin(), dist.end()));
  }
  return best;
}

std::vector<std::pair<int, int>> Graph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < node_count(); ++i) {
    for (int j : neighborhood(i)) {
      if (j > i) out.emplace_back(i, j);
    }
  }
  return out;
}

Graph make_cycle(int k) {
  if (k < 1) throw GraphError("cycle needs K >= 1");
  std::vector<std::pair<int, int>> edges;
  if (k == 2) edges.emplace_back(0, 1);
  if (k >= 3) {
    for (int i = 0; i < k; ++i) edges.emplace_back(i, (i + 1) % k);
  }
  return Graph::from_edges(k, edges);
}

Graph make_complete(int k) {
  if (k < 1) throw GraphError("complete graph needs K >= 1");
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) edges.emplace_back(i, j);
  }
  return Graph::from_edges(k, edges);
}

Graph make_torus(int rows, int cols) {
  if (rows < 1 || cols < 1) throw GraphError("torus needs positive dimensions");
  const int k = rows * cols;
  std::vector<std::pair<int, int>> edges;
  auto id = [cols](int r, int c) { return r * cols + c; };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int right = id(r, (c + 1) % cols);
      const int down = id((r + 1) % rows, c);
      if (right != id(r, c)) edges.emplace_back(id(r, c), right);
      if (down != id(r, c)) edges.emplace_back(id(r, c), down);
    }
  }
  return Graph::from_edges(k, edges);
}

Graph make_random_regular(int k, int degree, std::uint64_t seed) {
  if (k < 1 || degree < 0 || degree >= k) {
    throw GraphError(fmt::format("random regular graph needs 0 <= d < K (K={}, d={})", k, degree));
  }
  if ((static_cast<long>(k) * degree) % 2 != 0) {
    throw GraphError(fmt::format("K*d must be even (K={}, d={})", k, degree));
  }
  Xoshiro256 rng(seed);
  std::vector<int> points;
  for (int i = 0; i < k; ++i) {
    for (int d = 0; d < degree; ++d) points.push_back(i);
  }
  constexpr int kMaxAttempts = 100000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    // Fisher-Yates with our own generator so the result is platform independent.
    for (std::size_t i = points.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
      std::swap(points[i - 1], points[j]);
    }
    std::set<std::pair<int, int>> seen;
    bool simple = true;
    for (std::size_t p = 0; p + 1 < points.size(); p += 2) {
      auto a = points[p];
      auto b = points[p + 1];
      if (a == b) { simple = false; break; }
      if (a > b) std::swap(a, b);
      if (!seen.emplace(a, b).second) { simple = false; break; }
    }
    if (!simple) continue;
    std::vector<std::pair<int, int>> edges(seen.begin(), seen.end());
    try {
      return Graph::from_edges(k, edges);
    } catch (const GraphError&) {
      continue;  // disconnected draw
    }
  }
  throw GraphError(fmt::format("no simple connected {}-regular graph on {} nodes after {} draws",
                               degree, k, kMaxAttempts));
}

Graph read_edge_list(std::istream& in) {
  std::string line;
  int k = -1;
  std::vector<std::pair<int, int>> edges;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    if (k < 0) {
      if (!(fields >> k) || k < 1) {
        throw GraphError(fmt::format("edge list line {}: expected positive node count", line_no));
      }
      continue;
    }
    int a = 0;
    int b = 0;
    if (!(fields >> a >> b)) {
      throw GraphError(fmt::format("edge list line {}: expected 'i j'", line_no));
    }
    std::string extra;
    if (fields >> extra) {
      throw GraphError(fmt::format("edge list line {}: trailing token '{}'", line_no, extra));
    }
    if (a < 1 || a > k || b < 1 || b > k) {
      throw GraphError(fmt::format("edge list line {}: node out of range 1..{}", line_no, k));
    }
    edges.emplace_back(a - 1, b - 1);
  }
  if (k < 0) throw GraphError("edge list is empty");
  return Graph::from_edges(k, edges);
}

Graph load_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GraphError(fmt::format("cannot open edge list '{}'", path.string()));
  return read_edge_list(in);
}

void write_edge_list(std::ostream& out, const Graph& g) {
  out << g.node_count() << '\n';
  for (auto [a, b] : g.edges()) out << a + 1 << ' ' << b + 1 << '\n';
}

Graph parse_graph_spec(std::string_view spec, std::uint64_t default_seed) {
  const auto parts = split(spec, ':');
  const auto kind = parts.front();
  if (kind == "cycle" && parts.size() == 2) return make_cycle(parse_int(parts[1], "K"));
  if (kind == "complete" && parts.size() == 2) return make_complete(parse_int(parts[1], "K"));
  if (kind == "torus" && (parts.size() == 2 || parts.size() == 3)) {
    if (parts.size() == 3) return make_torus(parse_int(parts[1], "rows"), parse_int(parts[2], "cols"));
    const auto dims = split(parts[1], 'x');
    if (dims.size() != 2) throw GraphError(fmt::format("torus spec '{}' must be torus:RxC", spec));
    return make_torus(parse_int(dims[0], "rows"), parse_int(dims[1], "cols"));
  }
  if (kind == "random-regular" && (parts.size() == 3 || parts.size() == 4)) {
    std::uint64_t seed = default_seed;
    if (parts.size() == 4) seed = static_cast<std::uint64_t>(parse_int(parts[3], "seed"));
    return make_random_regular(parse_int(parts[1], "K"), parse_int(parts[2], "d"), seed);
  }
  if (kind == "cycle" || kind == "complete" || kind == "torus" || kind == "random-regular") {
    throw GraphError(fmt::format("malformed graph spec '{}'", spec));
  }
  const std::filesystem::path path{std::string(spec)};
  if (!std::filesystem::exists(path)) {
    throw GraphError(fmt::format("unknown graph kind or missing edge-list file '{}'", spec));
  }
  return load_edge_list(path);
}

Mat closed_neighborhood_matrix(const Graph& g) {
  const int k = g.node_count();
  Mat a = Mat::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j : g.neighborhood(i)) a(i, j) = 1.0;
  }
  return a;
}

SpectralReport spectral_report(const Graph& g, double lambda) {
  SpectralReport report;
  report.lambda = lambda;
  const int k = g.node_count();
  Eigen::SelfAdjointEigenSolver<Mat> solver(closed_neighborhood_matrix(g), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw GraphError("eigen-solver failed");
  const Vec& nu = solver.eigenvalues();  // ascending
  report.eigenvalues.assign(nu.data(), nu.data() + k);
  report.top_eigenvalue = nu(k - 1);
  report.spectral_gap = k > 1 ? nu(k - 1) - nu(k - 2) : 0.0;
  report.is_regular = g.is_regular();

  if (!report.is_regular) {
    report.neighborhood_size = g.max_neighborhood_size();
    report.global_threshold = kInvE / report.neighborhood_size;
    report.note = "not applicable (use max V_i bound): graph is irregular, global threshold "
                  "uses V = max |V_i| and no local threshold is defined";
    return report;
  }
  const double v = g.regular_size();
  report.neighborhood_size = static_cast<int>(v);
  report.jacobian_eigenvalues.push_back(0.0);
  for (int i = 1; i < k; ++i) {
    const double gap = v - nu(k - 1 - i);
    report.jacobian_eigenvalues.push_back(-kInvE * gap * gap / (v * v * v));
  }
  report.global_threshold = kInvE / v;
  const double gamma = report.spectral_gap;
  report.local_threshold = kInvE / v * (1.0 - gamma * gamma / (v * v));
  return report;
}

Mat diagonal_jacobian(const Graph& g) {
  if (!g.is_regular()) throw GraphError("diagonal Jacobian is only defined for regular graphs");
  const int k = g.node_count();
  const double v = g.regular_size();
  Mat d(k, k);
  for (int i = 0; i < k; ++i) {
    const auto vi = g.neighborhood(i);
    for (int j = 0; j < k; ++j) {
      const auto vj = g.neighborhood(j);
      std::vector<int> common;
      std::set_intersection(vi.begin(), vi.end(), vj.begin(), vj.end(), std::back_inserter(common));
      const double inter = static_cast<double>(common.size());
      if (i == j) {
        d(i, j) = -kInvE * (v - 1.0) / (v * v);
      } else if (g.contains(i, j)) {
        const double uni = 2.0 * v - inter;
        d(i, j) = kInvE * uni / (v * v * v);
      } else {
        d(i, j) = -kInvE * inter / (v * v * v);
      }
    }
  }
  return d;
}

}  // namespace aloha
