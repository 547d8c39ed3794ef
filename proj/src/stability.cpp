#include "aloha/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/core.h>

#include "aloha/fluid.hpp"
#include "aloha/parallel.hpp"
#include "aloha/rng.hpp"

namespace aloha {
namespace {

constexpr double kCriticalTol = 1e-12;

void check_size(const Vec& v, const Graph& g, const char* what) {
  if (v.size() != g.node_count()) {
    throw std::invalid_argument(
        fmt::format("{} has length {}, graph has {} nodes", what, v.size(), g.node_count()));
  }
}

bool near(double a, double b) { return std::abs(a - b) <= kCriticalTol * std::max(1.0, std::abs(b)); }

bool is_standard_cycle4(const Graph& g) { return g.node_count() == 4 && g == make_cycle(4); }

Vec ansatz_point(double a) {
  Vec y(4);
  y << a, a, 0.5 - a, 0.5 - a;
  return y;
}

void symmetrize_ansatz(Vec& y) {
  const double a = 0.5 * (y(0) + y(1));
  const double b = 0.5 * (y(2) + y(3));
  const double s = 2.0 * (a + b);
  y << a / s, a / s, b / s, b / s;
}

// Clamp at 0 and rescale onto the simplex; false when nothing positive is left.
bool project_simplex(Vec& y) {
  y = y.cwiseMax(0.0);
  const double s = y.sum();
  if (!(s > 0.0) || !std::isfinite(s)) return false;
  y /= s;
  return true;
}

bool lex_less(const Vec& a, const Vec& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return a(i) < b(i);
  }
  return false;
}

struct Candidate {
  bool ok = false;
  Vec y;
  double residual = 0.0;
  std::string origin;
};

Candidate newton(const Graph& g, double lambda, Vec y, const StablePointSearch& search,
                 std::string origin) {
  const auto alpha = [&](const Vec& x) { return projected_rhs(x, g, lambda); };
  Candidate c;
  c.origin = std::move(origin);
  if (!project_simplex(y)) return c;
  if (search.symmetric_ansatz) symmetrize_ansatz(y);
  const int k = g.node_count();
  Vec a = alpha(y);
  double r = a.norm();
  for (int it = 0; it < search.max_iterations && r > search.tol; ++it) {
    Mat aug(k + 1, k);
    aug.topRows(k) = numeric_jacobian(alpha, y);
    aug.row(k).setOnes();
    Vec rhs(k + 1);
    rhs.head(k) = -a;
    rhs(k) = 1.0 - y.sum();
    const Vec delta = aug.completeOrthogonalDecomposition().solve(rhs);
    if (!delta.allFinite()) return c;
    bool accepted = false;
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      Vec trial = y + t * delta;
      if (!project_simplex(trial)) continue;
      if (search.symmetric_ansatz) symmetrize_ansatz(trial);
      const Vec at = alpha(trial);
      const double rt = at.norm();
      if (rt < (1.0 - 1e-4 * t) * r) {
        y = std::move(trial);
        a = at;
        r = rt;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  c.ok = r <= search.tol;
  c.y = y;
  c.residual = r;
  return c;
}

}  // namespace

std::string to_string(LocalStability s) {
  switch (s) {
    case LocalStability::Stable: return "stable";
    case LocalStability::Unstable: return "unstable";
    case LocalStability::Critical: return "critical";
    case LocalStability::NotApplicable: return "not applicable";
  }
  return "unknown";
}

std::string to_string(PointClass c) {
  switch (c) {
    case PointClass::Attracting: return "attracting";
    case PointClass::Repelling: return "repelling";
    case PointClass::Saddle: return "saddle";
    case PointClass::Marginal: return "marginal";
  }
  return "unknown";
}

StabilityVerdict classify(const Graph& g, double lambda) {
  return classify(g, Vec::Constant(g.node_count(), lambda));
}

StabilityVerdict classify(const Graph& g, const Vec& lambda) {
  check_size(lambda, g, "rate vector");
  if ((lambda.array() <= 0.0).any() || !lambda.allFinite()) {
    throw std::invalid_argument("lambda_i > 0 required");
  }
  StabilityVerdict v;
  v.lambda = lambda.maxCoeff();
  const bool equal_rates = lambda.minCoeff() == lambda.maxCoeff();
  const SpectralReport report = spectral_report(g, v.lambda);
  v.symmetric = report.is_regular && equal_rates;
  v.neighborhood_size = report.neighborhood_size;
  v.spectral_gap = report.spectral_gap;
  v.global_threshold = report.global_threshold;
  v.fluid_stable = v.lambda < v.global_threshold && !near(v.lambda, v.global_threshold);

  if (near(v.lambda, v.global_threshold)) {
    v.regime = "critical - inconclusive";
  } else if (v.fluid_stable) {
    v.regime = "stable";
  } else {
    v.regime = "conjectured transient";
    v.notes.push_back("above e^-1/V transience is conjectural; only growth is reported");
  }

  if (v.symmetric) {
    v.local_threshold = report.local_threshold;
    const double lt = *report.local_threshold;
    if (near(v.lambda, lt)) {
      v.diagonal = LocalStability::Critical;
    } else {
      v.diagonal = v.lambda > lt ? LocalStability::Stable : LocalStability::Unstable;
    }
  } else {
    v.notes.push_back(fmt::format(
        "asymmetric case: stability bound max lambda_i < e^-1/V with V = max |V_i| = {}",
        v.neighborhood_size));
    if (!report.is_regular) v.notes.push_back(report.note);
  }
  return v;
}

Vec closed_form_rhs(const Vec& x, const Graph& g, double lambda) {
  check_size(x, g, "point");
  const int k = g.node_count();
  Vec out(k);
  for (int i = 0; i < k; ++i) {
    double exposure = 0.0;
    for (int j : g.neighborhood(i)) exposure += x(j);
    out(i) = lambda - x(i) * std::exp(-exposure);
  }
  return out;
}

Vec projected_rhs(const Vec& y, const Graph& g, double lambda) {
  check_size(y, g, "point");
  const double mass = y.sum();
  if (!(mass > 0.0)) throw std::invalid_argument("projected_rhs needs a point with positive mass");
  const Vec f = closed_form_rhs(phi(y, g), g, lambda);
  return (f - (y / mass) * f.sum()) / mass;
}

Mat numeric_jacobian(const VectorMap& f, const Vec& x, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  const Vec f0 = f(x);
  Mat jac(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = x(j) != 0.0 ? step * std::abs(x(j)) : step;
    Vec xp = x;
    Vec xm = x;
    xp(j) += h;
    xm(j) -= h;
    const Vec fp = f(xp);
    const Vec fm = f(xm);
    if (!fp.allFinite() || !fm.allFinite() || fp.size() != f0.size() || fm.size() != f0.size()) {
      throw std::runtime_error(fmt::format("map evaluation failed near coordinate {}", j + 1));
    }
    jac.col(j) = (fp - fm) / ((xp(j) - x(j)) + (x(j) - xm(j)));
  }
  return jac;
}

Mat assembled_diagonal_matrix(const Graph& g, double lambda) {
  const int k = g.node_count();
  const double mu0 = lambda - kInvE / g.regular_size();
  const Mat projector = Mat::Identity(k, k) - Mat::Constant(k, k, 1.0 / k);
  return projector * (diagonal_jacobian(g) - mu0 * Mat::Identity(k, k));
}

Mat analytic_projected_jacobian(const Graph& g, double lambda) {
  return static_cast<double>(g.node_count()) * assembled_diagonal_matrix(g, lambda);
}

std::vector<double> DiagonalSpectrum::all() const {
  std::vector<double> out{mu0};
  out.insert(out.end(), mu.begin(), mu.end());
  return out;
}

DiagonalSpectrum diagonal_spectrum(const Graph& g, double lambda) {
  if (!g.is_regular()) throw GraphError("diagonal spectrum is only defined for regular graphs");
  const SpectralReport report = spectral_report(g, lambda);
  DiagonalSpectrum s;
  s.mu0 = lambda - report.global_threshold;
  for (std::size_t i = 1; i < report.jacobian_eigenvalues.size(); ++i) {
    s.mu.push_back(report.jacobian_eigenvalues[i] - s.mu0);
  }
  std::sort(s.mu.begin(), s.mu.end(), std::greater<>());
  s.local_threshold = *report.local_threshold;
  s.locally_stable = s.mu.empty() || s.mu.front() < 0.0;
  return s;
}

Mat tangent_basis(int k) {
  // Helmert columns: (1, ..., 1, -j, 0, ..., 0) / sqrt(j (j + 1)).
  Mat q = Mat::Zero(k, std::max(0, k - 1));
  for (int j = 1; j < k; ++j) {
    const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
    for (int i = 0; i < j; ++i) q(i, j - 1) = 1.0 / norm;
    q(j, j - 1) = -static_cast<double>(j) / norm;
  }
  return q;
}

std::vector<std::complex<double>> tangent_eigenvalues(const Mat& jacobian) {
  const auto k = static_cast<int>(jacobian.rows());
  if (k < 2) return {};
  const Mat q = tangent_basis(k);
  const Mat restricted = q.transpose() * jacobian * q;
  Eigen::EigenSolver<Mat> solver(restricted, false);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigen-solver failed");
  std::vector<std::complex<double>> out(solver.eigenvalues().data(),
                                        solver.eigenvalues().data() + solver.eigenvalues().size());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
  });
  return out;
}

PointClass classify_eigenvalues(const std::vector<std::complex<double>>& eig, double band) {
  if (eig.empty()) return PointClass::Marginal;
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& e : eig) {
    hi = std::max(hi, e.real());
    lo = std::min(lo, e.real());
  }
  if (hi > -band && hi < band) return PointClass::Marginal;
  if (hi <= -band) return PointClass::Attracting;
  if (lo >= band) return PointClass::Repelling;
  return PointClass::Saddle;
}

std::vector<double> ansatz_roots(const Graph& g, double lambda) {
  if (!is_standard_cycle4(g)) throw std::invalid_argument("the symmetric ansatz needs cycle(4)");
  const auto f = [&](double a) { return projected_rhs(ansatz_point(a), g, lambda)(0); };

  std::vector<double> grid;
  constexpr int kLinear = 2000;
  constexpr int kLog = 2000;
  for (int i = 1; i < kLinear; ++i) grid.push_back(0.5 * i / kLinear);
  for (int i = 0; i <= kLog; ++i) {
    const double a = std::pow(10.0, -12.0 + 11.0 * i / kLog);  // 1e-12 .. 1e-1
    grid.push_back(a);
    grid.push_back(0.5 - a);
  }
  grid.push_back(0.25);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::erase_if(grid, [](double a) { return !(a > 0.0 && a < 0.5); });

  std::vector<double> roots;
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) values[i] = f(grid[i]);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (values[i] == 0.0) roots.push_back(grid[i]);
    if (i + 1 == grid.size() || !(values[i] * values[i + 1] < 0.0)) continue;
    double lo = grid[i];
    double hi = grid[i + 1];
    double flo = values[i];
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      const double fm = f(mid);
      if (fm == 0.0) {
        lo = hi = mid;
        break;
      }
      if ((fm < 0.0) == (flo < 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    roots.push_back(std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi);
  }
  return roots;
}

StablePointResult find_stable_points(const Graph& g, double lambda, const StablePointSearch& search) {
  if (!g.is_regular()) throw GraphError("stable-point search needs a regular graph");
  if (search.starts < 0) throw std::invalid_argument("starts must be >= 0");
  if (search.symmetric_ansatz && !is_standard_cycle4(g)) {
    throw std::invalid_argument("the symmetric ansatz needs cycle(4)");
  }
  const int k = g.node_count();
  const auto alpha = [&](const Vec& x) { return projected_rhs(x, g, lambda); };
  StablePointResult result;

  std::vector<Candidate> candidates;
  {
    Candidate diag;
    diag.ok = true;
    diag.y = Vec::Constant(k, 1.0 / k);
    diag.residual = alpha(diag.y).norm();
    diag.origin = "diagonal";
    candidates.push_back(diag);
  }
  if (is_standard_cycle4(g)) {
    for (double a : ansatz_roots(g, lambda)) {
      Candidate c;
      c.y = ansatz_point(a);
      c.residual = alpha(c.y).norm();
      c.ok = c.residual <= search.tol;
      c.origin = "ansatz";
      if (c.ok) {
        candidates.push_back(c);
      } else {
        result.notes.push_back(fmt::format("ansatz root a = {:.17g} has residual {:.3g}", a, c.residual));
      }
    }
  }

  const auto streams = substreams(search.seed, static_cast<std::size_t>(search.starts));
  std::vector<Candidate> found(static_cast<std::size_t>(search.starts));
  parallel_for(found.size(), [&](std::size_t s) {
    Xoshiro256 rng = streams[s];
    Vec start(k);
    for (int i = 0; i < k; ++i) start(i) = -std::log1p(-rng.uniform());  // Dirichlet(1, ..., 1)
    found[s] = newton(g, lambda, start, search, "multistart");
  });
  result.attempted_starts = search.starts;
  for (auto& c : found) {
    if (c.ok) {
      candidates.push_back(std::move(c));
    } else {
      ++result.dropped_starts;
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.residual != b.residual) return a.residual < b.residual;
    return lex_less(a.y, b.y);
  });
  for (const auto& c : candidates) {
    const bool duplicate = std::any_of(result.points.begin(), result.points.end(), [&](const StablePoint& p) {
      return (p.y - c.y).lpNorm<Eigen::Infinity>() < search.dedup_distance;
    });
    if (duplicate) continue;
    StablePoint p;
    p.y = c.y;
    p.residual = alpha(c.y).norm();
    if (p.residual > search.tol) continue;
    p.eigenvalues = tangent_eigenvalues(numeric_jacobian(alpha, c.y));
    p.kind = classify_eigenvalues(p.eigenvalues);
    p.origin = c.origin;
    result.points.push_back(std::move(p));
  }
  return result;
}

Vec stolyar_mu(const Vec& p, const Graph& g) {
  check_size(p, g, "vector p");
  const int k = g.node_count();
  Vec mu(k);
  for (int i = 0; i < k; ++i) {
    double exposure = 0.0;
    for (int j : g.neighborhood(i)) exposure += p(j);
    mu(i) = p(i) * std::exp(-exposure);
  }
  return mu;
}

StolyarResult stolyar_search(const Graph& g, const Vec& lambda, const StolyarSearch& search) {
  check_size(lambda, g, "rate vector");
  if ((lambda.array() <= 0.0).any()) throw std::invalid_argument("lambda_i > 0 required");
  const int k = g.node_count();
  const auto margin = [&](const Vec& p) { return (stolyar_mu(p, g) - lambda).minCoeff(); };

  const auto streams = substreams(search.seed, static_cast<std::size_t>(std::max(1, search.starts)));
  std::vector<StolyarWitness> best(streams.size());
  parallel_for(best.size(), [&](std::size_t s) {
    Xoshiro256 rng = streams[s];
    Vec p(k);
    if (s == 0) {
      p.setConstant(1.0 / g.max_neighborhood_size());
    } else {
      for (int i = 0; i < k; ++i) p(i) = rng.uniform();
    }
    double m = margin(p);
    double step = 0.25;
    for (int sweep = 0; sweep < search.sweeps && step > 1e-10; ++sweep) {
      bool improved = false;
      for (int i = 0; i < k; ++i) {
        for (double sign : {1.0, -1.0}) {
          Vec trial = p;
          trial(i) = std::max(0.0, trial(i) + sign * step);
          const double mt = margin(trial);
          if (mt > m) {
            p = std::move(trial);
            m = mt;
            improved = true;
          }
        }
      }
      // Random directions escape the kinks of the min.
      for (int r = 0; r < k; ++r) {
        Vec dir(k);
        for (int i = 0; i < k; ++i) dir(i) = 2.0 * rng.uniform() - 1.0;
        const Vec trial = (p + step * dir / dir.norm()).cwiseMax(0.0);
        const double mt = margin(trial);
        if (mt > m) {
          p = trial;
          m = mt;
          improved = true;
        }
      }
      if (!improved) step *= 0.5;
    }
    best[s] = {p, stolyar_mu(p, g), m};
  });

  StolyarResult result;
  result.best = *std::max_element(best.begin(), best.end(), [](const auto& a, const auto& b) {
    return a.margin < b.margin;
  });
  if (result.best.margin > 0.0) {
    result.witness = result.best;
    result.status = "witness found";
  } else {
    result.status = "not found within budget";
  }
  return result;
}

}  // namespace aloha
