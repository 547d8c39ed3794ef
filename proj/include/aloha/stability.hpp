#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aloha/graph.hpp"

namespace aloha {

enum class LocalStability { Stable, Unstable, Critical, NotApplicable };
std::string to_string(LocalStability s);

struct StabilityVerdict {
  double lambda = 0.0;  // max_i lambda_i
  bool symmetric = true;  // regular graph with equal rates
  int neighborhood_size = 0;  // V, or max |V_i| when irregular
  double spectral_gap = 0.0;
  double global_threshold = 0.0;  // e^-1 / V
  bool fluid_stable = false;      // lambda < global_threshold
  std::optional<double> local_threshold;
  LocalStability diagonal = LocalStability::NotApplicable;
  std::string regime;  // "stable", "critical - inconclusive" or "conjectured transient"
  std::vector<std::string> notes;
};

StabilityVerdict classify(const Graph& g, double lambda);

/// Inhomogeneous rates or irregular graphs: stable if max lambda_i < e^-1 / max |V_i|.
StabilityVerdict classify(const Graph& g, const Vec& lambda);

/// F_i(x) = lambda - x_i exp(-sum_{j in V_i} x_j).
Vec closed_form_rhs(const Vec& x, const Graph& g, double lambda);

/// Dynamics of y = z / |z| on the simplex:
/// alpha(y) = (F(phi(y)) - psi(y) sum_k F_k(phi(y))) / |y| with psi(y) = y / |y|.
/// On the simplex this is F(phi(y)) - y sum_k F_k(phi(y)); the division keeps
/// the map homogeneous off it, which fixes its Jacobian in every direction.
Vec projected_rhs(const Vec& y, const Graph& g, double lambda);

using VectorMap = std::function<Vec(const Vec&)>;

/// Centered differences with per-coordinate step `step * |x_j|` (`step` when x_j = 0).
Mat numeric_jacobian(const VectorMap& f, const Vec& x, double step = 1e-5);

/// (E - J/K)(D(F o phi)(1) - mu0 E) with mu0 = lambda - e^-1/V. Its eigenvalues
/// are 0 on the vector 1 and mu_1, ..., mu_{K-1} on its complement.
Mat assembled_diagonal_matrix(const Graph& g, double lambda);

/// Exact Jacobian of projected_rhs at y0 = 1/K. By homogeneity it is K times
/// the assembled matrix.
Mat analytic_projected_jacobian(const Graph& g, double lambda);

struct DiagonalSpectrum {
  double mu0 = 0.0;         // lambda - e^-1/V, growth rate along the diagonal
  std::vector<double> mu;   // mu_1 >= ... >= mu_{K-1}
  double local_threshold = 0.0;
  bool locally_stable = false;  // max_{i>=1} mu_i < 0

  /// mu0 followed by mu_1..mu_{K-1}.
  std::vector<double> all() const;
};

DiagonalSpectrum diagonal_spectrum(const Graph& g, double lambda);

/// Orthonormal basis of the complement of the vector 1 (K x (K-1)).
Mat tangent_basis(int k);

/// Eigenvalues of J restricted to the tangent space of the simplex, sorted by
/// decreasing real part.
std::vector<std::complex<double>> tangent_eigenvalues(const Mat& jacobian);

enum class PointClass { Attracting, Repelling, Saddle, Marginal };
std::string to_string(PointClass c);

/// Marginal when the largest real part lies in (-band, band).
PointClass classify_eigenvalues(const std::vector<std::complex<double>>& eig, double band = 1e-8);

struct StablePoint {
  Vec y;
  double residual = 0.0;  // ||alpha(y)||_2
  std::vector<std::complex<double>> eigenvalues;
  PointClass kind = PointClass::Marginal;
  std::string origin;  // "diagonal", "ansatz" or "multistart"
};

struct StablePointSearch {
  int starts = 64;
  std::uint64_t seed = 1;
  double tol = 1e-10;
  bool symmetric_ansatz = false;  // cycle(4) only: restrict to y1 = y2, y3 = y4
  int max_iterations = 200;
  double dedup_distance = 1e-6;
};

struct StablePointResult {
  std::vector<StablePoint> points;
  int attempted_starts = 0;
  int dropped_starts = 0;  // starts whose Newton iteration failed to reach tol
  std::vector<std::string> notes;
};

/// Fixed points of projected_rhs from random simplex starts, the diagonal and,
/// for cycle(4), the bisected roots of the one-dimensional ansatz.
StablePointResult find_stable_points(const Graph& g, double lambda,
                                     const StablePointSearch& search = {});

/// Roots of alpha_1 on the line y = (a, a, 1/2 - a, 1/2 - a), a in (0, 1/2).
/// Requires g to be cycle(4) with its standard labeling.
std::vector<double> ansatz_roots(const Graph& g, double lambda);

struct StolyarWitness {
  Vec p;
  Vec mu;  // mu_i = p_i exp(-sum_{j in V_i} p_j)
  double margin = 0.0;  // min_i (mu_i - lambda_i)
};

struct StolyarSearch {
  int starts = 16;
  int sweeps = 400;
  std::uint64_t seed = 1;
};

struct StolyarResult {
  std::optional<StolyarWitness> witness;
  StolyarWitness best;  // best point seen, valid or not
  std::string status;   // "witness found" or "not found within budget"
};

Vec stolyar_mu(const Vec& p, const Graph& g);

/// Heuristic maximization of min_i(mu_i(p) - lambda_i) over p >= 0. Only a
/// found witness is conclusive.
StolyarResult stolyar_search(const Graph& g, const Vec& lambda, const StolyarSearch& search = {});

}  // namespace aloha
