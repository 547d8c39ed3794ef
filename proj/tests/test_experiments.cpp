#include <doctest.h>

#include <cmath>

#include "aloha/experiments.hpp"
#include "aloha/stability.hpp"

using namespace aloha;

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS(median({}));
}

TEST_CASE("fluid limit convergence on a small budget") {
  const Graph g = make_cycle(4);
  for (ArrivalFamily family : {ArrivalFamily::Poisson, ArrivalFamily::Deterministic}) {
    ConvergenceOptions opt;
    opt.scales = {1e2, 1e4};
    opt.reps = 5;
    opt.horizon = 2.0;
    opt.family = family;
    const ConvergenceRecord r = fluid_limit_convergence(g, opt);
    REQUIRE(r.scales.size() == 2);
    CHECK(r.scales[0].distances.size() == 5);
    CHECK(r.scales[1].median < r.scales[0].median);
    CHECK(r.strictly_decreasing);
    CHECK(r.scales[1].median < 0.1);
  }
  ConvergenceOptions bad;
  bad.direction = Vec::Zero(4);
  CHECK_THROWS(fluid_limit_convergence(g, bad));
}

TEST_CASE("lambda sweep") {
  const Graph g = make_cycle(4);
  SweepOptions opt;
  opt.grid = {0.05, kInvE / 3.0, 0.2};
  opt.slots = 20000;
  opt.reps = 2;
  const SweepResult r = lambda_sweep(g, opt);
  REQUIRE(r.points.size() == 3);
  CHECK(r.global_threshold == doctest::Approx(kInvE / 3.0));
  const SweepPoint& low = r.points[0];
  CHECK(low.label == "below e^-1/V");
  CHECK(low.return_fraction == 1.0);
  CHECK(low.zero_fraction > 0.0);
  CHECK(r.points[1].label == "critical - inconclusive");
  const SweepPoint& high = r.points[2];
  CHECK(high.fluid_slope == doctest::Approx(4.0 * (0.2 - kInvE / 3.0)));
  CHECK(std::abs(high.slope - high.fluid_slope) < 0.2 * high.fluid_slope);
  CHECK(high.mean_total > low.mean_total);
}

TEST_CASE("boundary repulsion constants and positivity") {
  const Graph g = make_cycle(4);
  BoundaryOptions opt;
  opt.lambda = Vec::Constant(4, 0.05);
  opt.horizon = 5.0;
  const BoundaryReport r = boundary_repulsion_check(g, opt);
  CHECK(r.lambda_star == doctest::Approx(0.05));
  CHECK(r.k1 == doctest::Approx(39.0));
  CHECK(r.k2 == doctest::Approx(0.025));
  CHECK(r.c == doctest::Approx(1.0 / (4.0 * 0.95)));
  CHECK(r.diameter == 2);
  CHECK(r.a == doctest::Approx(0.025 * 38.0 / (39.0 * 39.0 - 1.0)));
  REQUIRE(r.trajectories.size() == 4);
  CHECK(r.all_positive);
  CHECK(r.dominance_ok);
  for (const auto& t : r.trajectories) {
    CHECK(t.min_interior > 0.0);
    CHECK(t.envelope.size() == opt.epsilons.size());
  }
}

TEST_CASE("drain and growth checks") {
  const Graph g = make_cycle(4);
  DrainGrowthOptions sub;
  sub.lambda = 0.05;
  sub.starts = {Vec::Constant(4, 0.25), Vec::Unit(4, 0)};
  const DrainGrowthReport a = drain_growth_check(g, sub);
  CHECK(a.subcritical);
  CHECK(a.drain_bound == doctest::Approx(2.0 / (kInvE / 3.0 - 0.05) + 10.0));
  CHECK(a.all_ok);
  for (const auto& t : a.trajectories) {
    REQUIRE(t.drain_time.has_value());
    CHECK(*t.drain_time <= a.drain_bound);
  }

  DrainGrowthOptions sup;
  sup.lambda = 0.3;
  sup.horizon = 50.0;
  sup.starts = {Vec::Constant(4, 0.25)};
  const DrainGrowthReport b = drain_growth_check(g, sup);
  CHECK_FALSE(b.subcritical);
  CHECK(b.expected_rate == doctest::Approx(0.3 - kInvE / 3.0));
  // The diagonal is an exact linear orbit.
  CHECK(b.trajectories[0].increment_relative_error < 1e-9);
  CHECK(b.trajectories[0].phi_error < 1e-12);

  DrainGrowthOptions crit;
  crit.lambda = kInvE / 3.0;
  CHECK_THROWS(drain_growth_check(g, crit));
}

TEST_CASE("rate probe hypotheses") {
  const Graph g = make_cycle(4);
  RateProbeOptions opt;
  CHECK_THROWS_WITH_AS(convergence_rate_probe(g, ArrivalModel::zero(4), opt), doctest::Contains("hypothesis violation"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(convergence_rate_probe(g, ArrivalModel::deterministic(std::vector<double>(4, 0.05)), opt),
                       doctest::Contains("hypothesis violation"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(convergence_rate_probe(g, ArrivalModel::poisson(std::vector<double>(4, 0.2)), opt),
                       doctest::Contains("hypothesis violation"), std::invalid_argument);
}

TEST_CASE("rate probe on a small budget") {
  const Graph g = make_cycle(4);
  RateProbeOptions opt;
  opt.checkpoints = {5, 200};
  opt.reps = 400;
  opt.reference_slots = 100000;
  opt.burn_in = 1000;
  opt.initial_per_node = 5;
  opt.bootstrap = 50;
  const RateProbeReport r = convergence_rate_probe(g, ArrivalModel::poisson(std::vector<double>(4, 0.05)), opt);
  REQUIRE(r.tv.size() == 2);
  REQUIRE(r.tv_sd.size() == 2);
  for (double tv : r.tv) {
    CHECK(tv >= 0.0);
    CHECK(tv <= 1.0);
  }
  CHECK(r.tv[1] < r.tv[0]);
  CHECK(r.reference_coverage >= 0.99);
  CHECK(r.self_tv < 0.2);
  CHECK(r.bins >= 2);
}
