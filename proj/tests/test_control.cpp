#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mfrc/acceptance.hpp"
#include "mfrc/control.hpp"

using namespace mfrc;

namespace {

struct Setup {
  ValidatedModel m;
  RiccatiBundle b;
  ConsistencyProfile profile;
  ControlLaw law;
  DriftLaw drift;
};

Setup setup(const ModelParams& p, Index steps = 200) {
  ValidatedModel m = validate_params(p);
  RiccatiBundle b = solve_riccati(m, TimeGrid<double>(0.0, p.horizon.T, steps));
  ConsistencyProfile prof = solve_consistency_finite(m, b).profile;
  ControlLaw law = build_decentralized_law(m, b, prof);
  DriftLaw drift = build_worstcase_law(m, b, prof);
  return {std::move(m), std::move(b), std::move(prof), std::move(law), std::move(drift)};
}

}  // namespace

TEST_CASE("law coefficients at t = 0") {
  const Setup s = setup(reference_example_params(), 2000);
  CHECK(s.law.gain(0)(0, 0) == doctest::Approx(2.25636690981087).epsilon(1e-10));
  CHECK(s.law.offset(0)(0) == doctest::Approx(1.73045732893231).epsilon(1e-10));
  // drift slope -(P + Pt) / R2
  CHECK(s.drift.slope(0)(0, 0) == doctest::Approx(1.5 - 1.30740762823555).epsilon(1e-10));
  CHECK(s.law(0.0, VectorXd::Ones(1))(0) == doctest::Approx(1.73045732893231 - 2.25636690981087));
}

TEST_CASE("grids must agree") {
  const Setup s = setup(reference_example_params());
  const RiccatiBundle other = solve_riccati(s.m, TimeGrid<double>(0.0, 1.0, 100));
  CHECK_THROWS_AS(build_decentralized_law(s.m, other, s.profile), GridMismatchError);
  SimConfig cfg;
  cfg.dt = 0.0033;
  CHECK_THROWS_AS(simulate(s.m, s.law, s.drift, cfg), GridMismatchError);
}

TEST_CASE("missing P-tilde is reported") {
  const Setup s = setup(reference_example_params());
  RiccatiBundle b = s.b;
  b.Ptilde.reset();
  b.ptilde_failure = "test";
  CHECK_THROWS_AS(build_worstcase_law(s.m, b, s.profile), MissingPtildeError);
}

TEST_CASE("simulation is deterministic and independent of agent order") {
  const Setup s = setup(reference_example_params());
  SimConfig cfg;
  cfg.N = 12;
  cfg.replications = 4;
  cfg.seed = 99;
  const SimResult a = simulate(s.m, s.law, s.drift, cfg);
  const SimResult b = simulate(s.m, s.law, s.drift, cfg);
  CHECK(a.agent_cost == b.agent_cost);
  CHECK(a.error_mean == b.error_mean);

  cfg.stream_order.resize(12);
  std::iota(cfg.stream_order.rbegin(), cfg.stream_order.rend(), 0);
  const SimResult r = simulate(s.m, s.law, s.drift, cfg);
  CHECK(r.error_mean == a.error_mean);
  CHECK(r.drift_mean == a.drift_mean);
  for (Index i = 0; i < 12; ++i) CHECK(r.agent_cost(0, i) == a.agent_cost(0, 11 - i));

  cfg.stream_order.clear();
  cfg.seed = 100;
  CHECK(simulate(s.m, s.law, s.drift, cfg).agent_cost != a.agent_cost);
}

TEST_CASE("noise-free population tracks the mean-field state") {
  ModelParams p = reference_example_params();
  p.sigma.setZero();
  p.init_spread = 0.0;
  const Setup s = setup(p, 2000);
  SimConfig cfg;
  cfg.N = 5;
  const SimResult r = simulate(s.m, s.law, s.drift, cfg);
  CHECK(r.max_mean_deviation <= 1e-6);
  CHECK(r.error_sup <= 1e-12);
  CHECK((r.drift_mean.col(0) - s.drift.at_node(0, s.profile.xbar(0))).norm() <= 1e-12);
}

TEST_CASE("social cost statistics") {
  const Setup s = setup(reference_example_params());
  SimConfig cfg;
  cfg.N = 16;
  cfg.replications = 32;
  cfg.seed = 5;
  const CostStats c = evaluate_social_cost(simulate(s.m, s.law, s.drift, cfg));
  CHECK(std::isfinite(c.mean));
  CHECK(c.std_error > 0);
  CHECK(c.penalty_mean < 0);
  // close to the deterministic per-agent value plus a small noise contribution
  CHECK(c.mean == doctest::Approx(0.37).epsilon(0.15));
}

TEST_CASE("log-log fit recovers a power law") {
  const auto [slope, intercept] = loglog_fit({1, 2, 4, 8}, {3.0, 1.5, 0.75, 0.375});
  CHECK(slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("sweep input checks and rate") {
  const Setup s = setup(reference_example_params());
  SimConfig cfg;
  cfg.replications = 64;
  cfg.seed = 1;
  CHECK_THROWS_AS(meanfield_error_sweep(s.m, s.law, s.drift, {8, 16}, cfg), std::invalid_argument);
  const SweepReport rep = meanfield_error_sweep(s.m, s.law, s.drift, {8, 32, 128}, cfg);
  CHECK_FALSE(rep.degenerate);
  CHECK(rep.slope < -0.5);
  CHECK(rep.slope > -1.5);
  for (std::size_t i = 1; i < rep.rows.size(); ++i) CHECK(rep.rows[i].estimate < rep.rows[i - 1].estimate);
}

TEST_CASE("unstable closed loop is reported") {
  ModelParams p = reference_example_params();
  p.horizon = Horizon::finite(1.0);
  p.init_spread = 1e11;
  const Setup s = setup(p);
  SimConfig cfg;
  cfg.N = 2;
  CHECK_THROWS_AS(simulate(s.m, s.law, s.drift, cfg), UnstableSimulationError);
}

TEST_CASE("cost decomposition identity") {
  const Setup s = setup(reference_example_params(), 1000);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const DecompositionReport d = cost_decomposition_check(s.m, s.b, s.profile, 4, seed);
    CHECK(d.relative_error <= 1e-6);
    CHECK(d.perturbation >= -1e-10);
    CHECK(d.total == doctest::Approx(d.nominal + d.perturbation + d.cross));
  }
  const DecompositionReport small = cost_decomposition_check(s.m, s.b, s.profile, 4, 0, 0.5);
  const DecompositionReport big = cost_decomposition_check(s.m, s.b, s.profile, 4, 0, 1.0);
  CHECK(big.perturbation == doctest::Approx(4.0 * small.perturbation).epsilon(1e-9));
}

TEST_CASE("random piecewise-linear paths are reproducible") {
  const TimeGrid<double> g(0.0, 1.0, 64);
  const MatrixXd a = random_piecewise_linear(2, g, 8, 3, 1);
  CHECK(a == random_piecewise_linear(2, g, 8, 3, 1));
  CHECK(a != random_piecewise_linear(2, g, 8, 3, 2));
  // linear between knots
  CHECK(a(0, 4) == doctest::Approx(0.5 * (a(0, 0) + a(0, 8))));
}
