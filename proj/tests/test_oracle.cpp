#include <doctest.h>

#include <cmath>

#include "mfrc/acceptance.hpp"
#include "mfrc/oracle.hpp"

using namespace mfrc;

namespace {

const TimeGrid<double> kGrid(0.0, 1.0, 2000);

struct Setup {
  ValidatedModel m;
  RiccatiBundle b;
  ConsistencyProfile profile;
};

Setup setup(const TimeGrid<double>& g = kGrid) {
  ValidatedModel m = validate_params(reference_example_params());
  RiccatiBundle b = solve_riccati(m, g);
  ConsistencyProfile p = solve_consistency_finite(m, b).profile;
  return {std::move(m), std::move(b), std::move(p)};
}

}  // namespace

TEST_CASE("stacked system layout") {
  const ValidatedModel m = validate_params(reference_example_params());
  const StackedSystem S = build_stacked(m, 3);
  CHECK(S.A_check.rows() == 3);
  CHECK(S.A_check(0, 0) == doctest::Approx(1.0 - 0.5));
  CHECK(S.A_check(0, 1) == doctest::Approx(-0.5));
  CHECK(S.Q_hat(0, 0) == doctest::Approx(1.0 - 0.75 / 3));
  CHECK(S.Q_hat(0, 2) == doctest::Approx(-0.25));
  CHECK(S.R_joint(3, 3) == -3.0);
  CHECK_THROWS_AS(build_stacked(m, 600), TooLargeError);
}

TEST_CASE("brute-force drift matches the Riccati drift law") {
  const Setup s = setup();
  const ControlLaw law = build_decentralized_law(s.m, s.b, s.profile);
  const DriftLaw drift = build_worstcase_law(s.m, s.b, s.profile);
  const Index N = 3;
  MatrixXd u(N, kGrid.size()), f(1, kGrid.size());
  for (Index k = 0; k < kGrid.size(); ++k) {
    u.col(k) = law.at_node(k, s.profile.xbar(k)).replicate(N, 1);
    f.col(k) = drift.at_node(k, s.profile.xbar(k));
  }
  const VectorXd x0 = VectorXd::Ones(N);
  const BruteForceDrift bf = bruteforce_worstcase_drift(s.m, u, x0, kGrid);
  CHECK((bf.f - f).cwiseAbs().maxCoeff() <= 1e-4);
  // interior nodes are second-order accurate
  CHECK((bf.f - f).middleCols(1, kGrid.steps() - 1).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(bf.gradient_norm <= 1e-9);
  // the discrete optimum and the continuous cost of the law's drift agree
  CHECK(bf.value == doctest::Approx(raw_social_cost(s.m, u, f, x0, kGrid)).epsilon(1e-6));
  // and the law's drift is a maximizer of the continuous cost
  const double base = raw_social_cost(s.m, u, f, x0, kGrid);
  MatrixXd bump = MatrixXd::Zero(1, kGrid.size());
  bump.middleCols(400, 400).setConstant(0.1);
  CHECK(raw_social_cost(s.m, u, f + bump, x0, kGrid) < base);
  CHECK(raw_social_cost(s.m, u, f - bump, x0, kGrid) < base);
}

TEST_CASE("centralized minimax value") {
  const Setup s = setup();
  const CentralizedMinimax c = solve_centralized_minimax(s.m, 2, kGrid);
  CHECK(c.value_per_agent == doctest::Approx(0.331812465774001).epsilon(1e-10));
  CHECK(c.constant == doctest::Approx(0.0125129085883954).epsilon(1e-9));
  CHECK(c.value == doctest::Approx(2 * c.value_per_agent));
}

TEST_CASE("decentralized worst-case value and gap") {
  const Setup s = setup();
  CHECK(decentralized_worstcase_value(s.m, s.b, s.profile, 2) ==
        doctest::Approx(0.342940006533882).epsilon(1e-10));
  const std::vector<GapRow> rows = optimality_gap_sweep(s.m, s.b, s.profile, {2, 4, 8});
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.gap >= -1e-8);
    CHECK(r.gap_sqrtN == doctest::Approx(r.gap * std::sqrt(double(r.N))));
  }
  CHECK(rows[1].gap < rows[0].gap);
  CHECK(rows[2].gap < rows[1].gap);
  // gap scales like 1/N for this example
  CHECK(rows[0].gap * 2 == doctest::Approx(0.02225).epsilon(1e-3));
  CHECK(rows[2].gap * 8 == doctest::Approx(0.02225).epsilon(2e-3));
}

TEST_CASE("decentralized value never beats the centralized one for N = 1") {
  ModelParams p = reference_example_params();
  p.sigma.setZero();
  p.init_spread = 0.0;
  const ValidatedModel m = validate_params(p);
  const TimeGrid<double> g(0.0, 1.0, 1000);
  const RiccatiBundle b = solve_riccati(m, g);
  const ConsistencyProfile prof = solve_consistency_finite(m, b).profile;
  const double cen = solve_centralized_minimax(m, 1, g).value_per_agent;
  const double dec = decentralized_worstcase_value(m, b, prof, 1);
  CHECK(dec >= cen - 1e-8);
}

TEST_CASE("aggregate stacked ARE reproduces the mean-field solution") {
  const ValidatedModel m = validate_params(scalar_infinite_params());
  const MatrixXd P = solve_P_infinite(m);
  for (Index N : {1, 3, 5}) CHECK((aggregate_stacked_are(m, N) - P).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK_THROWS_AS(aggregate_stacked_are(validate_params(reference_example_params()), 3), std::invalid_argument);
}
