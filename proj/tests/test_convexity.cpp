#include <doctest.h>

#include <cmath>

#include "mfrc/acceptance.hpp"
#include "mfrc/convexity.hpp"

using namespace mfrc;

namespace {

const TimeGrid<double> kGrid(0.0, 1.0, 2000);

}  // namespace

TEST_CASE("reference example passes both finite-horizon convexity tests") {
  const ValidatedModel m = validate_params(reference_example_params());
  const ConvexityReport det = check_A2prime_det(m);
  CHECK(det.holds);
  CHECK_FALSE(det.witness_time);
  CHECK(det.margin == doctest::Approx(0.5).epsilon(1e-10));
  const ConvexityReport ric = check_A2prime_riccati(m, kGrid);
  CHECK(ric.holds);
  // min eigenvalue of -P is attained at t = 1: 1/2 + 1/2
  CHECK(ric.margin == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("failing scenario: both tests fail at the analytic time") {
  const ValidatedModel m = validate_params(blowup_case_params());
  const double s = std::sqrt(399.0);
  const double exact = 1.0 - (2.0 / s) * (std::atan(-49.0 / s) + M_PI / 2);
  const ConvexityReport det = check_A2prime_det(m);
  REQUIRE_FALSE(det.holds);
  REQUIRE(det.witness_time);
  CHECK(*det.witness_time == doctest::Approx(exact).epsilon(1e-8));
  const ConvexityReport ric = check_A2prime_riccati(m, kGrid);
  REQUIRE_FALSE(ric.holds);
  REQUIRE(ric.witness_time);
  CHECK(std::abs(*ric.witness_time - *det.witness_time) <= 2 * kGrid.step());
}

TEST_CASE("shorter horizon restores convexity") {
  ModelParams p = blowup_case_params();
  p.horizon = Horizon::finite(0.02);
  const ValidatedModel m = validate_params(p);
  CHECK(check_A2prime_det(m).holds);
  CHECK(check_A2prime_riccati(m, TimeGrid<double>(0.0, 0.02, 200)).holds);
}

TEST_CASE("infinite horizon conditions") {
  const ValidatedModel m = validate_params(scalar_infinite_params());
  const ConvexityReport a5 = check_infinite_convexity(m);
  CHECK(a5.holds);
  CHECK(a5.margin == doctest::Approx(std::sqrt(15.0) / 4).epsilon(1e-10));
  const ConvexityReport a6 = check_A6(m);
  CHECK(a6.holds);
  CHECK(a6.margin == doctest::Approx(-1.0));

  ModelParams p = scalar_infinite_params();
  p.A(0, 0) = 0.5;
  CHECK_FALSE(check_A6(validate_params(p)).holds);
}

TEST_CASE("convexity conditions name themselves") {
  CHECK(to_string(Condition::A2prime_det) != to_string(Condition::A2prime_riccati));
  CHECK_FALSE(to_string(Condition::P2probe).empty());
}

TEST_CASE("perturbation cost probe is positive and reproducible") {
  const ValidatedModel m = validate_params(reference_example_params());
  const RiccatiBundle b = solve_riccati(m, kGrid);
  const ConvexityReport a = probe_P2_convexity(m, b, 10, 1);
  const ConvexityReport c = probe_P2_convexity(m, b, 10, 1);
  CHECK(a.holds);
  CHECK(a.margin == doctest::Approx(0.505700352105722).epsilon(1e-9));
  CHECK(a.margin == c.margin);
}

TEST_CASE("perturbation cost is quadratic in the control perturbation") {
  const ValidatedModel m = validate_params(reference_example_params());
  const RiccatiBundle b = solve_riccati(m, kGrid);
  MatrixXd u(1, kGrid.size());
  for (Index k = 0; k < kGrid.size(); ++k) u(0, k) = std::sin(3.0 * kGrid.node(k));
  const double j1 = perturbation_cost(m, b, u);
  const double j2 = perturbation_cost(m, b, 2.0 * u);
  CHECK(j1 > 0);
  CHECK(j2 == doctest::Approx(4.0 * j1).epsilon(1e-10));
}
