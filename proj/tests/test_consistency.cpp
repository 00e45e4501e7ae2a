#include <doctest.h>

#include <cmath>

#include "mfrc/acceptance.hpp"
#include "mfrc/consistency.hpp"

using namespace mfrc;

namespace {

const TimeGrid<double> kGrid(0.0, 1.0, 2000);

struct Setup {
  ValidatedModel m;
  RiccatiBundle b;
};

Setup setup(const ModelParams& p, const TimeGrid<double>& g = kGrid) {
  ValidatedModel m = validate_params(p);
  RiccatiBundle b = solve_riccati(m, g);
  return {std::move(m), std::move(b)};
}

}  // namespace

TEST_CASE("componentwise and block-form conventions differ only in three blocks") {
  ModelParams p = reference_example_params();
  p.n = p.d = 2;
  p.r = 1;
  p.A = (MatrixXd(2, 2) << 0.3, 1.0, -0.2, 0.1).finished();
  p.B = (MatrixXd(2, 1) << 0.0, 1.0).finished();
  p.G = (MatrixXd(2, 2) << -0.5, 0.2, 0.0, -0.4).finished();
  p.sigma = 0.1 * MatrixXd::Identity(2, 2);
  p.Q = p.H = MatrixXd::Identity(2, 2);
  p.R2 = MatrixXd::Identity(2, 2) * 2.0;
  p.Gamma = 0.5 * MatrixXd::Identity(2, 2);
  p.eta = VectorXd::Zero(2);
  p.xbar0 = VectorXd::Ones(2);
  const ValidatedModel m = validate_params(p);
  MatrixXd P(2, 2), K(2, 2);
  P << -1.0, 0.2, 0.2, -0.7;
  K << 1.5, 0.1, 0.1, 1.2;
  const Blocks d = assemble_blocks(m, P, K, BlockConvention::componentwise);
  const Blocks q = assemble_blocks(m, P, K, BlockConvention::block_form);
  CHECK(d.M11 == q.M11);
  CHECK(d.M12 == q.M12);
  CHECK(q.M21.block(2, 2, 2, 2).isZero());
  CHECK(d.M21.block(0, 0, 2, 4) == q.M21.block(0, 0, 2, 4));
  CHECK(d.M22.block(0, 0, 2, 2) == q.M22.block(0, 0, 2, 2).transpose());
  CHECK(q.M22.block(0, 2, 2, 2).isApprox(P * m.BRB() * K));
  CHECK(d.M22.block(0, 2, 2, 2).isApprox(P * m.BRB()));
  CHECK(d.M22.block(2, 2, 2, 2) == q.M22.block(2, 2, 2, 2).transpose());
  CHECK(d.system().rows() == 10);
}

TEST_CASE("decoupling and shooting agree on the reference example") {
  const Setup s = setup(reference_example_params());
  const ConsistencySolution y = solve_consistency_finite(s.m, s.b);
  const ConsistencyProfile sh = solve_consistency_shooting(s.m, s.b);
  CHECK((y.profile.states() - sh.states()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(consistency_residual(y.profile, s.m, s.b) <= 1e-5);
  CHECK(y.profile.method() == ConsistencyMethod::decoupling);
  CHECK(sh.method() == ConsistencyMethod::shooting);
}

TEST_CASE("reference profile frozen values") {
  const Setup s = setup(reference_example_params());
  const ConsistencyProfile p = solve_consistency_finite(s.m, s.b).profile;
  CHECK(p.xbar(1000)(0) == doctest::Approx(0.778800783071411).epsilon(1e-10));
  CHECK(std::abs(p.l(1000)(0)) <= 1e-12);
  CHECK(p.sbar(1000)(0) == doctest::Approx(0.359625803259694).epsilon(1e-10));
  CHECK(p.phi(1000)(0) == doctest::Approx(-0.900417672243982).epsilon(1e-10));
  CHECK(p.v(1000)(0) == doctest::Approx(0.548975110323619).epsilon(1e-10));
  // closed-loop mean decays as exp(-t/2)
  CHECK(p.xbar(2000)(0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-10));
  CHECK(p.v(2000)(0) == doctest::Approx(p.xbar(2000)(0)));
  CHECK(p(0.5)(0) == doctest::Approx(p.xbar(1000)(0)));
}

TEST_CASE("v equals K xbar + phi") {
  const Setup s = setup(reference_example_params());
  const ConsistencyProfile p = solve_consistency_finite(s.m, s.b).profile;
  for (Index k = 0; k < kGrid.size(); k += 97)
    CHECK(std::abs(p.v(k)(0) - s.b.K.node(k)(0, 0) * p.xbar(k)(0) - p.phi(k)(0)) <= 1e-8);
}

TEST_CASE("zero initial mean and zero weights give a zero profile") {
  const Setup s = setup(homogeneous_params(), TimeGrid<double>(0.0, 1.0, 200));
  const ConsistencyProfile p = solve_consistency_finite(s.m, s.b).profile;
  CHECK(p.states().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Z equation blow-up with the block-form convention") {
  const Setup s = setup(reference_example_params());
  const ZBlowup z = detect_Z_blowup(s.m, s.b, 1.0);
  REQUIRE(z.time);
  CHECK(std::abs(*z.time - 0.758276) <= 5e-3);
  CHECK(z.estimates.size() >= 2);
  CHECK_FALSE(detect_Z_blowup(s.m, s.b, 0.7).time);
  // The componentwise system has no escape on the horizon.
  CHECK_FALSE(detect_Z_blowup(s.m, s.b, 1.0, BlockConvention::componentwise).time);
}

TEST_CASE("Z route needs zero eta") {
  ModelParams p = reference_example_params();
  p.eta(0) = 1.0;
  const Setup s = setup(p, TimeGrid<double>(0.0, 1.0, 100));
  CHECK_THROWS_AS(detect_Z_blowup(s.m, s.b, 1.0), std::invalid_argument);
}

TEST_CASE("nonzero eta enters the affine term") {
  ModelParams p = reference_example_params();
  p.eta(0) = 0.8;
  const Setup s = setup(p, TimeGrid<double>(0.0, 1.0, 400));
  const ConsistencySolution y = solve_consistency_finite(s.m, s.b);
  const ConsistencyProfile sh = solve_consistency_shooting(s.m, s.b);
  CHECK((y.profile.states() - sh.states()).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(consistency_residual(y.profile, s.m, s.b) <= 1e-4);
  CHECK(y.profile.sbar(0).norm() > 0);
}

TEST_CASE("infinite horizon stationary decoupling") {
  const ValidatedModel m = validate_params(scalar_infinite_params());
  const RiccatiBundle b = solve_riccati(m);
  const ConsistencySolution c = solve_consistency_infinite(m, b);
  CHECK(c.decoupling.truncation == doctest::Approx(19.0247972659016).epsilon(1e-9));
  const Blocks bl = assemble_blocks(m, b.P.node(0), b.K.node(0));
  CHECK(Y_are_residual(bl, c.decoupling.Y.node(0)) <= 1e-10);
  CHECK(std::abs(c.profile.xbar(c.profile.grid().steps())(0)) <= 1e-8);
  CHECK(consistency_residual(c.profile, m, b) <= 1e-5);
}
