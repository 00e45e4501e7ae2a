#include <doctest.h>

#include <cmath>

#include "mfrc/numerics.hpp"

using namespace mfrc;

TEST_CASE("time grid nodes and intervals") {
  const TimeGrid<double> g(0.0, 1.0, 10);
  CHECK(g.size() == 11);
  CHECK(g.step() == doctest::Approx(0.1));
  CHECK(g.node(10) == 1.0);
  CHECK(g.interval(0.0) == 0);
  CHECK(g.interval(0.95) == 9);
  CHECK(g.interval(1.0) == 9);
  CHECK(g.interval(-3.0) == 0);
  CHECK(g.refined(4).steps() == 40);
  CHECK_THROWS_AS(TimeGrid<double>(1.0, 0.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid<double>(0.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("RK4 forward decay matches the exponential") {
  const TimeGrid<double> g(0.0, 2.0, 200);
  const MatrixPath<double> p = integrate_matrix_ode<double>(
      [](double, const MatrixXd& y) -> MatrixXd { return -y; }, MatrixXd::Ones(1, 1), g, Direction::forward);
  REQUIRE(p.complete());
  double err = 0.0;
  for (Index k = 0; k < g.size(); ++k) err = std::max(err, std::abs(p.at_node(k)(0, 0) - std::exp(-g.node(k))));
  CHECK(err < 1e-9);
  // Hermite interpolation between nodes
  CHECK(p(0.505)(0, 0) == doctest::Approx(std::exp(-0.505)).epsilon(1e-9));
}

TEST_CASE("RK4 backward integration stores nodes in calendar order") {
  const TimeGrid<double> g(0.0, 1.0, 100);
  const MatrixPath<double> p = integrate_matrix_ode<double>(
      [](double t, const MatrixXd&) -> MatrixXd { return MatrixXd::Constant(1, 1, 3 * t * t); },
      MatrixXd::Zero(1, 1), g, Direction::backward);
  CHECK(p.first_node() == 0);
  CHECK(p.at_node(0)(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(p.at_node(50)(0, 0) == doctest::Approx(0.125 - 1.0).epsilon(1e-12));
}

TEST_CASE("finite escape is detected near the true blow-up") {
  // y' = y^2, y(0) = 1 escapes at t = 1
  const TimeGrid<double> g(0.0, 2.0, 2000);
  const MatrixPath<double> p = integrate_matrix_ode<double>(
      [](double, const MatrixXd& y) -> MatrixXd { return y.cwiseProduct(y); }, MatrixXd::Ones(1, 1), g,
      Direction::forward);
  REQUIRE_FALSE(p.complete());
  CHECK(*p.blowup_time() == doctest::Approx(1.0).epsilon(2e-3));
  CHECK_THROWS_AS(p(1.5), std::out_of_range);
}

TEST_CASE("matrix exponential of a rotation generator") {
  MatrixXd a(2, 2);
  a << 0, -1, 1, 0;
  const MatrixXd e = matrix_exponential(a);
  CHECK(e(0, 0) == doctest::Approx(std::cos(1.0)));
  CHECK(e(1, 0) == doctest::Approx(std::sin(1.0)));
  CHECK_THROWS_AS(matrix_exponential(MatrixXd::Constant(1, 1, 800.0)), OverflowError);
}

TEST_CASE("spectral helpers") {
  MatrixXd a(2, 2);
  a << -1, 5, 0, -0.5;
  CHECK(spectral_abscissa(a) == doctest::Approx(-0.5));
  CHECK(is_hurwitz(a));
  CHECK_FALSE(is_hurwitz(a, 1.0));
}

TEST_CASE("singular systems are rejected") {
  MatrixXd a(2, 2);
  a << 1, 2, 2, 4;
  CHECK_THROWS_AS(solve_linear(a, VectorXd::Ones(2)), SingularError);
  a(1, 1) = 5;
  const MatrixXd x = solve_linear(a, VectorXd::Ones(2));
  CHECK((a * x - VectorXd::Ones(2)).norm() < 1e-14);
}

TEST_CASE("ordered Schur moves the selected eigenvalues to the front") {
  MatrixXd a(4, 4);
  a << 3, 1, 0, 2, 0, -2, 1, 0, 1, 0, 1, 1, 0, 1, 0, -4;
  const auto s = ordered_schur(a, [](std::complex<double> z) { return z.real() < 0; });
  CHECK(s.selected == 2);
  CHECK(s.T(0, 0).real() < 0);
  CHECK(s.T(1, 1).real() < 0);
  CHECK(s.T(2, 2).real() > 0);
  const MatrixXd back = (s.U * s.T * s.U.adjoint()).real();
  CHECK((back - a).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s.U.adjoint() * s.U - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("Simpson quadrature is exact for cubics, odd interval counts included") {
  for (int steps : {10, 11}) {
    const double h = 1.0 / steps;
    std::vector<double> f;
    for (int k = 0; k <= steps; ++k) {
      const double t = k * h;
      f.push_back(t * t * t - t + 2);
    }
    const double exact = 0.25 - 0.5 + 2;
    CHECK(integrate_nodes(f, h) == doctest::Approx(exact).epsilon(steps % 2 ? 1e-3 : 1e-14));
  }
}
