#include "mfrc/convexity.hpp"

#include <algorithm>
#include <limits>

#include "mfrc/random.hpp"

namespace mfrc {

std::string to_string(Condition c) {
  switch (c) {
    case Condition::A2prime_det: return "A2prime_det";
    case Condition::A2prime_riccati: return "A2prime_riccati";
    case Condition::A5: return "A5";
    case Condition::A6: return "A6";
    case Condition::P2probe: return "P2probe";
  }
  return "unknown";
}

namespace {

double lower_block_det(const MatrixXd& blockA, double tau, Index n) {
  const MatrixXd E = matrix_exponential(MatrixXd(blockA * tau));
  return E.bottomRightCorner(n, n).determinant();
}

MatrixXd lerp_nodes(const MatrixXd& u, const TimeGrid<double>& grid, double t) {
  const Index k = grid.interval(t);
  const double w = std::clamp((t - grid.node(k)) / grid.step(), 0.0, 1.0);
  return (1.0 - w) * u.col(k) + w * u.col(k + 1);
}

}  // namespace

ConvexityReport check_A2prime_det(const ValidatedModel& m, Index samples) {
  ConvexityReport rep;
  rep.condition = Condition::A2prime_det;
  if (!m->horizon.is_finite()) throw std::invalid_argument("determinant test needs a finite horizon");
  const Index n = m.n();
  const double T = m->horizon.T;
  const MatrixXd AGH = m->A + m->G + m.R2inv() * m->H;
  const MatrixXd A21 = m->H * m.R2inv() * m->H + derived_weights(m).QIG +
                       (m->A + m->G).transpose() * m->H + m->H * (m->A + m->G);
  MatrixXd blockA(2 * n, 2 * n);
  blockA << AGH, -m.R2inv(), A21, -AGH.transpose();

  constexpr double floor = 1e-12;
  double prev_tau = 0.0;
  double min_det = std::numeric_limits<double>::infinity();
  for (Index k = 0; k <= samples; ++k) {
    const double tau = T * double(k) / double(samples);
    const double det = lower_block_det(blockA, tau, n);
    min_det = std::min(min_det, det);
    if (det <= floor) {
      double lo = prev_tau, hi = tau;
      while (hi - lo > 1e-12 * std::max(1.0, T)) {
        const double mid = 0.5 * (lo + hi);
        (lower_block_det(blockA, mid, n) > floor ? lo : hi) = mid;
      }
      rep.holds = false;
      rep.witness_time = T - 0.5 * (lo + hi);
      rep.margin = det;
      rep.note = "determinant vanishes at time-to-go " + std::to_string(0.5 * (lo + hi));
      return rep;
    }
    prev_tau = tau;
  }
  rep.holds = true;
  rep.margin = min_det;
  rep.note = "determinant positive on all samples";
  return rep;
}

ConvexityReport check_A2prime_riccati(const ValidatedModel& m, const TimeGrid<double>& grid) {
  ConvexityReport rep;
  rep.condition = Condition::A2prime_riccati;
  const MatrixPath<double> P = solve_P_finite(m, grid);
  rep.holds = P.complete();
  if (!rep.holds) {
    rep.witness_time = P.blowup_time();
    rep.note = "P escapes backward in time";
  } else {
    double worst = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < grid.size(); ++k) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(MatrixXd(-P.at_node(k)), Eigen::EigenvaluesOnly);
      worst = std::min(worst, es.eigenvalues().minCoeff());
    }
    rep.margin = worst;
    rep.note = "P exists on the grid; margin is the smallest eigenvalue of -P";
  }
  return rep;
}

ConvexityReport check_infinite_convexity(const ValidatedModel& m) {
  ConvexityReport rep;
  rep.condition = Condition::A5;
  const Index n = m.n();
  const MatrixXd As = m->A + m->G - 0.5 * m->horizon.rho * MatrixXd::Identity(n, n);
  MatrixXd H(2 * n, 2 * n);
  H << As, -m.R2inv(), derived_weights(m).QIG, -As.transpose();
  const Eigen::VectorXcd ev = eigenvalues(H);
  Index at = 0;
  ev.real().cwiseAbs().minCoeff(&at);
  rep.margin = std::abs(ev(at).real());
  rep.witness_eigenvalue = ev(at);
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if (rep.margin <= 1e-9 * scale) {
    rep.holds = false;
    rep.note = "Hamiltonian has an eigenvalue on the imaginary axis";
    return rep;
  }
  try {
    solve_P_infinite(m);
    rep.holds = true;
    rep.note = "stabilizing P exists; margin is the smallest |Re lambda| of the Hamiltonian";
  } catch (const std::exception& e) {
    rep.holds = false;
    rep.note = e.what();
  }
  return rep;
}

ConvexityReport check_A6(const ValidatedModel& m) {
  ConvexityReport rep;
  rep.condition = Condition::A6;
  const Index n = m.n();
  const Eigen::VectorXcd ev =
      eigenvalues(MatrixXd(m->A + m->G - 0.5 * m->horizon.rho * MatrixXd::Identity(n, n)));
  Index at = 0;
  rep.margin = ev.real().maxCoeff(&at);
  rep.witness_eigenvalue = ev(at);
  rep.holds = rep.margin < 0;
  rep.note = "margin is the spectral abscissa of A + G - rho/2 I";
  return rep;
}

double perturbation_cost(const ValidatedModel& m, const RiccatiBundle& b, const MatrixXd& u) {
  const TimeGrid<double>& grid = b.grid;
  const Index n = m.n();
  const MatrixXd& B = m->B;
  auto AG = [&](double t) -> MatrixXd { return m->A + Gbar(m, b.P(t)); };

  auto s_field = [&](double t, const MatrixXd& s) -> MatrixXd {
    return -AG(t).transpose() * s - b.P(t) * B * lerp_nodes(u, grid, t);
  };
  const MatrixPath<double> s =
      integrate_matrix_ode<double>(s_field, MatrixXd(MatrixXd::Zero(n, 1)), grid, Direction::backward, 1e300);
  auto x_field = [&](double t, const MatrixXd& x) -> MatrixXd {
    return AG(t) * x + B * lerp_nodes(u, grid, t) - m.R2inv() * s(t);
  };
  const MatrixPath<double> x =
      integrate_matrix_ode<double>(x_field, MatrixXd(MatrixXd::Zero(n, 1)), grid, Direction::forward, 1e300);

  const MatrixXd QIG = derived_weights(m).QIG;
  std::vector<double> f(static_cast<std::size_t>(grid.size()));
  for (Index k = 0; k < grid.size(); ++k) {
    const VectorXd xk = x.at_node(k);
    const VectorXd uk = u.col(k);
    const VectorXd w = b.P.node(k) * xk + s.at_node(k);
    f[static_cast<std::size_t>(k)] =
        0.5 * (xk.dot(QIG * xk) + uk.dot(m->R1 * uk) - w.dot(m.R2inv() * w));
  }
  const VectorXd xT = x.at_node(grid.steps());
  return integrate_nodes(f, grid.step()) + 0.5 * xT.dot(m->H * xT);
}

ConvexityReport probe_P2_convexity(const ValidatedModel& m, const RiccatiBundle& b, int directions,
                                   std::uint64_t seed) {
  if (b.kind != HorizonKind::finite) throw std::invalid_argument("probe needs a finite-horizon bundle");
  ConvexityReport rep;
  rep.condition = Condition::P2probe;
  const TimeGrid<double>& grid = b.grid;
  const Index r = m.r();
  constexpr Index knots = 16;
  double worst = std::numeric_limits<double>::infinity();
  for (int j = 0; j < directions; ++j) {
    auto rng = make_stream(seed, static_cast<std::uint64_t>(j));
    std::normal_distribution<double> normal;
    MatrixXd knot(r, knots + 1);
    for (Index c = 0; c <= knots; ++c)
      for (Index i = 0; i < r; ++i) knot(i, c) = normal(rng);
    const TimeGrid<double> coarse(grid.t0(), grid.t1(), knots);
    MatrixXd u(r, grid.size());
    for (Index k = 0; k < grid.size(); ++k) u.col(k) = lerp_nodes(knot, coarse, grid.node(k));
    std::vector<double> sq(static_cast<std::size_t>(grid.size()));
    for (Index k = 0; k < grid.size(); ++k) sq[static_cast<std::size_t>(k)] = u.col(k).squaredNorm();
    u /= std::sqrt(integrate_nodes(sq, grid.step()));

    const double J = perturbation_cost(m, b, u);
    if (J < worst) {
      worst = J;
      rep.witness_direction = j;
    }
  }
  rep.margin = worst;
  rep.holds = worst > 0;
  rep.note = "smallest perturbation cost over unit-norm directions (evidence, not proof)";
  if (rep.holds) rep.witness_direction.reset();
  return rep;
}

}  // namespace mfrc
