#include "mfrc/consistency.hpp"

#include <cmath>

namespace mfrc {

namespace {

MatrixXd zeros(Index r, Index c) { return MatrixXd::Zero(r, c); }

MatrixPath<double> slice_columns(const MatrixPath<double>& path, Index first, Index count) {
  std::vector<MatrixXd> v, s;
  for (Index k = path.first_node(); k <= path.last_node(); ++k) {
    v.push_back(path.at_node(k).middleCols(first, count));
    s.push_back(path.slope_at_node(k).middleCols(first, count));
  }
  return MatrixPath<double>(path.grid(), path.first_node(), std::move(v), std::move(s), path.escape_node());
}

Blocks blocks_at(const ValidatedModel& m, const RiccatiBundle& b, double t,
                 BlockConvention c = BlockConvention::componentwise) {
  return assemble_blocks(m, b.P(t), b.K(t), c);
}

MatrixXd Y_rhs(const Blocks& b, const MatrixXd& Y) {
  return b.M21 + b.M22 * Y - Y * b.M11 - Y * b.M12 * Y;
}

void refine_Y(const Blocks& b, MatrixXd& Y) {
  const Index p = Y.rows(), q = Y.cols();
  for (int it = 0; it < 50; ++it) {
    const MatrixXd F = Y_rhs(b, Y);
    if (F.cwiseAbs().maxCoeff() <= 1e-12) return;
    const MatrixXd L = b.M22 - Y * b.M12;
    const MatrixXd R = b.M11 + b.M12 * Y;
    // L D - D R = -F  as  (I kron L - R^T kron I) vec D = -vec F
    MatrixXd op = MatrixXd::Zero(p * q, p * q);
    for (Index j = 0; j < q; ++j) {
      op.block(j * p, j * p, p, p) += L;
      for (Index i = 0; i < q; ++i) op.block(j * p, i * p, p, p) -= R(i, j) * MatrixXd::Identity(p, p);
    }
    const VectorXd rhs = -Eigen::Map<const VectorXd>(F.data(), F.size());
    VectorXd d;
    try {
      d = solve_linear(op, rhs);
    } catch (const SingularError&) {
      throw NewtonDivergenceError("Y Newton step: singular Sylvester operator");
    }
    Y += Eigen::Map<const MatrixXd>(d.data(), p, q);
  }
  if (!(Y_rhs(b, Y).cwiseAbs().maxCoeff() <= 1e-10))
    throw NewtonDivergenceError("Y Newton iteration did not converge");
}

ConsistencyProfile build_profile(const ValidatedModel& m, const RiccatiBundle& b,
                                 const TimeGrid<double>& grid, MatrixXd states,
                                 ConsistencyMethod method) {
  MatrixXd slopes(states.rows(), states.cols());
  for (Index k = 0; k < grid.size(); ++k) {
    const Blocks bk = assemble_blocks(m, b.P.node(k), b.K.node(k));
    slopes.col(k) = bk.system() * states.col(k) + bk.e;
  }
  return ConsistencyProfile(grid, m.n(), std::move(states), std::move(slopes), method);
}

}  // namespace

MatrixXd Blocks::system() const {
  const Index a = M11.rows(), c = M22.rows();
  MatrixXd S(a + c, a + c);
  S << M11, M12, M21, M22;
  return S;
}

Blocks assemble_blocks(const ValidatedModel& m, const MatrixXd& P, const MatrixXd& K,
                       BlockConvention convention) {
  const Index n = m.n();
  if (P.rows() != n || P.cols() != n || K.rows() != n || K.cols() != n)
    throw ModelError(ModelErrorKind::dimension_mismatch, "P/K", "P and K must be n x n");
  const DerivedWeights w = derived_weights(m);
  const MatrixXd& S = m.BRB();
  const MatrixXd& Ri = m.R2inv();
  const MatrixXd Gb = Gbar(m, P);
  const MatrixXd Ab = Abar(m, K);
  const MatrixXd AG = m->A + Gb;
  const MatrixXd Z = zeros(n, n);
  const bool compact = convention == BlockConvention::block_form;

  Blocks b;
  b.M11.resize(2 * n, 2 * n);
  b.M11 << Ab + Gb, S * P, Ri * P, AG;
  b.M12.resize(2 * n, 3 * n);
  b.M12 << -Ri, -S, Z, Ri, Z, Ri;
  b.M21.resize(3 * n, 2 * n);
  b.M21 << P * S * K, -P * S * P,
           -K * Gb + w.Psi + P * Ri * P, compact ? Z : MatrixXd(-K * S * P),
           w.Psi - m->Q + P * Ri * P, Z;
  b.M22.resize(3 * n, 3 * n);
  if (compact) {
    b.M22 << -AG, P * S * K, Z,
             (K + P) * Ri, -Ab, -Gb.transpose(),
             P * Ri, Z, -AG;
  } else {
    b.M22 << -AG.transpose(), P * S, Z,
             (K + P) * Ri, -Ab.transpose(), -Gb.transpose(),
             P * Ri, Z, -AG.transpose();
  }
  if (!m->horizon.is_finite()) b.M22 += m->horizon.rho * MatrixXd::Identity(3 * n, 3 * n);
  b.e = VectorXd::Zero(5 * n);
  b.e.segment(2 * n, n) = -w.eta_bar;
  b.e.segment(3 * n, n) = w.eta_bar;
  b.e.segment(4 * n, n) = w.eta_bar;
  return b;
}

VectorXd ConsistencyProfile::operator()(double t) const {
  const double h = grid_.step();
  t = std::clamp(t, grid_.t0(), grid_.t1());
  const Index k = grid_.interval(t);
  const double w = (t - grid_.node(k)) / h;
  if (w <= 0.0) return states_.col(k);
  if (w >= 1.0) return states_.col(k + 1);
  const double w2 = w * w, w3 = w2 * w;
  return (2 * w3 - 3 * w2 + 1) * states_.col(k) + ((w3 - 2 * w2 + w) * h) * slopes_.col(k) +
         (-2 * w3 + 3 * w2) * states_.col(k + 1) + ((w3 - w2) * h) * slopes_.col(k + 1);
}

double Y_are_residual(const Blocks& b, const MatrixXd& Y) { return Y_rhs(b, Y).cwiseAbs().maxCoeff(); }

ConsistencySolution solve_consistency_finite(const ValidatedModel& m, const RiccatiBundle& b) {
  if (b.kind != HorizonKind::finite) throw std::invalid_argument("finite-horizon bundle required");
  const Index n = m.n();
  const TimeGrid<double>& grid = b.grid;

  MatrixXd W0 = zeros(3 * n, 2 * n + 1);
  W0.block(2 * n, 0, n, n) = m->H;
  auto field = [&](double t, const MatrixXd& W) -> MatrixXd {
    const Blocks bk = blocks_at(m, b, t);
    const MatrixXd Y = W.leftCols(2 * n);
    MatrixXd d(3 * n, 2 * n + 1);
    d.leftCols(2 * n) = Y_rhs(bk, Y);
    d.col(2 * n) = (bk.M22 - Y * bk.M12) * W.col(2 * n) + bk.e.tail(3 * n);
    return d;
  };
  const MatrixPath<double> W = integrate_matrix_ode<double>(field, W0, grid, Direction::backward);
  if (!W.complete()) throw BlowUpError("Y", *W.blowup_time());

  auto m_field = [&](double t, const MatrixXd& x) -> MatrixXd {
    const Blocks bk = blocks_at(m, b, t);
    const MatrixXd Wt = W(t);
    return (bk.M11 + bk.M12 * Wt.leftCols(2 * n)) * x + bk.M12 * Wt.col(2 * n);
  };
  MatrixXd m0 = zeros(2 * n, 1);
  m0.topRows(n) = m->xbar0;
  const MatrixPath<double> mp = integrate_matrix_ode<double>(m_field, m0, grid, Direction::forward);
  if (!mp.complete()) throw BlowUpError("mean-field state", *mp.blowup_time());

  MatrixXd states(5 * n, grid.size());
  for (Index k = 0; k < grid.size(); ++k) {
    const MatrixXd& Wk = W.at_node(k);
    const VectorXd mk = mp.at_node(k);
    states.col(k) << mk, Wk.leftCols(2 * n) * mk + Wk.col(2 * n);
  }
  ConsistencySolution out;
  out.profile = build_profile(m, b, grid, std::move(states), ConsistencyMethod::decoupling);
  out.decoupling.Y = Coefficient(slice_columns(W, 0, 2 * n));
  out.decoupling.alpha = Coefficient(slice_columns(W, 2 * n, 1));
  return out;
}

ConsistencyProfile solve_consistency_shooting(const ValidatedModel& m, const RiccatiBundle& b) {
  if (b.kind != HorizonKind::finite) throw std::invalid_argument("finite-horizon bundle required");
  const Index n = m.n();
  const TimeGrid<double>& grid = b.grid;

  MatrixXd X0 = zeros(5 * n, 3 * n + 1);
  X0.col(0).head(n) = m->xbar0;
  X0.bottomRightCorner(3 * n, 3 * n).setIdentity();
  auto field = [&](double t, const MatrixXd& X) -> MatrixXd {
    const Blocks bk = blocks_at(m, b, t);
    MatrixXd d = bk.system() * X;
    d.col(0) += bk.e;
    return d;
  };
  const MatrixPath<double> X = integrate_matrix_ode<double>(field, X0, grid, Direction::forward, 1e300);
  if (!X.complete()) throw SingularBoundaryMapError("shooting integration overflowed");

  const MatrixXd& XT = X.at_node(grid.steps());
  MatrixXd op = zeros(3 * n, 5 * n);
  op.block(0, 2 * n, n, n).setIdentity();
  op.block(n, 3 * n, n, n).setIdentity();
  op.block(2 * n, 0, n, n) = -m->H;
  op.block(2 * n, 4 * n, n, n).setIdentity();
  VectorXd z0;
  try {
    z0 = solve_linear(MatrixXd(op * XT.rightCols(3 * n)), VectorXd(-op * XT.col(0)));
  } catch (const SingularError&) {
    throw SingularBoundaryMapError("boundary map is singular");
  }
  VectorXd coef(3 * n + 1);
  coef << 1.0, z0;

  MatrixXd states(5 * n, grid.size());
  for (Index k = 0; k < grid.size(); ++k) states.col(k) = X.at_node(k) * coef;
  return build_profile(m, b, grid, std::move(states), ConsistencyMethod::shooting);
}

ZBlowup detect_Z_blowup(const ValidatedModel& m, const RiccatiBundle& b, double t_end,
                        BlockConvention convention) {
  if (b.kind != HorizonKind::finite) throw std::invalid_argument("finite-horizon bundle required");
  if (derived_weights(m).eta_bar.cwiseAbs().maxCoeff() > 0)
    throw std::invalid_argument("Z-route requires eta_bar = 0");
  if (!(t_end > 0) || t_end > b.grid.t1() + 1e-12)
    throw std::invalid_argument("Z-route end time must lie in (0, T]");
  t_end = std::min(t_end, b.grid.t1());
  const Index n = m.n();

  auto run = [&](Index steps) {
    auto field = [&](double t, const MatrixXd& Z) -> MatrixXd {
      const Blocks bk = blocks_at(m, b, t, convention);
      return bk.M12 + bk.M11 * Z - Z * bk.M22 - Z * bk.M21 * Z;
    };
    return integrate_matrix_ode<double>(field, zeros(2 * n, 3 * n),
                                        TimeGrid<double>(0.0, t_end, steps), Direction::forward);
  };

  ZBlowup out;
  out.t_end = t_end;
  out.convention = convention;
  Index steps = std::max<Index>(1, std::llround(t_end / b.grid.step()));
  out.Z = run(steps);
  if (out.Z.complete()) return out;
  out.estimates.push_back(*out.Z.blowup_time());
  for (int halving = 0; halving < 8; ++halving) {
    steps *= 2;
    const MatrixPath<double> Zh = run(steps);
    if (Zh.complete()) break;
    out.estimates.push_back(*Zh.blowup_time());
    const std::size_t e = out.estimates.size();
    if (std::abs(out.estimates[e - 1] - out.estimates[e - 2]) <= 1e-4) break;
  }
  out.time = out.estimates.back();
  return out;
}

ConsistencySolution solve_consistency_infinite(const ValidatedModel& m, const RiccatiBundle& b,
                                               double dt) {
  if (b.kind != HorizonKind::infinite) throw std::invalid_argument("infinite-horizon bundle required");
  const Index n = m.n();
  const double rho = m->horizon.rho;
  const Blocks bk = assemble_blocks(m, b.P.node(0), b.K.node(0));

  MatrixXd Y;
  try {
    Y = solve_subspace_are(bk.M11, bk.M12, bk.M21, bk.M22);
  } catch (const NoStabilizingSolutionError& e) {
    throw NoAdmissibleYError(std::string("Y: ") + e.what());
  }
  refine_Y(bk, Y);

  const MatrixXd Acl = bk.M11 + bk.M12 * Y;
  if (!is_hurwitz(MatrixXd(Acl - 0.5 * rho * MatrixXd::Identity(2 * n, 2 * n))))
    throw NoAdmissibleYError("M11 + M12 Y - rho/2 I is not Hurwitz");
  const MatrixXd back = bk.M22 - Y * bk.M12;
  if (!is_hurwitz(MatrixXd(-back + 0.5 * rho * MatrixXd::Identity(3 * n, 3 * n))))
    throw NoAdmissibleYError("-M22 + Y M12 - rho/2 I is not Hurwitz");
  const VectorXd alpha = -solve_linear(back, VectorXd(bk.e.tail(3 * n)));

  const double rate = spectral_abscissa(Acl) + 0.5 * rho;
  const double T = rate < 0 ? std::min(200.0, std::log(1e8) / -rate) : 200.0;
  const TimeGrid<double> grid(0.0, T, static_cast<Index>(std::ceil(T / dt)));

  const VectorXd drive = bk.M12 * alpha;
  auto field = [&](double, const MatrixXd& x) -> MatrixXd { return Acl * x + drive; };
  MatrixXd m0 = zeros(2 * n, 1);
  m0.topRows(n) = m->xbar0;
  const MatrixPath<double> mp = integrate_matrix_ode<double>(field, m0, grid, Direction::forward);

  MatrixXd states(5 * n, grid.size());
  for (Index k = 0; k < grid.size(); ++k) {
    const VectorXd mk = mp.at_node(k);
    states.col(k) << mk, Y * mk + alpha;
  }
  ConsistencySolution out;
  out.profile = build_profile(m, b, grid, std::move(states), ConsistencyMethod::stationary);
  out.decoupling.Y = Coefficient(Y);
  out.decoupling.alpha = Coefficient(MatrixXd(alpha));
  out.decoupling.truncation = T;
  return out;
}

double consistency_residual(const ConsistencyProfile& profile, const ValidatedModel& m,
                            const RiccatiBundle& b) {
  const TimeGrid<double>& grid = profile.grid();
  const double h = grid.step();
  double worst = 0.0;
  for (Index k = 1; k < grid.steps(); ++k) {
    const double t = grid.node(k);
    const Blocks bk = blocks_at(m, b, t);
    const VectorXd diff = (profile.states().col(k + 1) - profile.states().col(k - 1)) / (2 * h);
    const VectorXd rhs = bk.system() * profile.states().col(k) + bk.e;
    worst = std::max(worst, (diff - rhs).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace mfrc
