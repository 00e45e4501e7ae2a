#include "mfrc/oracle.hpp"

#include <cmath>

namespace mfrc {

namespace {

MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

MatrixXd ones(Index N) { return MatrixXd::Ones(N, N); }

VectorXd lerp_col(const MatrixXd& u, const TimeGrid<double>& grid, double t) {
  const Index k = grid.interval(t);
  const double w = std::clamp((t - grid.node(k)) / grid.step(), 0.0, 1.0);
  return (1.0 - w) * u.col(k) + w * u.col(k + 1);
}

double constant_cost(const ValidatedModel& m, Index N) { return double(N) * m->eta.dot(m->Q * m->eta); }

// Discrete Heun / trapezoid model of the deterministic social cost as a function of the drift.
class DiscreteDriftProblem {
 public:
  DiscreteDriftProblem(const ValidatedModel& m, const MatrixXd& u, const VectorXd& x0,
                       const TimeGrid<double>& grid)
      : m_(m), u_(u), x0_(x0), grid_(grid), S_(build_stacked(m, u.rows() / m.r())) {
    const Index nN = S_.A_check.rows();
    const double h = grid.step();
    const MatrixXd I = MatrixXd::Identity(nN, nN);
    Phi_ = I + h * S_.A_check + 0.5 * h * h * S_.A_check * S_.A_check;
    Lead_ = 0.5 * h * (I + h * S_.A_check);
    weights_.assign(static_cast<std::size_t>(grid.size()), h);
    weights_.front() = weights_.back() = 0.5 * h;
  }

  Index nodes() const { return grid_.size(); }

  MatrixXd states(const MatrixXd& f, bool homogeneous) const {
    const Index M = grid_.steps();
    const double h = grid_.step();
    MatrixXd X(S_.A_check.rows(), M + 1);
    X.col(0) = homogeneous ? VectorXd::Zero(X.rows()) : x0_;
    for (Index k = 0; k < M; ++k)
      X.col(k + 1) = Phi_ * X.col(k) + Lead_ * drive(f, k, homogeneous) + 0.5 * h * drive(f, k + 1, homogeneous);
    return X;
  }

  MatrixXd gradient(const MatrixXd& f, bool homogeneous) const {
    const Index M = grid_.steps();
    const double h = grid_.step();
    const MatrixXd X = states(f, homogeneous);
    const VectorXd eta = homogeneous ? VectorXd::Zero(X.rows()) : S_.eta_hat;
    MatrixXd lambda(X.rows(), M + 1);
    lambda.col(M) = w(M) * (S_.Q_hat * X.col(M) - eta) + S_.H_stack * X.col(M);
    for (Index k = M - 1; k >= 0; --k)
      lambda.col(k) = w(k) * (S_.Q_hat * X.col(k) - eta) + Phi_.transpose() * lambda.col(k + 1);
    MatrixXd g(f.rows(), M + 1);
    const double N = double(S_.N);
    for (Index k = 0; k <= M; ++k) {
      VectorXd mu = VectorXd::Zero(X.rows());
      if (k < M) mu += Lead_.transpose() * lambda.col(k + 1);
      if (k > 0) mu += 0.5 * h * lambda.col(k);
      g.col(k) = S_.F_stack.transpose() * mu - w(k) * N * (m_->R2 * f.col(k));
    }
    return g;
  }

  double value(const MatrixXd& f) const {
    const MatrixXd X = states(f, false);
    const Index M = grid_.steps();
    const Index r = m_.r();
    const double N = double(S_.N);
    double J = 0.0;
    for (Index k = 0; k <= M; ++k) {
      const VectorXd xk = X.col(k);
      double v = xk.dot(S_.Q_hat * xk) - 2.0 * S_.eta_hat.dot(xk) + constant_cost(m_, S_.N) -
                 N * f.col(k).dot(m_->R2 * f.col(k));
      for (Index i = 0; i < S_.N; ++i) {
        const VectorXd ui = u_.col(k).segment(i * r, r);
        v += ui.dot(m_->R1 * ui);
      }
      J += 0.5 * w(k) * v;
    }
    return J + 0.5 * X.col(M).dot(S_.H_stack * X.col(M));
  }

 private:
  double w(Index k) const { return weights_[static_cast<std::size_t>(k)]; }

  VectorXd drive(const MatrixXd& f, Index k, bool homogeneous) const {
    VectorXd c = S_.F_stack * f.col(k);
    if (!homogeneous) c += S_.B_stack * u_.col(k);
    return c;
  }

  const ValidatedModel& m_;
  const MatrixXd& u_;
  const VectorXd& x0_;
  TimeGrid<double> grid_;
  StackedSystem S_;
  MatrixXd Phi_, Lead_;
  std::vector<double> weights_;
};

double inner(const MatrixXd& a, const MatrixXd& b) { return (a.array() * b.array()).sum(); }

}  // namespace

StackedSystem build_stacked(const ValidatedModel& m, Index N) {
  if (N < 1) throw std::invalid_argument("build_stacked: N must be positive");
  const Index n = m.n();
  if (n * N > 512) throw TooLargeError("stacked dimension nN exceeds 512");
  const MatrixXd I = MatrixXd::Identity(N, N);
  const MatrixXd one = ones(N) / double(N);
  const DerivedWeights w = derived_weights(m);

  StackedSystem S;
  S.N = N;
  S.A_check = kron(I, m->A) + kron(one, m->G);
  S.B_stack = kron(I, m->B);
  S.F_stack = kron(MatrixXd::Ones(N, 1), MatrixXd::Identity(n, n));
  S.Q_hat = kron(I, m->Q) - kron(one, w.Psi);
  S.Q_hat = 0.5 * (S.Q_hat + S.Q_hat.transpose());
  S.H_stack = kron(I, m->H);
  S.eta_hat = w.eta_bar.replicate(N, 1);
  S.R_joint = MatrixXd::Zero(m.r() * N + n, m.r() * N + n);
  S.R_joint.topLeftCorner(m.r() * N, m.r() * N) = kron(I, m->R1);
  S.R_joint.bottomRightCorner(n, n) = -double(N) * m->R2;
  S.sigma_stack = kron(I, m->sigma);
  return S;
}

BruteForceDrift bruteforce_worstcase_drift(const ValidatedModel& m, const MatrixXd& u, const VectorXd& x0,
                                           const TimeGrid<double>& grid) {
  const Index n = m.n();
  if (u.rows() % m.r() != 0 || u.cols() != grid.size() || x0.size() != n * (u.rows() / m.r()))
    throw ModelError(ModelErrorKind::dimension_mismatch, "u/x0", "stacked control or state has the wrong shape");
  const DiscreteDriftProblem prob(m, u, x0, grid);

  // Maximize 1/2 f'Qf + b'f with Q negative definite: CG on -Q f = b.
  MatrixXd f = MatrixXd::Zero(n, grid.size());
  MatrixXd r = prob.gradient(f, false);
  MatrixXd p = r;
  double rr = inner(r, r);
  BruteForceDrift out;
  const int max_iter = static_cast<int>(std::max<Index>(50, 4 * f.size()));
  int it = 0;
  for (; it < max_iter && std::sqrt(rr) > 1e-10; ++it) {
    const MatrixXd Ap = -prob.gradient(p, true);
    const double pAp = inner(p, Ap);
    if (!(pAp > 0)) throw NotConcaveError("drift problem has non-negative curvature along a CG direction");
    const double alpha = rr / pAp;
    f += alpha * p;
    r -= alpha * Ap;
    const double rr_new = inner(r, r);
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  out.gradient_norm = prob.gradient(f, false).norm();
  if (out.gradient_norm > 1e-9)
    throw NoConvergenceError("drift CG did not reach the gradient tolerance");
  out.f = std::move(f);
  out.iterations = it;
  out.value = prob.value(out.f);
  return out;
}

double raw_social_cost(const ValidatedModel& m, const MatrixXd& u, const MatrixXd& f, const VectorXd& x0,
                       const TimeGrid<double>& grid) {
  const Index r = m.r();
  const Index N = u.rows() / r;
  const StackedSystem S = build_stacked(m, N);
  const Index nN = S.A_check.rows();
  const double c0 = constant_cost(m, N);
  auto field = [&](double t, const MatrixXd& y) -> MatrixXd {
    const VectorXd x = y.topRows(nN);
    const VectorXd ut = lerp_col(u, grid, t);
    const VectorXd ft = lerp_col(f, grid, t);
    MatrixXd d(nN + 1, 1);
    d.topRows(nN) = S.A_check * x + S.B_stack * ut + S.F_stack * ft;
    double v = x.dot(S.Q_hat * x) - 2.0 * S.eta_hat.dot(x) + c0 - double(N) * ft.dot(m->R2 * ft);
    for (Index i = 0; i < N; ++i) v += ut.segment(i * r, r).dot(m->R1 * ut.segment(i * r, r));
    d(nN, 0) = 0.5 * v;
    return d;
  };
  MatrixXd y0 = MatrixXd::Zero(nN + 1, 1);
  y0.topRows(nN) = x0;
  const MatrixPath<double> y = integrate_matrix_ode<double>(field, y0, grid, Direction::forward, 1e300);
  const MatrixXd& yT = y.at_node(grid.steps());
  const VectorXd xT = yT.topRows(nN);
  return yT(nN, 0) + 0.5 * xT.dot(S.H_stack * xT);
}

CentralizedMinimax solve_centralized_minimax(const ValidatedModel& m, Index N, const TimeGrid<double>& grid) {
  if (!m->horizon.is_finite()) throw std::invalid_argument("centralized oracle needs a finite horizon");
  const Index n = m.n();
  if (n * N > 256) throw TooLargeError("centralized oracle limited to nN <= 256");
  const StackedSystem S = build_stacked(m, N);
  const Index nN = n * N;
  const MatrixXd Sg = kron(MatrixXd::Identity(N, N), m.BRB()) - kron(ones(N) / double(N), m.R2inv());
  const MatrixXd At = S.A_check;

  auto field = [&](double, const MatrixXd& V) -> MatrixXd {
    const MatrixXd Pi = V.leftCols(nN);
    MatrixXd d(nN, nN + 1);
    d.leftCols(nN) = -(At.transpose() * Pi + Pi * At + S.Q_hat - Pi * Sg * Pi);
    d.col(nN) = -(At - Sg * Pi).transpose() * V.col(nN) + S.eta_hat;
    return d;
  };
  MatrixXd VT = MatrixXd::Zero(nN, nN + 1);
  VT.leftCols(nN) = S.H_stack;
  MatrixPath<double> V = integrate_matrix_ode<double>(field, VT, grid, Direction::backward);
  if (!V.complete()) throw BlowUpError("centralized value matrix", *V.blowup_time());

  const MatrixXd noise = S.sigma_stack * S.sigma_stack.transpose();
  const double c0 = constant_cost(m, N);
  std::vector<double> integrand(static_cast<std::size_t>(grid.size()));
  for (Index k = 0; k < grid.size(); ++k) {
    const MatrixXd& Vk = V.at_node(k);
    const VectorXd pik = Vk.col(nN);
    integrand[static_cast<std::size_t>(k)] =
        0.5 * c0 - 0.5 * pik.dot(Sg * pik) + 0.5 * (noise.cwiseProduct(Vk.leftCols(nN))).sum();
  }
  CentralizedMinimax out;
  out.constant = integrate_nodes(integrand, grid.step());
  const MatrixXd& V0 = V.at_node(0);
  const VectorXd mean = m->xbar0.replicate(N, 1);
  const double spread2 = m->init_spread * m->init_spread;
  out.value = 0.5 * mean.dot(V0.leftCols(nN) * mean) + 0.5 * spread2 * V0.leftCols(nN).trace() +
              V0.col(nN).dot(mean) + out.constant;
  out.value_per_agent = out.value / double(N);
  out.value_matrix = std::move(V);
  return out;
}

double decentralized_worstcase_value(const ValidatedModel& m, const RiccatiBundle& b,
                                     const ConsistencyProfile& profile, Index N) {
  if (b.kind != HorizonKind::finite) throw std::invalid_argument("finite-horizon bundle required");
  if (!b.Ptilde) throw MissingPtildeError("P-tilde is not available: " + b.ptilde_failure);
  const ModelParams& p = m.params();
  const Index n = p.n;
  const StackedSystem S = build_stacked(m, N);
  const Index nN = n * N;
  const TimeGrid<double>& grid = b.grid;
  const MatrixXd I = MatrixXd::Identity(N, N);
  const MatrixXd one = ones(N) / double(N);
  const MatrixXd RB = m.R1inv() * p.B.transpose();

  struct Law {
    MatrixXd L, Sf;
    VectorXd o, of;
  };
  auto law_at = [&](double t, bool node, Index k) {
    const MatrixXd P = node ? b.P.node(k) : b.P(t);
    const MatrixXd K = node ? b.K.node(k) : b.K(t);
    const MatrixXd Pt = node ? b.Ptilde->node(k) : (*b.Ptilde)(t);
    const VectorXd z = node ? profile.state(k) : profile(t);
    const VectorXd xbar = z.segment(0, n), l = z.segment(n, n), sbar = z.segment(2 * n, n),
                   phi = z.segment(3 * n, n);
    Law law;
    law.L = RB * K;
    law.o = -RB * (-P * l + phi);
    law.Sf = -m.R2inv() * (P + Pt);
    law.of = m.R2inv() * (Pt * xbar - sbar);
    return law;
  };
  auto closed_loop = [&](const Law& law, MatrixXd& Acl, VectorXd& bcl) {
    Acl = kron(I, MatrixXd(p.A - p.B * law.L)) + kron(one, MatrixXd(p.G + law.Sf));
    bcl = VectorXd(p.B * law.o + law.of).replicate(N, 1);
  };

  const MatrixXd noise = S.sigma_stack * S.sigma_stack.transpose();
  auto field = [&](double t, const MatrixXd& Y) -> MatrixXd {
    MatrixXd Acl;
    VectorXd bcl;
    closed_loop(law_at(t, false, 0), Acl, bcl);
    const MatrixXd C = Y.leftCols(nN);
    MatrixXd d(nN, nN + 1);
    d.leftCols(nN) = Acl * C + C * Acl.transpose() + noise;
    d.col(nN) = Acl * Y.col(nN) + bcl;
    return d;
  };
  MatrixXd Y0(nN, nN + 1);
  Y0.leftCols(nN) = p.init_spread * p.init_spread * MatrixXd::Identity(nN, nN);
  Y0.col(nN) = p.xbar0.replicate(N, 1);
  const MatrixPath<double> Y = integrate_matrix_ode<double>(field, Y0, grid, Direction::forward, 1e300);

  const double c0 = constant_cost(m, N);
  std::vector<double> integrand(static_cast<std::size_t>(grid.size()));
  for (Index k = 0; k < grid.size(); ++k) {
    const Law law = law_at(grid.node(k), true, k);
    const MatrixXd W = S.Q_hat + kron(I, MatrixXd(law.L.transpose() * p.R1 * law.L)) -
                       kron(one, MatrixXd(law.Sf.transpose() * p.R2 * law.Sf));
    const VectorXd w = -S.eta_hat - VectorXd(law.L.transpose() * p.R1 * law.o).replicate(N, 1) -
                       VectorXd(law.Sf.transpose() * p.R2 * law.of).replicate(N, 1);
    const double w0 = c0 + double(N) * law.o.dot(p.R1 * law.o) - double(N) * law.of.dot(p.R2 * law.of);
    const MatrixXd& Yk = Y.at_node(k);
    const VectorXd mu = Yk.col(nN);
    integrand[static_cast<std::size_t>(k)] =
        0.5 * (mu.dot(W * mu) + (W.cwiseProduct(Yk.leftCols(nN))).sum() + 2.0 * w.dot(mu) + w0);
  }
  const MatrixXd& YT = Y.at_node(grid.steps());
  const VectorXd muT = YT.col(nN);
  const double total = integrate_nodes(integrand, grid.step()) +
                       0.5 * (muT.dot(S.H_stack * muT) + (S.H_stack.cwiseProduct(YT.leftCols(nN))).sum());
  return total / double(N);
}

std::vector<GapRow> optimality_gap_sweep(const ValidatedModel& m, const RiccatiBundle& b,
                                         const ConsistencyProfile& profile, const std::vector<Index>& Ns) {
  std::vector<GapRow> rows;
  for (Index N : Ns) {
    GapRow row;
    row.N = N;
    row.centralized = solve_centralized_minimax(m, N, b.grid).value_per_agent;
    row.decentralized = decentralized_worstcase_value(m, b, profile, N);
    row.gap = row.decentralized - row.centralized;
    row.gap_sqrtN = row.gap * std::sqrt(double(N));
    rows.push_back(row);
  }
  return rows;
}

MatrixXd aggregate_stacked_are(const ValidatedModel& m, Index N) {
  if (m->horizon.is_finite()) throw std::invalid_argument("aggregate_stacked_are needs an infinite horizon");
  const StackedSystem S = build_stacked(m, N);
  const Index nN = S.A_check.rows();
  const MatrixXd As = S.A_check - 0.5 * m->horizon.rho * MatrixXd::Identity(nN, nN);
  const MatrixXd Sg = S.F_stack * m.R2inv() * S.F_stack.transpose() / double(N);
  const MatrixXd X = solve_care(As, Sg, MatrixXd(-S.Q_hat));
  return S.F_stack.transpose() * X * S.F_stack / double(N);
}

}  // namespace mfrc
