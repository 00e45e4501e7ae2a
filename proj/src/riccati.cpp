#include "mfrc/riccati.hpp"

#include <algorithm>

namespace mfrc {

namespace {

MatrixXd identity(Index n) { return MatrixXd::Identity(n, n); }

MatrixXd sym(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Terms of the three Riccati equations, written as  X' = -rhs(X).
MatrixXd P_rhs(const ValidatedModel& m, const MatrixXd& QIG, const MatrixXd& P, double shift) {
  const MatrixXd AG = m->A + m->G - shift * identity(m.n());
  return AG.transpose() * P + P * AG - P * m.R2inv() * P - QIG;
}

MatrixXd K_rhs(const ValidatedModel& m, const MatrixXd& K, double shift) {
  const MatrixXd As = m->A - shift * identity(m.n());
  return As.transpose() * K + K * As - K * m.BRB() * K + m->Q;
}

MatrixXd Ptilde_rhs(const ValidatedModel& m, const MatrixXd& P, const MatrixXd& K,
                    const MatrixXd& Pt, double rho) {
  const MatrixXd Gb = Gbar(m, P);
  const MatrixXd E = Abar(m, K) + Gb;
  const MatrixXd F = m->A + Gb - rho * identity(m.n());
  return Pt * E + F.transpose() * Pt - Pt * m.R2inv() * Pt - P * m.BRB() * K;
}

}  // namespace

MatrixXd Gbar(const ValidatedModel& m, const MatrixXd& P) { return m->G - m.R2inv() * P; }

MatrixXd Abar(const ValidatedModel& m, const MatrixXd& K) { return m->A - m.BRB() * K; }

MatrixPath<double> solve_P_finite(const ValidatedModel& m, const TimeGrid<double>& grid) {
  const MatrixXd QIG = derived_weights(m).QIG;
  auto field = [&](double, const MatrixXd& P) -> MatrixXd { return -P_rhs(m, QIG, P, 0.0); };
  return integrate_matrix_ode<double>(field, MatrixXd(-m->H), grid, Direction::backward);
}

MatrixPath<double> solve_K_finite(const ValidatedModel& m, const TimeGrid<double>& grid) {
  auto field = [&](double, const MatrixXd& K) -> MatrixXd { return -K_rhs(m, K, 0.0); };
  return integrate_matrix_ode<double>(field, MatrixXd(m->H), grid, Direction::backward);
}

MatrixPath<double> solve_Ptilde_finite(const ValidatedModel& m, const Coefficient& P,
                                       const Coefficient& K, const TimeGrid<double>& grid) {
  auto field = [&](double t, const MatrixXd& Pt) -> MatrixXd {
    return -Ptilde_rhs(m, P(t), K(t), Pt, 0.0);
  };
  return integrate_matrix_ode<double>(field, MatrixXd(MatrixXd::Zero(m.n(), m.n())), grid,
                                      Direction::backward);
}

MatrixXd solve_subspace_are(const MatrixXd& Z11, const MatrixXd& Z12, const MatrixXd& Z21,
                            const MatrixXd& Z22) {
  const Index k = Z11.rows();
  const Index m = k + Z22.rows();
  MatrixXd Z(m, m);
  Z << Z11, Z12, Z21, Z22;

  VectorXd re = eigenvalues(Z).real();
  std::sort(re.data(), re.data() + re.size());
  const double scale = std::max(1.0, Z.cwiseAbs().maxCoeff());
  if (re(k) - re(k - 1) <= 1e-9 * scale)
    throw NoStabilizingSolutionError("invariant subspace: leftmost eigenvalues are not separated");
  const double cut = 0.5 * (re(k - 1) + re(k));

  auto schur = ordered_schur(Z, [cut](std::complex<double> z) { return z.real() < cut; });
  if (schur.selected != k)
    throw NoStabilizingSolutionError("invariant subspace: reordering selected the wrong dimension");
  const Eigen::MatrixXcd U = schur.U.topLeftCorner(k, k);
  const Eigen::MatrixXcd V = schur.U.block(k, 0, m - k, k);
  Eigen::MatrixXcd X;
  try {
    X = solve_linear(U.transpose().eval(), V.transpose().eval()).transpose();
  } catch (const SingularError&) {
    throw NoStabilizingSolutionError("invariant subspace is not the graph of a matrix");
  }
  if (!X.allFinite() || X.imag().cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, X.cwiseAbs().maxCoeff()))
    throw NoStabilizingSolutionError("invariant subspace solution is not real");
  return X.real();
}

MatrixXd solve_care(const MatrixXd& A, const MatrixXd& S, const MatrixXd& C) {
  const Index n = A.rows();
  MatrixXd H(2 * n, 2 * n);
  H << A, -S, -C, -A.transpose();
  const VectorXd re = eigenvalues(H).real();
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if (re.cwiseAbs().minCoeff() <= 1e-9 * scale)
    throw NoStabilizingSolutionError("Hamiltonian has eigenvalues on the imaginary axis");
  if ((re.array() < 0).count() != n)
    throw NoStabilizingSolutionError("Hamiltonian stable subspace has the wrong dimension");
  MatrixXd X = sym(solve_subspace_are(A, -S, -C, -A.transpose()));
  if (!is_hurwitz(MatrixXd(A - S * X)))
    throw NoStabilizingSolutionError("closed loop is not Hurwitz");
  return X;
}

MatrixXd solve_P_infinite(const ValidatedModel& m) {
  const MatrixXd As = m->A + m->G - 0.5 * m->horizon.rho * identity(m.n());
  return solve_care(As, m.R2inv(), MatrixXd(-derived_weights(m).QIG));
}

MatrixXd solve_K_infinite(const ValidatedModel& m) {
  const MatrixXd As = m->A - 0.5 * m->horizon.rho * identity(m.n());
  return solve_care(As, m.BRB(), m->Q);
}

MatrixXd solve_Ptilde_infinite(const ValidatedModel& m, const MatrixXd& P, const MatrixXd& K) {
  const Index n = m.n();
  const double rho = m->horizon.rho;
  const MatrixXd Gb = Gbar(m, P);
  const MatrixXd E = Abar(m, K) + Gb;
  const MatrixXd F = m->A + Gb - rho * identity(n);
  const MatrixXd C = P * m.BRB() * K;
  MatrixXd X;
  try {
    X = solve_subspace_are(E, -m.R2inv(), C, -F.transpose());
  } catch (const NoStabilizingSolutionError& e) {
    throw NoAdmissibleSolutionError(std::string("P-tilde: ") + e.what());
  }
  const MatrixXd half = 0.5 * rho * identity(n);
  if (!is_hurwitz(MatrixXd(E - m.R2inv() * X - half)))
    throw NoAdmissibleSolutionError("P-tilde: Abar + Gbar - R2^-1 Pt - rho/2 is not Hurwitz");
  if (!is_hurwitz(MatrixXd(m->A + Gb - m.R2inv() * X - half)))
    throw NoAdmissibleSolutionError("P-tilde: A + Gbar - R2^-1 Pt - rho/2 is not Hurwitz");
  return X;
}

RiccatiBundle solve_riccati(const ValidatedModel& m, const TimeGrid<double>& grid) {
  RiccatiBundle b;
  if (!m->horizon.is_finite()) return solve_riccati(m);
  b.kind = HorizonKind::finite;
  b.grid = grid;
  MatrixPath<double> P = solve_P_finite(m, grid);
  if (!P.complete()) throw BlowUpError("P", *P.blowup_time());
  MatrixPath<double> K = solve_K_finite(m, grid);
  if (!K.complete()) throw BlowUpError("K", *K.blowup_time());
  b.P = Coefficient(std::move(P));
  b.K = Coefficient(std::move(K));
  MatrixPath<double> Pt = solve_Ptilde_finite(m, b.P, b.K, grid);
  if (Pt.complete()) {
    b.Ptilde = Coefficient(std::move(Pt));
  } else {
    b.ptilde_escape = *Pt.blowup_time();
    b.ptilde_failure = "P-tilde escapes near t = " + std::to_string(*b.ptilde_escape);
  }
  return b;
}

RiccatiBundle solve_riccati(const ValidatedModel& m) {
  if (m->horizon.is_finite()) {
    return solve_riccati(m, TimeGrid<double>(0.0, m->horizon.T, 2000));
  }
  RiccatiBundle b;
  b.kind = HorizonKind::infinite;
  const MatrixXd P = solve_P_infinite(m);
  const MatrixXd K = solve_K_infinite(m);
  b.P = Coefficient(P);
  b.K = Coefficient(K);
  try {
    b.Ptilde = Coefficient(solve_Ptilde_infinite(m, P, K));
  } catch (const NoAdmissibleSolutionError& e) {
    b.ptilde_failure = e.what();
  }
  return b;
}

double P_are_residual(const ValidatedModel& m, const MatrixXd& P) {
  return P_rhs(m, derived_weights(m).QIG, P, 0.5 * m->horizon.rho).cwiseAbs().maxCoeff();
}

double K_are_residual(const ValidatedModel& m, const MatrixXd& K) {
  return K_rhs(m, K, 0.5 * m->horizon.rho).cwiseAbs().maxCoeff();
}

double Ptilde_are_residual(const ValidatedModel& m, const MatrixXd& P, const MatrixXd& K,
                           const MatrixXd& Pt) {
  return Ptilde_rhs(m, P, K, Pt, m->horizon.rho).cwiseAbs().maxCoeff();
}

}  // namespace mfrc
