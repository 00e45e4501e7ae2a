#pragma once

#include <vector>

#include "mfrc/control.hpp"

namespace mfrc {

class TooLargeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotConcaveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StackedSystem {
  Index N = 0;
  MatrixXd A_check;  // I kron A + (1/N) 11^T kron G
  MatrixXd B_stack;  // I kron B
  MatrixXd F_stack;  // 1 kron I
  MatrixXd Q_hat;    // I kron Q - (1/N) 11^T kron Psi
  MatrixXd H_stack;  // I kron H
  VectorXd eta_hat;  // 1 kron eta_bar
  MatrixXd R_joint;  // diag(I kron R1, -N R2)
  MatrixXd sigma_stack;
};

StackedSystem build_stacked(const ValidatedModel& m, Index N);

struct BruteForceDrift {
  MatrixXd f;  // n x nodes
  double value = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
};

/// Maximizes the deterministic social cost over the drift, one n-vector per grid node.
/// Dynamics are discretized by Heun's method and the cost by the trapezoid rule; the
/// quadratic is maximized by conjugate gradients on its negation.
/// `u` is the stacked control (rN x nodes), `x0` the stacked initial state.
BruteForceDrift bruteforce_worstcase_drift(const ValidatedModel& m, const MatrixXd& u,
                                           const VectorXd& x0, const TimeGrid<double>& grid);

/// Deterministic social cost for given control and drift paths (linear between nodes),
/// integrated with RK4.
double raw_social_cost(const ValidatedModel& m, const MatrixXd& u, const MatrixXd& f,
                       const VectorXd& x0, const TimeGrid<double>& grid);

struct CentralizedMinimax {
  MatrixPath<double> value_matrix;  // [Pi | pi], nN x (nN + 1)
  double constant = 0.0;            // c(0)
  double value = 0.0;               // social value for i.i.d. initial states
  double value_per_agent = 0.0;
};

CentralizedMinimax solve_centralized_minimax(const ValidatedModel& m, Index N,
                                             const TimeGrid<double>& grid);

/// Per-agent expected social cost of the decentralized law against its realized worst-case
/// drift, from exact mean and covariance propagation.
double decentralized_worstcase_value(const ValidatedModel& m, const RiccatiBundle& bundle,
                                     const ConsistencyProfile& profile, Index N);

struct GapRow {
  Index N = 0;
  double centralized = 0.0;
  double decentralized = 0.0;
  double gap = 0.0;
  double gap_sqrtN = 0.0;
};

std::vector<GapRow> optimality_gap_sweep(const ValidatedModel& m, const RiccatiBundle& bundle,
                                         const ConsistencyProfile& profile,
                                         const std::vector<Index>& Ns);

/// Stabilizing solution of the stacked infinite-horizon ARE, averaged over agent blocks.
MatrixXd aggregate_stacked_are(const ValidatedModel& m, Index N);

}  // namespace mfrc
