#pragma once

#include <optional>

#include "mfrc/riccati.hpp"

namespace mfrc {

class SingularBoundaryMapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoAdmissibleYError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NewtonDivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `componentwise` follows the componentwise ODE system. `block_form` uses the compact block
/// matrices, which differ in M22(1,2) (P B R1^-1 B^T K) and M21(2,2) (0) and use no
/// transposes on the diagonal blocks of M22.
enum class BlockConvention { componentwise, block_form };

struct Blocks {
  MatrixXd M11;  // 2n x 2n
  MatrixXd M12;  // 2n x 3n
  MatrixXd M21;  // 3n x 2n
  MatrixXd M22;  // 3n x 3n, includes rho I for infinite horizon
  VectorXd e;    // (0, 0, -eta_bar, eta_bar, eta_bar)

  MatrixXd system() const;
};

Blocks assemble_blocks(const ValidatedModel& m, const MatrixXd& P, const MatrixXd& K,
                       BlockConvention convention = BlockConvention::componentwise);

enum class ConsistencyMethod { decoupling, shooting, stationary };

/// Node values of (xbar, l, sbar, phi, v) with their time derivatives.
class ConsistencyProfile {
 public:
  ConsistencyProfile() = default;
  ConsistencyProfile(TimeGrid<double> grid, Index n, MatrixXd states, MatrixXd slopes,
                     ConsistencyMethod method)
      : grid_(grid), n_(n), states_(std::move(states)), slopes_(std::move(slopes)), method_(method) {}

  const TimeGrid<double>& grid() const { return grid_; }
  Index n() const { return n_; }
  ConsistencyMethod method() const { return method_; }
  // 5n x (steps + 1)
  const MatrixXd& states() const { return states_; }
  const MatrixXd& slopes() const { return slopes_; }

  VectorXd state(Index k) const { return states_.col(k); }
  VectorXd xbar(Index k) const { return states_.col(k).segment(0, n_); }
  VectorXd l(Index k) const { return states_.col(k).segment(n_, n_); }
  VectorXd sbar(Index k) const { return states_.col(k).segment(2 * n_, n_); }
  VectorXd phi(Index k) const { return states_.col(k).segment(3 * n_, n_); }
  VectorXd v(Index k) const { return states_.col(k).segment(4 * n_, n_); }

  // Cubic Hermite interpolation; clamps to the last node past the end of the grid.
  VectorXd operator()(double t) const;

 private:
  TimeGrid<double> grid_;
  Index n_ = 0;
  MatrixXd states_, slopes_;
  ConsistencyMethod method_ = ConsistencyMethod::decoupling;
};

struct DecouplingSolution {
  Coefficient Y;      // 3n x 2n
  Coefficient alpha;  // 3n x 1
  double truncation = 0.0;  // infinite horizon only
};

struct ConsistencySolution {
  ConsistencyProfile profile;
  DecouplingSolution decoupling;
};

ConsistencySolution solve_consistency_finite(const ValidatedModel& m, const RiccatiBundle& bundle);

ConsistencyProfile solve_consistency_shooting(const ValidatedModel& m, const RiccatiBundle& bundle);

struct ZBlowup {
  std::optional<double> time;
  double t_end = 0.0;
  BlockConvention convention = BlockConvention::block_form;
  MatrixPath<double> Z;  // kept part of the coarsest integration
  std::vector<double> estimates;  // blow-up time per halving
};

/// Forward Z-equation on [0, t_end] using the bundle's step size; the blow-up time is refined
/// by step halving until two estimates agree to 1e-4.
ZBlowup detect_Z_blowup(const ValidatedModel& m, const RiccatiBundle& bundle, double t_end,
                        BlockConvention convention = BlockConvention::block_form);

/// Stationary Y and alpha, forward mean-field states on [0, T_trunc] with step `dt`.
ConsistencySolution solve_consistency_infinite(const ValidatedModel& m, const RiccatiBundle& bundle,
                                               double dt = 1e-3);

/// Max-norm of the central-difference residual of the 5n system at interior nodes.
double consistency_residual(const ConsistencyProfile& profile, const ValidatedModel& m,
                            const RiccatiBundle& bundle);

// Residual of M21 + M22 Y - Y M11 - Y M12 Y (M22 already shifted).
double Y_are_residual(const Blocks& b, const MatrixXd& Y);

}  // namespace mfrc
