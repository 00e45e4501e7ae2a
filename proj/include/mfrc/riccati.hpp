#pragma once

#include <memory>
#include <optional>

#include "mfrc/model.hpp"
#include "mfrc/numerics.hpp"

namespace mfrc {

class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(std::string what, double t) : std::runtime_error(what + " escapes near t = " + std::to_string(t)), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

class NoStabilizingSolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoAdmissibleSolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix-valued function of time: a constant, or a tabulated path interpolated between nodes.
class Coefficient {
 public:
  Coefficient() = default;
  explicit Coefficient(MatrixXd value) : constant_(std::move(value)) {}
  explicit Coefficient(MatrixPath<double> path)
      : path_(std::make_shared<const MatrixPath<double>>(std::move(path))) {}

  bool is_constant() const { return !path_; }
  const MatrixPath<double>* path() const { return path_.get(); }

  MatrixXd operator()(double t) const { return path_ ? (*path_)(t) : constant_; }
  // Exact node value when tabulated; the constant otherwise.
  const MatrixXd& node(Index k) const { return path_ ? path_->at_node(k) : constant_; }

 private:
  MatrixXd constant_;
  std::shared_ptr<const MatrixPath<double>> path_;
};

struct RiccatiBundle {
  HorizonKind kind = HorizonKind::finite;
  TimeGrid<double> grid;
  Coefficient P, K;
  std::optional<Coefficient> Ptilde;
  // Where the P-tilde solve failed, if it did.
  std::optional<double> ptilde_escape;
  std::string ptilde_failure;
};

MatrixPath<double> solve_P_finite(const ValidatedModel& m, const TimeGrid<double>& grid);
MatrixPath<double> solve_K_finite(const ValidatedModel& m, const TimeGrid<double>& grid);
MatrixPath<double> solve_Ptilde_finite(const ValidatedModel& m, const Coefficient& P,
                                       const Coefficient& K, const TimeGrid<double>& grid);

MatrixXd solve_P_infinite(const ValidatedModel& m);
MatrixXd solve_K_infinite(const ValidatedModel& m);
MatrixXd solve_Ptilde_infinite(const ValidatedModel& m, const MatrixXd& P, const MatrixXd& K);

/// P and K must exist (BlowUpError / NoStabilizingSolutionError otherwise); P-tilde is
/// attached when it exists.
RiccatiBundle solve_riccati(const ValidatedModel& m, const TimeGrid<double>& grid);
RiccatiBundle solve_riccati(const ValidatedModel& m);

// G - R2^-1 P and A - B R1^-1 B^T K
MatrixXd Gbar(const ValidatedModel& m, const MatrixXd& P);
MatrixXd Abar(const ValidatedModel& m, const MatrixXd& K);

/// Stabilizing solution of A^T X + X A - X S X + C = 0 (A - S X Hurwitz).
MatrixXd solve_care(const MatrixXd& A, const MatrixXd& S, const MatrixXd& C);

/// X = V U^-1 solving Z21 + Z22 X - X Z11 - X Z12 X = 0, with [U; V] spanning the invariant
/// subspace of [[Z11, Z12], [Z21, Z22]] for its Z11.rows() leftmost eigenvalues.
MatrixXd solve_subspace_are(const MatrixXd& Z11, const MatrixXd& Z12, const MatrixXd& Z21,
                            const MatrixXd& Z22);

// Residuals of the finite-horizon P and infinite-horizon P ARE, in max-abs norm.
double P_are_residual(const ValidatedModel& m, const MatrixXd& P);
double K_are_residual(const ValidatedModel& m, const MatrixXd& K);
double Ptilde_are_residual(const ValidatedModel& m, const MatrixXd& P, const MatrixXd& K,
                           const MatrixXd& Pt);

}  // namespace mfrc
