#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>

#include "mfrc/riccati.hpp"

namespace mfrc {

enum class Condition { A2prime_det, A2prime_riccati, A5, A6, P2probe };

std::string to_string(Condition c);

struct ConvexityReport {
  Condition condition = Condition::A2prime_det;
  bool holds = false;
  std::optional<double> witness_time;
  std::optional<std::complex<double>> witness_eigenvalue;
  std::optional<int> witness_direction;
  // Test-specific margin: smallest determinant, smallest |Re lambda|, smallest Rayleigh
  // quotient, or spectral abscissa.
  double margin = 0.0;
  std::string note;
};

/// Determinant test over time-to-go tau in [0, T]; the witness is reported as calendar
/// time T - tau*.
ConvexityReport check_A2prime_det(const ValidatedModel& m, Index samples = 1000);

/// Existence of the P Riccati solution on the grid; witness is its blow-up time.
ConvexityReport check_A2prime_riccati(const ValidatedModel& m, const TimeGrid<double>& grid);

/// Infinite horizon: no imaginary-axis eigenvalues of the P Hamiltonian and a
/// stabilizing solution.
ConvexityReport check_infinite_convexity(const ValidatedModel& m);

/// A + G - rho/2 I Hurwitz.
ConvexityReport check_A6(const ValidatedModel& m);

/// Evaluates the perturbation cost along random piecewise-linear directions of unit L2 norm.
/// Numerical evidence only; a passing probe does not prove convexity.
ConvexityReport probe_P2_convexity(const ValidatedModel& m, const RiccatiBundle& bundle,
                                   int directions, std::uint64_t seed);

// Value of the symmetric perturbation cost for a control perturbation given at grid nodes
// (r x (steps+1)), linear between nodes.
double perturbation_cost(const ValidatedModel& m, const RiccatiBundle& bundle, const MatrixXd& u);

}  // namespace mfrc
