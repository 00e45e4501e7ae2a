#pragma once

#include <cstdint>
#include <vector>

#include "mfrc/consistency.hpp"

namespace mfrc {

class GridMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingPtildeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnstableSimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// u(t, x) = -R1^-1 B^T (K x - P l + phi), tabulated at the profile nodes as
/// u = -gain(k) x + offset(k); linear in t between nodes.
class ControlLaw {
 public:
  ControlLaw() = default;
  ControlLaw(TimeGrid<double> grid, std::vector<MatrixXd> gain, std::vector<VectorXd> offset)
      : grid_(grid), gain_(std::move(gain)), offset_(std::move(offset)) {}

  const TimeGrid<double>& grid() const { return grid_; }
  const MatrixXd& gain(Index k) const { return gain_[static_cast<std::size_t>(k)]; }
  const VectorXd& offset(Index k) const { return offset_[static_cast<std::size_t>(k)]; }

  VectorXd at_node(Index k, const VectorXd& x) const { return -gain(k) * x + offset(k); }
  VectorXd operator()(double t, const VectorXd& x) const;

 private:
  TimeGrid<double> grid_;
  std::vector<MatrixXd> gain_;
  std::vector<VectorXd> offset_;
};

/// f(t, x_avg) = -R2^-1 (P x_avg + Pt (x_avg - xbar) + sbar), tabulated as
/// f = slope(k) x_avg + offset(k).
class DriftLaw {
 public:
  DriftLaw() = default;
  DriftLaw(TimeGrid<double> grid, std::vector<MatrixXd> slope, std::vector<VectorXd> offset,
           std::vector<MatrixXd> Ptilde, std::vector<VectorXd> xbar)
      : grid_(grid), slope_(std::move(slope)), offset_(std::move(offset)),
        Ptilde_(std::move(Ptilde)), xbar_(std::move(xbar)) {}

  const TimeGrid<double>& grid() const { return grid_; }
  const MatrixXd& slope(Index k) const { return slope_[static_cast<std::size_t>(k)]; }
  const VectorXd& offset(Index k) const { return offset_[static_cast<std::size_t>(k)]; }
  const MatrixXd& Ptilde(Index k) const { return Ptilde_[static_cast<std::size_t>(k)]; }
  const VectorXd& xbar(Index k) const { return xbar_[static_cast<std::size_t>(k)]; }

  VectorXd at_node(Index k, const VectorXd& x_avg) const { return slope(k) * x_avg + offset(k); }
  VectorXd operator()(double t, const VectorXd& x_avg) const;

 private:
  TimeGrid<double> grid_;
  std::vector<MatrixXd> slope_;
  std::vector<VectorXd> offset_;
  std::vector<MatrixXd> Ptilde_;
  std::vector<VectorXd> xbar_;
};

ControlLaw build_decentralized_law(const ValidatedModel& m, const RiccatiBundle& bundle,
                                   const ConsistencyProfile& profile);

DriftLaw build_worstcase_law(const ValidatedModel& m, const RiccatiBundle& bundle,
                             const ConsistencyProfile& profile);

struct SimConfig {
  Index N = 1;
  Index replications = 1;
  double dt = 0.0;  // 0 means the law's grid step
  std::uint64_t seed = 0;
  bool record_paths = false;
  // Seed stream used by each agent slot; empty means stream i for agent i.
  std::vector<std::uint64_t> stream_order;
};

struct SimResult {
  Index N = 0;
  Index replications = 0;
  TimeGrid<double> grid;
  MatrixXd agent_cost;  // replications x N
  VectorXd penalty;     // per replication: -1/2 int |f|^2_R2 (weighted), same for every agent
  MatrixXd drift_mean;  // n x nodes, mean over replications
  VectorXd error_mean;  // per node: mean of |xavg - xbar|^2 + |Pt (xavg - xbar)|^2
  VectorXd error_stderr;
  double error_sup = 0.0;
  double error_sup_stderr = 0.0;
  double max_mean_deviation = 0.0;  // max over replications and nodes of |xavg - xbar|_inf
  double tail_bound = 0.0;          // infinite horizon truncation
  std::vector<MatrixXd> mean_paths;  // per replication, n x nodes, when record_paths
};

/// N coupled agents driven by the law and the worst-case drift. Stochastic Heun
/// (predictor-corrector, shared noise increment) on the law grid with stride dt.
SimResult simulate(const ValidatedModel& m, const ControlLaw& law, const DriftLaw& drift,
                   const SimConfig& cfg);

struct CostStats {
  double mean = 0.0;
  double std_error = 0.0;
  double penalty_mean = 0.0;
  double penalty_std_error = 0.0;
};

/// Per-agent social cost (1/N) sum_i J_i over replications.
CostStats evaluate_social_cost(const SimResult& result);

struct SweepRow {
  Index N = 0;
  double estimate = 0.0;
  double std_error = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  double slope = 0.0;
  double intercept = 0.0;
  bool degenerate = false;
};

SweepReport meanfield_error_sweep(const ValidatedModel& m, const ControlLaw& law,
                                  const DriftLaw& drift, const std::vector<Index>& Ns,
                                  const SimConfig& cfg);

/// Least-squares slope and intercept of log(y) against log(x).
std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

/// Deterministic N-agent run with the inner worst case already taken:
/// f = -R2^-1 (P x^(N) + s) with s' = -(A + Gbar)^T s - P B u^(N) - eta_bar, s(T) = 0.
struct WorstCaseRun {
  MatrixXd x;  // nN x nodes
  MatrixXd s;  // n x nodes
  double cost = 0.0;
};

/// `u` holds the stacked controls at the bundle's grid nodes (rN x nodes), linear between
/// nodes. `homogeneous` drops eta so the run gives the quadratic part only.
WorstCaseRun worstcase_social_cost(const ValidatedModel& m, const RiccatiBundle& bundle,
                                   const MatrixXd& u, const VectorXd& x0, bool homogeneous = false);

struct DecompositionReport {
  double total = 0.0;        // J_soc(u_hat + u_tilde)
  double nominal = 0.0;      // sum_i J_i(u_hat)
  double perturbation = 0.0; // sum_i J~_i(u_tilde)
  double cross = 0.0;        // sum_i I_i
  double relative_error = 0.0;
};

/// Deterministic setting (no noise, all agents start at xbar0); u_tilde perturbs agent 0 only.
DecompositionReport cost_decomposition_check(const ValidatedModel& m, const RiccatiBundle& bundle,
                                             const ConsistencyProfile& profile, Index N,
                                             std::uint64_t seed, double scale = 1.0);

/// Random piecewise-linear path with `knots` intervals, sampled at the grid nodes.
MatrixXd random_piecewise_linear(Index rows, const TimeGrid<double>& grid, Index knots,
                                 std::uint64_t seed, std::uint64_t stream);

}  // namespace mfrc
