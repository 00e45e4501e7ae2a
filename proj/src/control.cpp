#include "mfrc/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "mfrc/random.hpp"

namespace mfrc {

namespace {

void require_same_grid(const TimeGrid<double>& a, const TimeGrid<double>& b) {
  if (a.steps() != b.steps() || std::abs(a.t0() - b.t0()) > 1e-12 || std::abs(a.t1() - b.t1()) > 1e-12)
    throw GridMismatchError("bundle and profile grids differ");
}

const TimeGrid<double>& law_grid(const RiccatiBundle& b, const ConsistencyProfile& p) {
  if (b.kind == HorizonKind::finite) require_same_grid(b.grid, p.grid());
  return p.grid();
}

VectorXd lerp_col(const MatrixXd& u, const TimeGrid<double>& grid, double t) {
  const Index k = grid.interval(t);
  const double w = std::clamp((t - grid.node(k)) / grid.step(), 0.0, 1.0);
  return (1.0 - w) * u.col(k) + w * u.col(k + 1);
}

// Mean over columns, each row summed in sorted order so the result does not depend on the
// order of the agents.
void sorted_row_mean(const MatrixXd& X, VectorXd& out, std::vector<double>& buf) {
  const Index N = X.cols();
  buf.resize(static_cast<std::size_t>(N));
  for (Index i = 0; i < X.rows(); ++i) {
    for (Index j = 0; j < N; ++j) buf[static_cast<std::size_t>(j)] = X(i, j);
    std::sort(buf.begin(), buf.end());
    double s = 0.0;
    for (double v : buf) s += v;
    out(i) = s / double(N);
  }
}

VectorXd block_mean(const VectorXd& x, Index n) {
  const Index N = x.size() / n;
  VectorXd avg = VectorXd::Zero(n);
  for (Index i = 0; i < N; ++i) avg += x.segment(i * n, n);
  return avg / double(N);
}

}  // namespace

VectorXd ControlLaw::operator()(double t, const VectorXd& x) const {
  const Index k = grid_.interval(t);
  const double w = std::clamp((t - grid_.node(k)) / grid_.step(), 0.0, 1.0);
  if (w == 0.0) return at_node(k, x);
  if (w == 1.0) return at_node(k + 1, x);
  return (1.0 - w) * at_node(k, x) + w * at_node(k + 1, x);
}

VectorXd DriftLaw::operator()(double t, const VectorXd& x_avg) const {
  const Index k = grid_.interval(t);
  const double w = std::clamp((t - grid_.node(k)) / grid_.step(), 0.0, 1.0);
  if (w == 0.0) return at_node(k, x_avg);
  if (w == 1.0) return at_node(k + 1, x_avg);
  return (1.0 - w) * at_node(k, x_avg) + w * at_node(k + 1, x_avg);
}

ControlLaw build_decentralized_law(const ValidatedModel& m, const RiccatiBundle& b,
                                   const ConsistencyProfile& profile) {
  const TimeGrid<double>& grid = law_grid(b, profile);
  const MatrixXd RB = m.R1inv() * m->B.transpose();
  std::vector<MatrixXd> gain;
  std::vector<VectorXd> offset;
  for (Index k = 0; k < grid.size(); ++k) {
    gain.push_back(RB * b.K.node(k));
    offset.push_back(-RB * (-b.P.node(k) * profile.l(k) + profile.phi(k)));
  }
  return ControlLaw(grid, std::move(gain), std::move(offset));
}

DriftLaw build_worstcase_law(const ValidatedModel& m, const RiccatiBundle& b,
                             const ConsistencyProfile& profile) {
  if (!b.Ptilde) throw MissingPtildeError("P-tilde is not available: " + b.ptilde_failure);
  const TimeGrid<double>& grid = law_grid(b, profile);
  const MatrixXd& Ri = m.R2inv();
  std::vector<MatrixXd> slope, Pt;
  std::vector<VectorXd> offset, xbar;
  for (Index k = 0; k < grid.size(); ++k) {
    const MatrixXd& Ptk = b.Ptilde->node(k);
    slope.push_back(-Ri * (b.P.node(k) + Ptk));
    offset.push_back(Ri * (Ptk * profile.xbar(k) - profile.sbar(k)));
    Pt.push_back(Ptk);
    xbar.push_back(profile.xbar(k));
  }
  return DriftLaw(grid, std::move(slope), std::move(offset), std::move(Pt), std::move(xbar));
}

SimResult simulate(const ValidatedModel& m, const ControlLaw& law, const DriftLaw& drift,
                   const SimConfig& cfg) {
  if (cfg.N < 1 || cfg.replications < 1) throw std::invalid_argument("simulate: need N >= 1 and replications >= 1");
  require_same_grid(law.grid(), drift.grid());
  if (!cfg.stream_order.empty() && static_cast<Index>(cfg.stream_order.size()) != cfg.N)
    throw std::invalid_argument("simulate: stream_order must list one stream per agent");

  const TimeGrid<double>& lg = law.grid();
  Index stride = 1;
  if (cfg.dt > 0) {
    stride = std::llround(cfg.dt / lg.step());
    if (stride < 1 || std::abs(double(stride) * lg.step() - cfg.dt) > 1e-9 * cfg.dt || lg.steps() % stride != 0)
      throw GridMismatchError("simulate: dt must be a multiple of the law grid step dividing the span");
  }
  const Index nodes = lg.steps() / stride;
  const TimeGrid<double> grid(lg.t0(), lg.t1(), nodes);
  const double dt = grid.step();
  const double sqdt = std::sqrt(dt);

  const ModelParams& p = m.params();
  const Index n = p.n, d = p.d, N = cfg.N, R = cfg.replications;
  const bool finite = p.horizon.is_finite();
  const double rho = finite ? 0.0 : p.horizon.rho;

  SimResult res;
  res.N = N;
  res.replications = R;
  res.grid = grid;
  res.agent_cost = MatrixXd::Zero(R, N);
  res.penalty = VectorXd::Zero(R);
  res.drift_mean = MatrixXd::Zero(n, nodes + 1);
  VectorXd err_sum = VectorXd::Zero(nodes + 1), err_sq = VectorXd::Zero(nodes + 1);
  double end_running = 0.0;

  MatrixXd X(n, N), Xp(n, N), U(p.r, N), a(n, N), ap(n, N), W(n, N), Z(d, N), dev(n, N);
  VectorXd xavg(n), f(n), col(n);
  std::vector<double> buf;

  // Drift of every agent at law node k; leaves the mean, controls and drift in xavg, U, f.
  auto evaluate = [&](Index j, const MatrixXd& S, MatrixXd& out) {
    const Index k = j * stride;
    sorted_row_mean(S, xavg, buf);
    U.noalias() = -law.gain(k) * S;
    U.colwise() += law.offset(k);
    f.noalias() = drift.slope(k) * xavg;
    f += drift.offset(k);
    col.noalias() = p.G * xavg;
    col += f;
    out.noalias() = p.A * S;
    out.noalias() += p.B * U;
    out.colwise() += col;
  };

  for (Index rep = 0; rep < R; ++rep) {
    std::vector<std::mt19937_64> rng;
    rng.reserve(static_cast<std::size_t>(N));
    for (Index i = 0; i < N; ++i) {
      const std::uint64_t stream = cfg.stream_order.empty() ? std::uint64_t(i) : cfg.stream_order[static_cast<std::size_t>(i)];
      rng.push_back(make_stream(cfg.seed, std::uint64_t(rep), stream));
    }
    std::vector<std::normal_distribution<double>> normal(static_cast<std::size_t>(N));
    for (Index i = 0; i < N; ++i)
      for (Index c = 0; c < n; ++c)
        X(c, i) = p.xbar0(c) + p.init_spread * normal[std::size_t(i)](rng[std::size_t(i)]);

    MatrixXd path;
    if (cfg.record_paths) path.resize(n, nodes + 1);
    double penalty = 0.0;

    for (Index j = 0;; ++j) {
      const double t = grid.node(j);
      evaluate(j, X, a);

      const double weight = (j == 0 || j == nodes ? 0.5 * dt : dt) * (rho > 0 ? std::exp(-rho * t) : 1.0);
      const double fpen = f.dot(p.R2 * f);
      dev = X;
      dev.colwise() -= p.Gamma * xavg + p.eta;
      const VectorXd running = (dev.cwiseProduct(p.Q * dev)).colwise().sum().transpose() +
                               (U.cwiseProduct(p.R1 * U)).colwise().sum().transpose() -
                               VectorXd::Constant(N, fpen);
      res.agent_cost.row(rep) += 0.5 * weight * running.transpose();
      penalty -= 0.5 * weight * fpen;
      if (j == nodes) end_running += running.mean() / double(R);

      const VectorXd xi = xavg - drift.xbar(j * stride);
      const double e = xi.squaredNorm() + (drift.Ptilde(j * stride) * xi).squaredNorm();
      err_sum(j) += e;
      err_sq(j) += e * e;
      res.drift_mean.col(j) += f / double(R);
      res.max_mean_deviation = std::max(res.max_mean_deviation, xi.cwiseAbs().maxCoeff());
      if (cfg.record_paths) path.col(j) = xavg;

      if (j == nodes) break;

      for (Index i = 0; i < N; ++i)
        for (Index c = 0; c < d; ++c) Z(c, i) = normal[std::size_t(i)](rng[std::size_t(i)]);
      W.noalias() = sqdt * p.sigma * Z;
      Xp = X + dt * a + W;
      evaluate(j + 1, Xp, ap);
      X += 0.5 * dt * (a + ap) + W;
      if (!X.allFinite() || X.cwiseAbs().maxCoeff() > 1e10)
        throw UnstableSimulationError("simulate: state norm exceeded 1e10 at t = " + std::to_string(grid.node(j + 1)));
    }

    if (finite)
      for (Index i = 0; i < N; ++i) res.agent_cost(rep, i) += 0.5 * X.col(i).dot(p.H * X.col(i));
    res.penalty(rep) = penalty;
    if (cfg.record_paths) res.mean_paths.push_back(std::move(path));
  }

  res.error_mean = err_sum / double(R);
  res.error_stderr = VectorXd::Zero(nodes + 1);
  if (R > 1) {
    for (Index j = 0; j <= nodes; ++j) {
      const double var = std::max(0.0, (err_sq(j) - double(R) * res.error_mean(j) * res.error_mean(j)) / double(R - 1));
      res.error_stderr(j) = std::sqrt(var / double(R));
    }
  }
  Index at = 0;
  res.error_sup = res.error_mean.maxCoeff(&at);
  res.error_sup_stderr = res.error_stderr(at);

  if (!finite) {
    if (rho > 0)
      res.tail_bound = std::exp(-rho * grid.t1()) * std::abs(end_running) / rho;
    else
      res.tail_bound = std::abs(end_running) <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return res;
}

CostStats evaluate_social_cost(const SimResult& r) {
  CostStats s;
  const Index R = r.replications;
  const VectorXd per_rep = r.agent_cost.rowwise().mean();
  s.mean = per_rep.mean();
  s.penalty_mean = r.penalty.mean();
  if (R > 1) {
    s.std_error = std::sqrt((per_rep.array() - s.mean).square().sum() / double(R - 1) / double(R));
    s.penalty_std_error = std::sqrt((r.penalty.array() - s.penalty_mean).square().sum() / double(R - 1) / double(R));
  }
  return s;
}

std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_fit: need matching samples");
  const double k = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  return {slope, (sy - slope * sx) / k};
}

SweepReport meanfield_error_sweep(const ValidatedModel& m, const ControlLaw& law, const DriftLaw& drift,
                                  const std::vector<Index>& Ns, const SimConfig& cfg) {
  if (Ns.size() < 3) throw std::invalid_argument("sweep needs at least three agent counts");
  for (Index N : Ns)
    if (N < 8) throw std::invalid_argument("sweep agent counts must be at least 8");
  SweepReport rep;
  std::vector<double> xs, ys;
  for (Index N : Ns) {
    SimConfig c = cfg;
    c.N = N;
    c.stream_order.clear();
    const SimResult r = simulate(m, law, drift, c);
    rep.rows.push_back({N, r.error_sup, r.error_sup_stderr});
    xs.push_back(double(N));
    ys.push_back(r.error_sup);
    if (!(r.error_sup > 1e-300)) rep.degenerate = true;
  }
  if (rep.degenerate) {
    rep.slope = rep.intercept = std::numeric_limits<double>::quiet_NaN();
  } else {
    std::tie(rep.slope, rep.intercept) = loglog_fit(xs, ys);
  }
  return rep;
}

WorstCaseRun worstcase_social_cost(const ValidatedModel& m, const RiccatiBundle& b, const MatrixXd& u,
                                   const VectorXd& x0, bool homogeneous) {
  if (b.kind != HorizonKind::finite) throw std::invalid_argument("finite-horizon bundle required");
  const ModelParams& p = m.params();
  const TimeGrid<double>& grid = b.grid;
  const Index n = p.n, r = p.r, N = u.rows() / r;
  if (u.rows() != r * N || u.cols() != grid.size() || x0.size() != n * N)
    throw ModelError(ModelErrorKind::dimension_mismatch, "u/x0", "stacked control or state has the wrong shape");
  const VectorXd eta_bar = homogeneous ? VectorXd::Zero(n) : derived_weights(m).eta_bar;
  const VectorXd eta = homogeneous ? VectorXd::Zero(n) : p.eta;

  MatrixXd uavg = MatrixXd::Zero(r, grid.size());
  for (Index i = 0; i < N; ++i) uavg += u.middleRows(i * r, r);
  uavg /= double(N);

  auto s_field = [&](double t, const MatrixXd& s) -> MatrixXd {
    const MatrixXd P = b.P(t);
    return -(p.A + Gbar(m, P)).transpose() * s - P * p.B * lerp_col(uavg, grid, t) - eta_bar;
  };
  const MatrixPath<double> s =
      integrate_matrix_ode<double>(s_field, MatrixXd(MatrixXd::Zero(n, 1)), grid, Direction::backward, 1e300);

  auto x_field = [&](double t, const MatrixXd& x) -> MatrixXd {
    const VectorXd avg = block_mean(x, n);
    const VectorXd common = p.G * avg - m.R2inv() * (b.P(t) * avg + s(t));
    const VectorXd ut = lerp_col(u, grid, t);
    MatrixXd dx(n * N, 1);
    for (Index i = 0; i < N; ++i)
      dx.middleRows(i * n, n) = p.A * x.middleRows(i * n, n) + p.B * ut.segment(i * r, r) + common;
    return dx;
  };
  const MatrixPath<double> x = integrate_matrix_ode<double>(x_field, MatrixXd(x0), grid, Direction::forward, 1e300);

  WorstCaseRun run;
  run.x.resize(n * N, grid.size());
  run.s.resize(n, grid.size());
  std::vector<double> f(static_cast<std::size_t>(grid.size()));
  for (Index k = 0; k < grid.size(); ++k) {
    run.x.col(k) = x.at_node(k);
    run.s.col(k) = s.at_node(k);
    const VectorXd avg = block_mean(run.x.col(k), n);
    const VectorXd w = b.P.node(k) * avg + run.s.col(k);
    double v = -double(N) * w.dot(m.R2inv() * w);
    for (Index i = 0; i < N; ++i) {
      const VectorXd dev = run.x.col(k).segment(i * n, n) - p.Gamma * avg - eta;
      const VectorXd ui = u.col(k).segment(i * r, r);
      v += dev.dot(p.Q * dev) + ui.dot(p.R1 * ui);
    }
    f[static_cast<std::size_t>(k)] = 0.5 * v;
  }
  run.cost = integrate_nodes(f, grid.step());
  for (Index i = 0; i < N; ++i) {
    const VectorXd xT = run.x.col(grid.steps()).segment(i * n, n);
    run.cost += 0.5 * xT.dot(p.H * xT);
  }
  return run;
}

MatrixXd random_piecewise_linear(Index rows, const TimeGrid<double>& grid, Index knots,
                                 std::uint64_t seed, std::uint64_t stream) {
  auto rng = make_stream(seed, stream);
  std::normal_distribution<double> normal;
  MatrixXd knot(rows, knots + 1);
  for (Index c = 0; c <= knots; ++c)
    for (Index i = 0; i < rows; ++i) knot(i, c) = normal(rng);
  const TimeGrid<double> coarse(grid.t0(), grid.t1(), knots);
  MatrixXd out(rows, grid.size());
  for (Index k = 0; k < grid.size(); ++k) out.col(k) = lerp_col(knot, coarse, grid.node(k));
  return out;
}

DecompositionReport cost_decomposition_check(const ValidatedModel& m, const RiccatiBundle& b,
                                             const ConsistencyProfile& profile, Index N,
                                             std::uint64_t seed, double scale) {
  if (N < 1) throw std::invalid_argument("decomposition check needs N >= 1");
  const ModelParams& p = m.params();
  const Index n = p.n, r = p.r;
  const TimeGrid<double>& grid = b.grid;
  const ControlLaw law = build_decentralized_law(m, b, profile);

  MatrixXd u_hat(r * N, grid.size());
  for (Index k = 0; k < grid.size(); ++k) {
    const VectorXd uk = law.at_node(k, profile.xbar(k));
    for (Index i = 0; i < N; ++i) u_hat.col(k).segment(i * r, r) = uk;
  }
  MatrixXd u_tilde = MatrixXd::Zero(r * N, grid.size());
  u_tilde.topRows(r) = scale * random_piecewise_linear(r, grid, 16, seed, 0);
  const VectorXd x0 = p.xbar0.replicate(N, 1);

  const WorstCaseRun hat = worstcase_social_cost(m, b, u_hat, x0);
  const WorstCaseRun total = worstcase_social_cost(m, b, MatrixXd(u_hat + u_tilde), x0);
  const WorstCaseRun til = worstcase_social_cost(m, b, u_tilde, VectorXd::Zero(n * N), true);

  std::vector<double> f(static_cast<std::size_t>(grid.size()));
  for (Index k = 0; k < grid.size(); ++k) {
    const VectorXd xh = hat.x.col(k), xt = til.x.col(k);
    const VectorXd ah = block_mean(xh, n), at = block_mean(xt, n);
    const VectorXd wh = b.P.node(k) * ah + hat.s.col(k);
    const VectorXd wt = b.P.node(k) * at + til.s.col(k);
    double v = -double(N) * wh.dot(m.R2inv() * wt);
    for (Index i = 0; i < N; ++i) {
      const VectorXd dh = xh.segment(i * n, n) - p.Gamma * ah - p.eta;
      const VectorXd dtl = xt.segment(i * n, n) - p.Gamma * at;
      v += dh.dot(p.Q * dtl) + u_hat.col(k).segment(i * r, r).dot(p.R1 * u_tilde.col(k).segment(i * r, r));
    }
    f[static_cast<std::size_t>(k)] = v;
  }
  double cross = integrate_nodes(f, grid.step());
  for (Index i = 0; i < N; ++i)
    cross += hat.x.col(grid.steps()).segment(i * n, n).dot(p.H * til.x.col(grid.steps()).segment(i * n, n));

  DecompositionReport rep;
  rep.total = total.cost;
  rep.nominal = hat.cost;
  rep.perturbation = til.cost;
  rep.cross = cross;
  const double scale_ref = std::abs(rep.nominal) + std::abs(rep.perturbation) + std::abs(rep.cross);
  const double gap = std::abs(rep.total - (rep.nominal + rep.perturbation + rep.cross));
  rep.relative_error = scale_ref > 0 ? gap / scale_ref : gap;
  return rep;
}

}  // namespace mfrc
