#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace mfrc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteFieldError : public NumericsError {
 public:
  explicit NonFiniteFieldError(double t)
      : NumericsError("vector field is not finite at t = " + std::to_string(t)), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

class OverflowError : public NumericsError {
 public:
  using NumericsError::NumericsError;
};

class NoConvergenceError : public NumericsError {
 public:
  using NumericsError::NumericsError;
};

class SingularError : public NumericsError {
 public:
  using NumericsError::NumericsError;
};

/// Uniform grid t0 < t1 with `steps` intervals.
template <typename Scalar = double>
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(Scalar t0, Scalar t1, Index steps) : t0_(t0), t1_(t1), steps_(steps) {
    if (!(t1 > t0) || !std::isfinite(static_cast<double>(t1 - t0)))
      throw std::invalid_argument("TimeGrid: need finite t0 < t1");
    if (steps < 1) throw std::invalid_argument("TimeGrid: need at least one step");
  }

  Scalar t0() const { return t0_; }
  Scalar t1() const { return t1_; }
  Index steps() const { return steps_; }
  Index size() const { return steps_ + 1; }
  Scalar step() const { return (t1_ - t0_) / Scalar(steps_); }

  Scalar node(Index k) const {
    if (k == steps_) return t1_;
    return t0_ + Scalar(k) * step();
  }

  // Interval index k with node(k) <= t <= node(k+1), clamped to the grid.
  Index interval(Scalar t) const {
    const Scalar s = (t - t0_) / step();
    Index k = static_cast<Index>(std::floor(static_cast<double>(s)));
    return std::clamp<Index>(k, 0, steps_ - 1);
  }

  TimeGrid refined(Index factor) const { return TimeGrid(t0_, t1_, steps_ * factor); }

 private:
  Scalar t0_ = Scalar(0);
  Scalar t1_ = Scalar(1);
  Index steps_ = 1;
};

enum class Direction { forward, backward };

/// Node values of a matrix ODE solution with the field evaluated at each node.
/// Nodes outside [first_node(), last_node()] were not reached (escape).
template <typename Scalar = double>
class MatrixPath {
 public:
  using Matrix = MatrixX<Scalar>;

  MatrixPath() = default;
  MatrixPath(TimeGrid<Scalar> grid, Index first, std::vector<Matrix> values,
             std::vector<Matrix> slopes, std::optional<Index> escape = std::nullopt)
      : grid_(grid), first_(first), values_(std::move(values)), slopes_(std::move(slopes)),
        escape_(escape) {
    if (values_.empty() || values_.size() != slopes_.size())
      throw std::invalid_argument("MatrixPath: values and slopes must be non-empty and aligned");
  }

  static MatrixPath constant(const TimeGrid<Scalar>& grid, const Matrix& value) {
    std::vector<Matrix> v(grid.size(), value);
    std::vector<Matrix> s(grid.size(), Matrix::Zero(value.rows(), value.cols()));
    return MatrixPath(grid, 0, std::move(v), std::move(s));
  }

  const TimeGrid<Scalar>& grid() const { return grid_; }
  Index rows() const { return values_.front().rows(); }
  Index cols() const { return values_.front().cols(); }
  Index size() const { return static_cast<Index>(values_.size()); }
  Index first_node() const { return first_; }
  Index last_node() const { return first_ + size() - 1; }

  bool complete() const { return !escape_.has_value(); }
  std::optional<Index> escape_node() const { return escape_; }

  // Time of the kept node next to the escape.
  std::optional<Scalar> blowup_time() const {
    if (!escape_) return std::nullopt;
    return *escape_ < first_ ? grid_.node(first_) : grid_.node(last_node());
  }

  bool contains(Index k) const { return k >= first_ && k <= last_node(); }

  const Matrix& at_node(Index k) const { return values_.at(static_cast<std::size_t>(k - first_)); }
  const Matrix& slope_at_node(Index k) const {
    return slopes_.at(static_cast<std::size_t>(k - first_));
  }

  // Cubic Hermite interpolation on the kept range.
  Matrix operator()(Scalar t) const {
    const Scalar h = grid_.step();
    const Scalar lo = grid_.node(first_);
    const Scalar hi = grid_.node(last_node());
    const Scalar slack = h * Scalar(1e-9);
    if (t < lo - slack || t > hi + slack)
      throw std::out_of_range("MatrixPath: t outside the computed range");
    if (size() == 1) return values_.front();
    t = std::clamp(t, lo, hi);
    Index k = std::clamp<Index>(grid_.interval(t), first_, last_node() - 1);
    const Scalar w = (t - grid_.node(k)) / h;
    if (w == Scalar(0)) return at_node(k);
    if (w == Scalar(1)) return at_node(k + 1);
    const Scalar w2 = w * w, w3 = w2 * w;
    const Scalar h00 = 2 * w3 - 3 * w2 + 1;
    const Scalar h10 = w3 - 2 * w2 + w;
    const Scalar h01 = -2 * w3 + 3 * w2;
    const Scalar h11 = w3 - w2;
    return h00 * at_node(k) + (h10 * h) * slope_at_node(k) + h01 * at_node(k + 1) +
           (h11 * h) * slope_at_node(k + 1);
  }

 private:
  TimeGrid<Scalar> grid_;
  Index first_ = 0;
  std::vector<Matrix> values_;
  std::vector<Matrix> slopes_;
  std::optional<Index> escape_;
};

/// Classical RK4 for dM/dt = field(t, M) from `boundary` at the start (forward) or end
/// (backward) of the grid. Stops at the first node whose Frobenius norm exceeds
/// `blowup_norm` or is not finite; that node is recorded as the escape node.
template <typename Scalar, typename Field>
MatrixPath<Scalar> integrate_matrix_ode(Field&& field, const MatrixX<Scalar>& boundary,
                                        const TimeGrid<Scalar>& grid, Direction direction,
                                        Scalar blowup_norm = Scalar(1e8)) {
  using Matrix = MatrixX<Scalar>;
  if (!boundary.allFinite()) throw std::invalid_argument("integrate_matrix_ode: boundary not finite");

  const bool fwd = direction == Direction::forward;
  const Index steps = grid.steps();
  const Scalar h = fwd ? grid.step() : -grid.step();
  const Index dk = fwd ? 1 : -1;

  auto slope_at = [&](Scalar t, const Matrix& y) {
    Matrix d = field(t, y);
    if (!d.allFinite()) throw NonFiniteFieldError(static_cast<double>(t));
    return d;
  };

  std::vector<Matrix> values, slopes;
  values.reserve(static_cast<std::size_t>(steps + 1));
  slopes.reserve(static_cast<std::size_t>(steps + 1));

  Index k = fwd ? 0 : steps;
  Matrix y = boundary;
  Matrix k1 = slope_at(grid.node(k), y);
  values.push_back(y);
  slopes.push_back(k1);

  std::optional<Index> escape;
  for (Index s = 0; s < steps; ++s) {
    const Scalar t = grid.node(k);
    const Index next = k + dk;
    const Scalar tn = grid.node(next);
    const Scalar tm = t + h / 2;
    Matrix k2 = field(tm, y + (h / 2) * k1);
    Matrix k3 = field(tm, y + (h / 2) * k2);
    Matrix k4 = field(tn, y + h * k3);
    Matrix yn = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!yn.allFinite() || yn.norm() > blowup_norm) {
      escape = next;
      break;
    }
    y = std::move(yn);
    k = next;
    k1 = slope_at(tn, y);
    values.push_back(y);
    slopes.push_back(k1);
  }

  Index first = 0;
  if (!fwd) {
    std::reverse(values.begin(), values.end());
    std::reverse(slopes.begin(), slopes.end());
    first = k;
  }
  return MatrixPath<Scalar>(grid, first, std::move(values), std::move(slopes), escape);
}

/// Padé scaling-and-squaring exponential.
template <typename Derived>
MatrixX<typename Derived::Scalar> matrix_exponential(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) throw std::invalid_argument("matrix_exponential: square input required");
  if (!m.allFinite()) throw std::invalid_argument("matrix_exponential: input not finite");
  const MatrixX<Scalar> a = m;
  if (a.cwiseAbs().colwise().sum().maxCoeff() > Scalar(700))
    throw OverflowError("matrix_exponential: norm too large for double range");
  MatrixX<Scalar> e = a.exp();
  if (!e.allFinite()) throw OverflowError("matrix_exponential: result overflowed");
  return e;
}

template <typename Derived>
VectorX<std::complex<typename Derived::Scalar>> eigenvalues(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) throw std::invalid_argument("eigenvalues: square input required");
  Eigen::EigenSolver<MatrixX<Scalar>> es(m.eval(), false);
  if (es.info() != Eigen::Success) throw NoConvergenceError("eigenvalues: QR iteration failed");
  return es.eigenvalues();
}

template <typename Derived>
typename Derived::Scalar spectral_abscissa(const Eigen::MatrixBase<Derived>& m) {
  return eigenvalues(m).real().maxCoeff();
}

template <typename Derived>
bool is_hurwitz(const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar margin = 0) {
  return spectral_abscissa(m) < -margin;
}

/// LU solve that refuses numerically singular systems.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> solve_linear(const Eigen::MatrixBase<DerivedA>& a,
                                                const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  using Real = typename Eigen::NumTraits<Scalar>::Real;
  if (a.rows() != a.cols() || a.rows() != b.rows())
    throw std::invalid_argument("solve_linear: dimension mismatch");
  Eigen::PartialPivLU<MatrixX<Scalar>> lu(a.eval());
  const Real scale = a.cwiseAbs().maxCoeff();
  const Real pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(scale > 0) || pivot <= Real(1e-14) * scale) throw SingularError("solve_linear: matrix is singular");
  return lu.solve(b.eval());
}

template <typename Scalar>
struct OrderedSchur {
  MatrixX<std::complex<Scalar>> T;
  MatrixX<std::complex<Scalar>> U;
  Index selected = 0;
};

namespace detail {

// Rotation [c s; -conj(s) c] taking (f, g) to (r, 0).
template <typename Real>
void givens(std::complex<Real> f, std::complex<Real> g, Real& c, std::complex<Real>& s) {
  const Real af = std::abs(f), ag = std::abs(g);
  if (ag == Real(0)) {
    c = 1;
    s = 0;
    return;
  }
  if (af == Real(0)) {
    c = 0;
    s = std::conj(g) / ag;
    return;
  }
  const Real rho = std::hypot(af, ag);
  c = af / rho;
  s = (f / af) * std::conj(g) / rho;
}

template <typename Real>
void rotate(Eigen::Ref<VectorX<std::complex<Real>>> x, Eigen::Ref<VectorX<std::complex<Real>>> y,
            Real c, std::complex<Real> s) {
  for (Index i = 0; i < x.size(); ++i) {
    const std::complex<Real> xi = x(i), yi = y(i);
    x(i) = c * xi + s * yi;
    y(i) = -std::conj(s) * xi + c * yi;
  }
}

// Swap diagonal entries k and k+1 of the triangular factor.
template <typename Real>
void swap_adjacent(MatrixX<std::complex<Real>>& t, MatrixX<std::complex<Real>>& u, Index k) {
  using C = std::complex<Real>;
  const Index n = t.rows();
  const C t11 = t(k, k), t22 = t(k + 1, k + 1);
  Real c;
  C s;
  givens<Real>(t(k, k + 1), t22 - t11, c, s);
  if (k + 2 < n) {
    VectorX<C> r1 = t.row(k).segment(k + 2, n - k - 2).transpose();
    VectorX<C> r2 = t.row(k + 1).segment(k + 2, n - k - 2).transpose();
    rotate<Real>(r1, r2, c, s);
    t.row(k).segment(k + 2, n - k - 2) = r1.transpose();
    t.row(k + 1).segment(k + 2, n - k - 2) = r2.transpose();
  }
  if (k > 0) {
    VectorX<C> c1 = t.col(k).head(k), c2 = t.col(k + 1).head(k);
    rotate<Real>(c1, c2, c, std::conj(s));
    t.col(k).head(k) = c1;
    t.col(k + 1).head(k) = c2;
  }
  t(k, k) = t22;
  t(k + 1, k + 1) = t11;
  VectorX<C> q1 = u.col(k), q2 = u.col(k + 1);
  rotate<Real>(q1, q2, c, std::conj(s));
  u.col(k) = q1;
  u.col(k + 1) = q2;
}

}  // namespace detail

/// Complex Schur form M = U T U^H with the eigenvalues accepted by `select` moved to the
/// leading block, so the first `selected` columns of U span their invariant subspace.
template <typename Derived, typename Select>
OrderedSchur<typename Derived::Scalar> ordered_schur(const Eigen::MatrixBase<Derived>& m, Select select) {
  using Real = typename Derived::Scalar;
  using C = std::complex<Real>;
  if (m.rows() != m.cols()) throw std::invalid_argument("ordered_schur: square input required");
  Eigen::ComplexSchur<MatrixX<C>> cs(m.template cast<C>().eval());
  if (cs.info() != Eigen::Success) throw NoConvergenceError("ordered_schur: Schur iteration failed");
  OrderedSchur<Real> out{cs.matrixT(), cs.matrixU(), 0};
  const Index n = m.rows();
  for (Index j = 0; j < n; ++j) {
    if (!select(out.T(j, j))) continue;
    for (Index k = j - 1; k >= out.selected; --k) detail::swap_adjacent<Real>(out.T, out.U, k);
    ++out.selected;
  }
  return out;
}

/// Composite Simpson rule on a uniform grid; trapezoid on the last interval when the
/// number of intervals is odd.
inline double integrate_nodes(const std::vector<double>& f, double h) {
  const std::size_t m = f.size();
  if (m < 2) return 0.0;
  const std::size_t intervals = m - 1;
  const std::size_t even = intervals - intervals % 2;
  double s = 0.0;
  for (std::size_t k = 0; k + 2 <= even; k += 2) s += f[k] + 4.0 * f[k + 1] + f[k + 2];
  s *= h / 3.0;
  if (even != intervals) s += 0.5 * h * (f[m - 2] + f[m - 1]);
  return s;
}

}  // namespace mfrc
