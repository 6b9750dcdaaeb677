#pragma once

// Finite-state Markov generators: construction, validation, stationary
// analysis. A generator is an m x m rate matrix with nonnegative
// off-diagonal entries and zero row sums.

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "carre/core.hpp"
#include "carre/errors.hpp"

namespace carre {

template <typename T = double>
class Generator;

template <typename T>
Generator<T> validate_generator(Mat<T> q, double tol = 1e-12);

/// Markov generator on m states. Immutable; rows sum to zero exactly
/// (the diagonal is recomputed from the off-diagonal entries on
/// construction, so A1 = 0 is an identity rather than a tolerance).
template <typename T>
class Generator {
 public:
  Index dim() const { return q_.rows(); }
  const Mat<T>& matrix() const { return q_; }

  /// A g, accumulated off-diagonals first and the diagonal term last; with
  /// the repaired diagonal this cancels exactly for constant g, so A1 = 0
  /// is an identity rather than a roundoff-sized residue.
  Vec<T> apply(const Vec<T>& g) const {
    if (g.size() != dim())
      throw DimensionMismatchError("observable length does not match generator dim");
    const Index m = dim();
    Vec<T> out(m);
    for (Index i = 0; i < m; ++i) {
      T acc(0);
      for (Index j = 0; j < m; ++j)
        if (j != i) acc += q_(i, j) * g(j);
      out(i) = acc + q_(i, i) * g(i);
    }
    return out;
  }

  /// Operator infinity norm of the rate matrix.
  T norm() const { return opnorm_inf(q_); }

  /// Largest exit rate max_i |q_ii|.
  T max_exit_rate() const {
    T best(0);
    for (Index i = 0; i < dim(); ++i) {
      T v = abs_val(q_(i, i));
      if (v > best) best = v;
    }
    return best;
  }

 private:
  explicit Generator(Mat<T> q) : q_(std::move(q)) {}
  friend Generator validate_generator<T>(Mat<T>, double);

  Mat<T> q_;
};

/// Checks the generator axioms and repairs the diagonal. Off-diagonal
/// entries in [-tol, 0) are clamped to zero; rows must sum to zero within
/// tol * max(1, |q|_inf).
template <typename T>
Generator<T> validate_generator(Mat<T> q, double tol) {
  if (q.rows() != q.cols())
    throw NotSquareError("generator matrix must be square");
  if (q.rows() < 1) throw BadDimensionError("generator needs at least one state");

  const double scale = std::max(1.0, to_double(opnorm_inf(q)));
  for (Index i = 0; i < q.rows(); ++i) {
    for (Index j = 0; j < q.cols(); ++j) {
      if (i == j) continue;
      if (to_double(q(i, j)) < -tol)
        throw NegativeRateError(i, j, to_double(q(i, j)));
      if (q(i, j) < T(0)) q(i, j) = T(0);
    }
  }
  for (Index i = 0; i < q.rows(); ++i) {
    T row_sum(0);
    for (Index j = 0; j < q.cols(); ++j) row_sum += q(i, j);
    if (std::abs(to_double(row_sum)) > tol * scale)
      throw RowSumViolationError(i, to_double(row_sum));
    T off(0);
    for (Index j = 0; j < q.cols(); ++j)
      if (j != i) off += q(i, j);
    q(i, i) = -off;
  }
  return Generator<T>(std::move(q));
}

/// Three-state loop generator [[-a,a,0],[0,-b,b],[c,0,-c]]; mass is
/// exchanged along the cycle 0 -> 1 -> 2 -> 0 with the given rates.
template <typename T = double>
Generator<T> loop_chain(const T& a, const T& b, const T& c) {
  if (!(to_double(a) > 0 && to_double(b) > 0 && to_double(c) > 0))
    throw NonPositiveRateError("loop chain rates must be strictly positive");
  Mat<T> q(3, 3);
  q << -a, a, T(0), T(0), -b, b, c, T(0), -c;
  return validate_generator<T>(std::move(q), 0.0);
}

/// (D/2) times the periodic second-difference matrix on m states.
/// Symmetric, so it satisfies detailed balance with the uniform measure.
template <typename T = double>
Generator<T> cycle_laplacian(Index m, const T& diffusivity) {
  if (m < 2) throw BadDimensionError("cycle needs at least two states");
  if (!(to_double(diffusivity) > 0))
    throw NonPositiveRateError("diffusivity must be strictly positive");
  Mat<T> q = Mat<T>::Zero(m, m);
  const T half = diffusivity / T(2);
  for (Index i = 0; i < m; ++i) {
    const Index next = (i + 1) % m;
    const Index prev = (i + m - 1) % m;
    q(i, next) += half;
    q(i, prev) += half;
    q(i, i) = -(q(i, next) + (next == prev ? T(0) : q(i, prev)));
  }
  return validate_generator<T>(std::move(q), 0.0);
}

/// Reproducible random irreducible generator. The support always contains
/// a directed Hamiltonian cycle, which makes the chain irreducible for any
/// density; extra edges appear with probability `density`. Output is a pure
/// function of (m, seed, density).
inline Generator<double> random_generator(Index m, std::uint64_t seed,
                                          double density) {
  if (m < 2) m = 2;
  if (density > 1.0) density = 1.0;
  if (density < 0.0) density = 0.0;

  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(m)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Index> cycle(m);
  for (Index i = 0; i < m; ++i) cycle[i] = i;
  std::shuffle(cycle.begin(), cycle.end(), rng);

  Mat<double> q = Mat<double>::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    const Index from = cycle[i];
    const Index to = cycle[(i + 1) % m];
    q(from, to) = 0.5 + unit(rng);
  }
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) {
      if (i == j || q(i, j) != 0.0) continue;
      const double coin = unit(rng);
      const double rate = unit(rng);
      if (coin < density) q(i, j) = rate;
    }
  for (Index i = 0; i < m; ++i) q(i, i) = -q.row(i).sum();
  return validate_generator<double>(std::move(q), 1e-9);
}

/// True iff the directed graph of strictly positive off-diagonal rates is
/// strongly connected.
template <typename T>
bool is_irreducible(const Generator<T>& a) {
  const Index m = a.dim();
  const Mat<T>& q = a.matrix();
  auto reach = [&](bool forward) {
    std::vector<char> seen(m, 0);
    std::vector<Index> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const Index u = stack.back();
      stack.pop_back();
      for (Index v = 0; v < m; ++v) {
        if (v == u || seen[v]) continue;
        const T& rate = forward ? q(u, v) : q(v, u);
        if (rate > T(0)) {
          seen[v] = 1;
          stack.push_back(v);
        }
      }
    }
    for (Index v = 0; v < m; ++v)
      if (!seen[v]) return false;
    return true;
  };
  return reach(true) && reach(false);
}

/// Nonnegative weight vector, optionally normalized to total mass one.
template <typename T = double>
class ProbabilityMeasure {
 public:
  static ProbabilityMeasure from_weights(Vec<T> w, bool normalized,
                                         double tol = 1e-12) {
    for (Index i = 0; i < w.size(); ++i)
      if (to_double(w(i)) < 0)
        throw Error("measure weights must be nonnegative");
    if (normalized) {
      const double total = to_double(T(w.sum()));
      if (std::abs(total - 1.0) > tol)
        throw Error("normalized measure must sum to one");
    }
    return ProbabilityMeasure(std::move(w), normalized);
  }

  Index dim() const { return weights_.size(); }
  const Vec<T>& weights() const { return weights_; }
  bool normalized() const { return normalized_; }
  T mass() const { return weights_.sum(); }

  ProbabilityMeasure normalized_copy() const {
    Vec<T> w = weights_;
    const T total = w.sum();
    if (!(to_double(total) > 0)) throw Error("cannot normalize a zero measure");
    w /= total;
    return ProbabilityMeasure(std::move(w), true);
  }

 private:
  ProbabilityMeasure(Vec<T> w, bool normalized)
      : weights_(std::move(w)), normalized_(normalized) {}

  Vec<T> weights_;
  bool normalized_;
};

/// Unique stationary measure of an irreducible generator, solved from
/// A^T mu = 0 with one equation replaced by the normalization constraint.
/// With normalize = false the result is scaled to the raw gauge in which
/// the smallest weight equals 1 / max_i |q_ii|; for a loop chain this
/// reproduces the weights (1/a, 1/b, 1/c) exactly.
template <typename T>
ProbabilityMeasure<T> stationary_measure(const Generator<T>& a,
                                         double tol = 1e-10,
                                         bool normalize = true) {
  const Index m = a.dim();
  if (!is_irreducible(a))
    throw NotIrreducibleError("stationary measure requires an irreducible generator");

  Mat<T> sys = a.matrix().transpose();
  sys.row(m - 1).setOnes();
  Vec<T> rhs = Vec<T>::Zero(m);
  rhs(m - 1) = T(1);

  Eigen::FullPivLU<Mat<T>> lu(sys);
  if constexpr (!is_exact_scalar<T>) {
    if (lu.rank() < m)
      throw NumericalFailureError("deflated stationary system is singular");
  }
  Vec<T> mu = lu.solve(rhs);

  const double rate_scale = std::max(1.0, to_double(max_abs_entry(a.matrix())));
  double residual = 0.0;
  Vec<T> defect = a.matrix().transpose() * mu;
  for (Index i = 0; i < m; ++i)
    residual = std::max(residual, std::abs(to_double(defect(i))));
  if (residual > tol * rate_scale)
    throw NumericalFailureError("stationary residual " + std::to_string(residual) +
                                " exceeds tolerance");

  for (Index i = 0; i < m; ++i) {
    if (to_double(mu(i)) < -tol)
      throw NumericalFailureError("stationary solve produced a negative weight");
    if (mu(i) < T(0)) mu(i) = T(0);
  }

  if (normalize) {
    const T total = mu.sum();
    mu /= total;
    return ProbabilityMeasure<T>::from_weights(std::move(mu), true, 1e-9);
  }

  // raw gauge: min positive weight = 1 / max exit rate
  const T exit = a.max_exit_rate();
  if (to_double(exit) > 0) {
    T min_pos(0);
    bool found = false;
    for (Index i = 0; i < m; ++i) {
      if (mu(i) > T(0) && (!found || mu(i) < min_pos)) {
        min_pos = mu(i);
        found = true;
      }
    }
    if (found) mu *= T(1) / (min_pos * exit);
  }
  return ProbabilityMeasure<T>::from_weights(std::move(mu), false);
}

}  // namespace carre
