#pragma once

// Matrix-exponential semigroup T(t) = e^{tA}, trajectory evolution and
// Markov-operator certification.

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "carre/core.hpp"
#include "carre/errors.hpp"
#include "carre/generator.hpp"

namespace carre {

struct MarkovCertification {
  double min_entry = 0.0;
  double max_row_sum_defect = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Reports the smallest entry and the worst |row sum - 1| of a candidate
/// Markov matrix; passes iff min entry >= -tol and row defect <= tol.
template <typename T>
MarkovCertification check_markov(const Mat<T>& p, double tol) {
  if (p.rows() != p.cols())
    throw NotSquareError("Markov operator must be square");
  MarkovCertification rep;
  rep.tolerance = tol;
  double min_entry = 0.0;
  double worst_row = 0.0;
  for (Index i = 0; i < p.rows(); ++i) {
    T row_sum(0);
    for (Index j = 0; j < p.cols(); ++j) {
      min_entry = std::min(min_entry, to_double(p(i, j)));
      row_sum += p(i, j);
    }
    worst_row = std::max(worst_row, std::abs(to_double(row_sum) - 1.0));
  }
  rep.min_entry = min_entry;
  rep.max_row_sum_defect = worst_row;
  rep.pass = (min_entry >= -tol) && (worst_row <= tol);
  return rep;
}

/// Row-stochastic matrix. Certification clamps entries in [-tol, 0) to zero
/// and renormalizes each row, so M1 = 1 holds exactly up to one division.
template <typename T = double>
class MarkovOperator {
 public:
  static MarkovOperator certify(Mat<T> p, double tol = 1e-9) {
    const auto rep = check_markov(p, tol);
    if (!rep.pass)
      throw Error("matrix is not Markov within tolerance (min entry " +
                  std::to_string(rep.min_entry) + ", row defect " +
                  std::to_string(rep.max_row_sum_defect) + ")");
    for (Index i = 0; i < p.rows(); ++i) {
      for (Index j = 0; j < p.cols(); ++j)
        if (p(i, j) < T(0)) p(i, j) = T(0);
      const T row_sum = p.row(i).sum();
      if (to_double(row_sum) > 0) p.row(i) /= row_sum;
    }
    return MarkovOperator(std::move(p));
  }

  /// Wraps a matrix that is Markov by construction (no clamping).
  static MarkovOperator from_exact(Mat<T> p) {
    const auto rep = check_markov(p, 0.0);
    if (!rep.pass) throw Error("matrix is not exactly Markov");
    return MarkovOperator(std::move(p));
  }

  static MarkovOperator identity(Index m) {
    return MarkovOperator(Mat<T>::Identity(m, m));
  }

  Index dim() const { return p_.rows(); }
  const Mat<T>& matrix() const { return p_; }

  Vec<T> apply(const Vec<T>& g) const {
    if (g.size() != dim())
      throw DimensionMismatchError("observable length does not match operator dim");
    return p_ * g;
  }

 private:
  explicit MarkovOperator(Mat<T> p) : p_(std::move(p)) {}
  Mat<T> p_;
};

/// Strictly increasing sample times, all >= 0.
class TimeGrid {
 public:
  static TimeGrid from_points(std::vector<double> pts) {
    if (pts.empty()) throw Error("time grid must be nonempty");
    if (pts.front() < 0.0) throw Error("time grid starts before zero");
    for (std::size_t j = 1; j < pts.size(); ++j)
      if (!(pts[j] > pts[j - 1]))
        throw Error("time grid must be strictly increasing");
    return TimeGrid(std::move(pts));
  }

  static TimeGrid linear(double t0, double t_max, std::size_t count) {
    if (count < 2 || !(t_max > t0)) throw Error("bad linear grid");
    std::vector<double> pts(count);
    const double h = (t_max - t0) / static_cast<double>(count - 1);
    for (std::size_t j = 0; j < count; ++j)
      pts[j] = t0 + h * static_cast<double>(j);
    pts.back() = t_max;
    return from_points(std::move(pts));
  }

  /// Geometric spacing t0 * r^j reaching t_max; resolves both the transient
  /// and the tail, which is what log-log decay plots want.
  static TimeGrid geometric(double t0, double t_max, std::size_t count) {
    if (count < 2 || !(t0 > 0.0) || !(t_max > t0)) throw Error("bad geometric grid");
    std::vector<double> pts(count);
    const double ratio = std::pow(t_max / t0, 1.0 / static_cast<double>(count - 1));
    double t = t0;
    for (std::size_t j = 0; j < count; ++j) {
      pts[j] = t;
      t *= ratio;
    }
    pts.back() = t_max;
    return from_points(std::move(pts));
  }

  const std::vector<double>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double operator[](std::size_t j) const { return points_[j]; }
  double front() const { return points_.front(); }
  double back() const { return points_.back(); }

 private:
  explicit TimeGrid(std::vector<double> pts) : points_(std::move(pts)) {}
  std::vector<double> points_;
};

namespace detail {

/// Eigendecomposition of a generator reused across evaluation times.
/// Falls back to Pade scaling-and-squaring when the eigenvector basis is
/// ill-conditioned (condition number above 1e8) or defective.
class SemigroupEvaluator {
 public:
  explicit SemigroupEvaluator(const Generator<double>& a)
      : q_(a.matrix()), use_eigen_(false) {
    Eigen::EigenSolver<Mat<double>> es(q_);
    if (es.info() == Eigen::Success) {
      v_ = es.eigenvectors();
      lambda_ = es.eigenvalues();
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(v_);
      const double smin = svd.singularValues().minCoeff();
      const double smax = svd.singularValues().maxCoeff();
      if (smin > 0.0 && smax / smin <= kMaxEigenvectorCondition) {
        v_inv_ = v_.inverse();
        use_eigen_ = true;
      }
    }
  }

  Mat<double> raw(double t) const {
    if (t < 0.0) throw NegativeTimeError("semigroup time must be nonnegative");
    if (t == 0.0) return Mat<double>::Identity(q_.rows(), q_.cols());
    if (use_eigen_) {
      Eigen::VectorXcd phase = (lambda_.array() * t).exp();
      Eigen::MatrixXcd p = v_ * phase.asDiagonal() * v_inv_;
      return p.real();
    }
    return pade(t);
  }

  Mat<double> pade(double t) const { return (q_ * t).exp(); }

  bool eigen_route() const { return use_eigen_; }

  static constexpr double kMaxEigenvectorCondition = 1e8;

 private:
  Mat<double> q_;
  Eigen::MatrixXcd v_, v_inv_;
  Eigen::VectorXcd lambda_;
  bool use_eigen_;
};

}  // namespace detail

/// e^{tA} as a certified Markov operator. The eigendecomposition route is
/// primary; Pade scaling-and-squaring takes over for ill-conditioned
/// eigenvector bases or when the primary result fails certification.
inline MarkovOperator<double> expm(const Generator<double>& a, double t,
                                   double certify_tol = 1e-9) {
  detail::SemigroupEvaluator eval(a);
  Mat<double> p = eval.raw(t);
  if (check_markov(p, certify_tol).pass)
    return MarkovOperator<double>::certify(std::move(p), certify_tol);
  if (eval.eigen_route()) {
    p = eval.pade(t);
    if (check_markov(p, certify_tol).pass)
      return MarkovOperator<double>::certify(std::move(p), certify_tol);
  }
  throw ExponentialFailureError("matrix exponential failed certification on both routes");
}

/// Trajectory g(t_j) = e^{t_j A} g0 on the given grid.
inline std::vector<Vec<double>> evolve(const Generator<double>& a,
                                       const Vec<double>& g0,
                                       const TimeGrid& grid,
                                       double certify_tol = 1e-9) {
  if (g0.size() != a.dim())
    throw DimensionMismatchError("initial observable does not match generator dim");
  detail::SemigroupEvaluator eval(a);
  std::vector<Vec<double>> out;
  out.reserve(grid.size());
  for (double t : grid.points()) {
    Mat<double> p = eval.raw(t);
    if (!check_markov(p, certify_tol).pass) p = eval.pade(t);
    const auto op = MarkovOperator<double>::certify(std::move(p), certify_tol);
    out.push_back(op.apply(g0));
  }
  return out;
}

/// Pointwise minimum of M(g^2) - (Mg)^2; Jensen's inequality makes this
/// nonnegative for every Markov operator.
template <typename T>
T jensen_check(const MarkovOperator<T>& m, const Vec<T>& g) {
  if (g.size() != m.dim())
    throw DimensionMismatchError("observable length does not match operator dim");
  const Vec<T> mg2 = m.apply(Vec<T>(g.cwiseProduct(g)));
  const Vec<T> mg = m.apply(g);
  T worst = mg2(0) - mg(0) * mg(0);
  for (Index i = 1; i < g.size(); ++i) {
    const T v = mg2(i) - mg(i) * mg(i);
    if (v < worst) worst = v;
  }
  return worst;
}

}  // namespace carre
