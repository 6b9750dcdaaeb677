#pragma once

// L2(mu) embedding of a generator: the mu-adjoint, normality and
// detailed-balance classification, the operator C = -(A + A*), its
// positive square root, spectra and Poincare constants.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "carre/core.hpp"
#include "carre/errors.hpp"
#include "carre/generator.hpp"

namespace carre {

/// Weighted inner product (f,g)_mu = sum_i f_i g_i mu_i. Requires strictly
/// positive weights; mu must be stationary for the generator it is paired
/// with (symmetry of the form forces that, see the classification ops).
template <typename T = double>
class MuGeometry {
 public:
  explicit MuGeometry(ProbabilityMeasure<T> mu) : mu_(std::move(mu)) {
    for (Index i = 0; i < mu_.dim(); ++i)
      if (!(to_double(mu_.weights()(i)) > 0)) throw ZeroWeightError(i);
  }

  Index dim() const { return mu_.dim(); }
  const ProbabilityMeasure<T>& measure() const { return mu_; }
  const Vec<T>& weights() const { return mu_.weights(); }

  T inner(const Vec<T>& f, const Vec<T>& g) const {
    if (f.size() != dim() || g.size() != dim())
      throw DimensionMismatchError("observable length does not match measure dim");
    T acc(0);
    for (Index i = 0; i < dim(); ++i) acc += f(i) * g(i) * mu_.weights()(i);
    return acc;
  }

  T norm_squared(const Vec<T>& g) const { return inner(g, g); }

 private:
  ProbabilityMeasure<T> mu_;
};

namespace detail {

template <typename T>
void require_stationary(const Generator<T>& a, const ProbabilityMeasure<T>& mu,
                        double tol = 1e-9) {
  if (mu.dim() != a.dim())
    throw DimensionMismatchError("measure dimension does not match generator");
  const Vec<T> defect = a.matrix().transpose() * mu.weights();
  const double scale = std::max(1.0, to_double(max_abs_entry(a.matrix())) *
                                         to_double(norm_sup(mu.weights())));
  for (Index i = 0; i < defect.size(); ++i)
    if (std::abs(to_double(defect(i))) > tol * scale)
      throw NotStationaryError(
          "measure is not stationary for this generator (defect " +
          std::to_string(to_double(defect(i))) + " at state " +
          std::to_string(i) + ")");
}

}  // namespace detail

/// mu-adjoint A* = Q_mu^{-1} A^T Q_mu. Returns a validated generator: the
/// adjoint of a generator w.r.t. its stationary measure is again a
/// generator (for the loop chain it is the reverse loop).
template <typename T>
Generator<T> mu_adjoint(const Generator<T>& a, const ProbabilityMeasure<T>& mu) {
  for (Index i = 0; i < mu.dim(); ++i)
    if (!(to_double(mu.weights()(i)) > 0)) throw ZeroWeightError(i);
  detail::require_stationary(a, mu);
  const Index m = a.dim();
  Mat<T> adj(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j)
      adj(i, j) = mu.weights()(j) * a.matrix()(j, i) / mu.weights()(i);
  // rows of adj sum to (A^T mu)_i / mu_i, which is zero up to the
  // stationarity defect checked above
  return validate_generator<T>(std::move(adj), 1e-7);
}

enum class Classification { DetailedBalance, Normal, NonNormal };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::DetailedBalance: return "DetailedBalance";
    case Classification::Normal: return "Normal";
    default: return "NonNormal";
  }
}

struct NormalityReport {
  Classification classification = Classification::NonNormal;
  double commutator_norm = 0.0;   // |A A* - A* A|_inf
  double symmetry_defect = 0.0;   // |A - A*|_inf
  double tolerance = 0.0;

  bool normal_or_reversible() const {
    return classification != Classification::NonNormal;
  }
};

/// DetailedBalance if |A - A*| <= tol |A|, else Normal if the commutator
/// |[A, A*]| <= tol |A|^2, else NonNormal. Relative tolerances keep the
/// classification invariant under A -> alpha A.
template <typename T>
NormalityReport classify(const Generator<T>& a, const ProbabilityMeasure<T>& mu,
                         double tol = 1e-9) {
  const Generator<T> adj = mu_adjoint(a, mu);
  const Mat<T>& qa = a.matrix();
  const Mat<T>& qs = adj.matrix();

  NormalityReport rep;
  rep.tolerance = tol;
  rep.symmetry_defect = to_double(opnorm_inf(Mat<T>(qa - qs)));
  rep.commutator_norm = to_double(opnorm_inf(Mat<T>(qa * qs - qs * qa)));

  const double a_norm = to_double(a.norm());
  if (rep.symmetry_defect <= tol * a_norm)
    rep.classification = Classification::DetailedBalance;
  else if (rep.commutator_norm <= tol * a_norm * a_norm)
    rep.classification = Classification::Normal;
  else
    rep.classification = Classification::NonNormal;
  return rep;
}

/// C = -(A + A*); mu-self-adjoint and positive semidefinite in the
/// mu-inner product for any generator with stationary mu.
template <typename T>
Mat<T> c_matrix(const Generator<T>& a, const ProbabilityMeasure<T>& mu) {
  const Generator<T> adj = mu_adjoint(a, mu);
  return Mat<T>(-(a.matrix() + adj.matrix()));
}

struct COperator {
  Mat<double> c;            // -(A + A*)
  Mat<double> b;            // B^2 = C, mu-self-adjoint, positive
  Vec<double> eigenvalues;  // spectrum of C, ascending, all >= 0
};

/// Builds C and its positive square root by the Q_mu^{1/2} similarity:
/// S = Q^{1/2} C Q^{-1/2} is symmetric, its PSD root is spectral, and
/// B = Q^{-1/2} S^{1/2} Q^{1/2}. Eigenvalues of S below -1e-10 |C| signal
/// a broken measure or a non-generator input.
inline COperator c_operator(const Generator<double>& a,
                            const ProbabilityMeasure<double>& mu) {
  COperator out;
  out.c = c_matrix(a, mu);
  const Index m = a.dim();

  Vec<double> sqrt_mu(m);
  for (Index i = 0; i < m; ++i) sqrt_mu(i) = std::sqrt(mu.weights()(i));

  Mat<double> s(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j)
      s(i, j) = sqrt_mu(i) * out.c(i, j) / sqrt_mu(j);
  s = ((s + s.transpose()) / 2.0).eval();

  Eigen::SelfAdjointEigenSolver<Mat<double>> es(s);
  if (es.info() != Eigen::Success)
    throw EigenFailureError("symmetric eigensolver failed on C");

  const double c_norm = std::max(opnorm_inf(out.c), 1e-300);
  Vec<double> lambda = es.eigenvalues();
  for (Index i = 0; i < m; ++i) {
    if (lambda(i) < -1e-10 * c_norm)
      throw NotPsdError("C has a negative eigenvalue " + std::to_string(lambda(i)));
    if (lambda(i) < 0.0) lambda(i) = 0.0;
  }
  out.eigenvalues = lambda;

  Mat<double> root_s = es.eigenvectors() *
                       lambda.cwiseSqrt().asDiagonal() *
                       es.eigenvectors().transpose();
  out.b.resize(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j)
      out.b(i, j) = root_s(i, j) * sqrt_mu(j) / sqrt_mu(i);
  return out;
}

/// Smallest -Re(lambda) over the non-trivial spectrum of A. The zero
/// eigenvalue carried by the constant function is deflated first.
inline double spectral_gap(const Generator<double>& a) {
  if (!is_irreducible(a))
    throw NotIrreducibleError("spectral gap requires an irreducible generator");
  Eigen::EigenSolver<Mat<double>> es(a.matrix());
  if (es.info() != Eigen::Success)
    throw EigenFailureError("eigensolver failed on the generator");
  const auto& lambda = es.eigenvalues();

  Index trivial = 0;
  for (Index i = 1; i < lambda.size(); ++i)
    if (std::abs(lambda(i)) < std::abs(lambda(trivial))) trivial = i;

  bool found = false;
  double gap = 0.0;
  for (Index i = 0; i < lambda.size(); ++i) {
    if (i == trivial) continue;
    const double candidate = -lambda(i).real();
    if (!found || candidate < gap) {
      gap = candidate;
      found = true;
    }
  }
  if (!found) throw EigenFailureError("no non-trivial eigenvalue to report");
  return gap;
}

struct PoincareConstant {
  double value = 0.0;
  /// False when the constant serves every order n (normal case, smallest
  /// nonzero eigenvalue of C); true when it certifies only E_2 >= c E_1.
  bool order_specific = false;
};

namespace detail {

/// Symmetric matrix of the quadratic form E_n(g) = g^T K_n g built from the
/// explicit formula E_n = (-1)^n sum_j C(n,j) <A^{n-j} g . A^j g, mu>.
inline Mat<double> energy_form_matrix(const Generator<double>& a,
                                      const ProbabilityMeasure<double>& mu,
                                      int n) {
  const Index m = a.dim();
  std::vector<Mat<double>> pow(n + 1);
  pow[0] = Mat<double>::Identity(m, m);
  for (int p = 1; p <= n; ++p) pow[p] = a.matrix() * pow[p - 1];

  std::vector<double> choose(n + 1, 1.0);
  for (int j = 1; j <= n; ++j)
    choose[j] = choose[j - 1] * static_cast<double>(n - j + 1) / j;

  Mat<double> k = Mat<double>::Zero(m, m);
  const Mat<double> q_mu = mu.weights().asDiagonal();
  for (int j = 0; j <= n; ++j)
    k += choose[j] * pow[n - j].transpose() * q_mu * pow[j];
  if (n % 2 != 0) k = -k;
  return ((k + k.transpose()) / 2.0).eval();
}

}  // namespace detail

/// Largest c with E_{n+1}(g) >= c E_n(g). For normal generators this is the
/// smallest nonzero eigenvalue of C and is order-independent; otherwise the
/// best order-1 constant is computed from the generalized eigenproblem
/// K_2 v = c K_1 v restricted to the complement of constants.
inline PoincareConstant poincare_constant(const Generator<double>& a,
                                          const ProbabilityMeasure<double>& mu,
                                          double tol = 1e-9) {
  const NormalityReport rep = classify(a, mu, tol);
  const Index m = a.dim();
  if (m < 2)
    throw EigenFailureError("Poincare constant needs at least two states");

  if (rep.normal_or_reversible()) {
    const COperator cop = c_operator(a, mu);
    // kernel of C is exactly the constants for an irreducible generator
    PoincareConstant out;
    out.value = cop.eigenvalues(1);
    out.order_specific = false;

    // certificate: E_{n+1}(g) >= c E_n(g) on random observables
    const Mat<double> k1 = detail::energy_form_matrix(a, mu, 1);
    const Mat<double> k2 = detail::energy_form_matrix(a, mu, 2);
    const Mat<double> k3 = detail::energy_form_matrix(a, mu, 3);
    std::mt19937_64 rng(0x51c817u);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      Vec<double> g(m);
      for (Index i = 0; i < m; ++i) g(i) = gauss(rng);
      const double e1 = g.dot(k1 * g);
      const double e2 = g.dot(k2 * g);
      const double e3 = g.dot(k3 * g);
      const double slack = 1e-9 * a.norm() * g.squaredNorm();
      if (e2 < out.value * e1 - slack * a.norm() ||
          e3 < out.value * e2 - slack * a.norm() * a.norm())
        throw NumericalFailureError("Poincare certificate failed on a random observable");
    }
    return out;
  }

  const Mat<double> k1 = detail::energy_form_matrix(a, mu, 1);
  const Mat<double> k2 = detail::energy_form_matrix(a, mu, 2);

  // orthonormal basis of the complement of the constant vector
  Vec<double> ones = Vec<double>::Ones(m);
  Eigen::HouseholderQR<Mat<double>> qr(ones);
  const Mat<double> full = qr.householderQ() * Mat<double>::Identity(m, m);
  const Mat<double> basis = full.rightCols(m - 1);

  Eigen::GeneralizedSelfAdjointEigenSolver<Mat<double>> ges(
      basis.transpose() * k2 * basis, basis.transpose() * k1 * basis);
  if (ges.info() != Eigen::Success)
    throw EigenFailureError("generalized eigensolver failed for the Poincare constant");
  PoincareConstant out;
  out.value = ges.eigenvalues().minCoeff();
  out.order_specific = true;
  return out;
}

}  // namespace carre
