#pragma once

// Exact-rational scalar support. Include this header before instantiating any
// library template with Rational; Eigen needs the NumTraits specialization.

#include <gmpxx.h>

#include <Eigen/Core>

#include "carre/core.hpp"

namespace Eigen {

template <>
struct NumTraits<mpq_class> : GenericNumTraits<mpq_class> {
  typedef mpq_class Real;
  typedef mpq_class NonInteger;
  typedef mpq_class Nested;

  static inline Real epsilon() { return 0; }
  static inline Real dummy_precision() { return 0; }
  static inline int digits10() { return 0; }

  enum {
    IsInteger = 0,
    IsSigned = 1,
    IsComplex = 0,
    RequireInitialization = 1,
    ReadCost = 6,
    AddCost = 150,
    MulCost = 100
  };
};

}  // namespace Eigen

namespace carre {

using Rational = mpq_class;

/// Exact lift of a double matrix (binary fractions convert losslessly).
inline Mat<Rational> to_rational(const Mat<double>& a) {
  Mat<Rational> r(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) r(i, j) = Rational(a(i, j));
  return r;
}

inline Vec<Rational> to_rational(const Vec<double>& v) {
  Vec<Rational> r(v.size());
  for (Index i = 0; i < v.size(); ++i) r(i) = Rational(v(i));
  return r;
}

inline Mat<double> to_double_matrix(const Mat<Rational>& a) {
  Mat<double> r(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) r(i, j) = a(i, j).get_d();
  return r;
}

inline Vec<double> to_double_vector(const Vec<Rational>& v) {
  Vec<double> r(v.size());
  for (Index i = 0; i < v.size(); ++i) r(i) = v(i).get_d();
  return r;
}

}  // namespace carre
