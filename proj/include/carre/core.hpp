#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <type_traits>

namespace carre {

using Index = Eigen::Index;

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Scalar converted to double; works for built-in floats and GMP rationals.
template <typename T>
double to_double(const T& x) {
  if constexpr (requires { x.get_d(); }) {
    return x.get_d();
  } else {
    return static_cast<double>(x);
  }
}

/// True for scalar types with exact arithmetic (no roundoff), e.g. mpq_class.
template <typename T>
constexpr bool is_exact_scalar = requires(const T& x) { x.get_num(); };

template <typename T>
T abs_val(const T& x) {
  using std::abs;
  return abs(x);
}

/// Operator infinity norm: max absolute row sum.
template <typename T>
T opnorm_inf(const Mat<T>& a) {
  T best(0);
  for (Index i = 0; i < a.rows(); ++i) {
    T s(0);
    for (Index j = 0; j < a.cols(); ++j) s += abs_val(a(i, j));
    if (s > best) best = s;
  }
  return best;
}

/// Largest absolute entry of a vector (sup norm on observables).
template <typename T>
T norm_sup(const Vec<T>& v) {
  T best(0);
  for (Index i = 0; i < v.size(); ++i) {
    T a = abs_val(v(i));
    if (a > best) best = a;
  }
  return best;
}

template <typename T>
T max_abs_entry(const Mat<T>& a) {
  T best(0);
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) {
      T v = abs_val(a(i, j));
      if (v > best) best = v;
    }
  return best;
}

template <typename T>
Vec<T> constant_vector(Index m, const T& value = T(1)) {
  return Vec<T>::Constant(m, value);
}

}  // namespace carre
