#pragma once

#include <Eigen/Dense>

#include <sstream>
#include <string>

#include "svdinv/scalar.hpp"

namespace svdinv {

/// Dense matrix over one of the supported scalar types.
template <Scalar T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Real vector, used for singular values and their cotangents.
template <RealScalar R>
using RealVector = Eigen::Matrix<R, Eigen::Dynamic, 1>;

namespace detail {

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

template <class A, class B>
void require_same_shape(const A& a, const B& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
  }
}

}  // namespace detail

template <Scalar T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " +
                     detail::shape_str(a.rows(), a.cols()) + " * " +
                     detail::shape_str(b.rows(), b.cols()));
  }
  return a * b;
}

template <Scalar T>
Matrix<T> conj_transpose(const Matrix<T>& a) {
  return a.adjoint();
}

template <Scalar T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b) {
  detail::require_same_shape(a, b, "add");
  return a + b;
}

template <Scalar T>
Matrix<T> sub(const Matrix<T>& a, const Matrix<T>& b) {
  detail::require_same_shape(a, b, "sub");
  return a - b;
}

template <Scalar T>
Matrix<T> scale(const Matrix<T>& a, const T& s) {
  return a * s;
}

template <Scalar T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b) {
  detail::require_same_shape(a, b, "hadamard");
  return a.cwiseProduct(b);
}

template <Scalar T>
RealOf<T> frobenius(const Matrix<T>& a) {
  return a.norm();
}

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (!is_finite(a(i, j))) return false;
    }
  }
  return true;
}

template <Scalar T>
Matrix<T> diag_embed(const RealVector<RealOf<T>>& d) {
  return d.template cast<T>().asDiagonal();
}

/// Explicit precision conversion; real to complex is allowed, not the reverse.
template <Scalar To, Scalar From>
  requires(is_complex_v<To> || !is_complex_v<From>)
Matrix<To> convert(const Matrix<From>& a) {
  return a.template cast<To>();
}

}  // namespace svdinv
