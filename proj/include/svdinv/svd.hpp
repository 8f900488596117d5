#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "svdinv/matrix.hpp"

namespace svdinv {

/// Economy SVD A = U diag(S) V^H with k = min(m, n) columns.
template <Scalar T>
struct SvdFactors {
  Matrix<T> U;                // m x k
  RealVector<RealOf<T>> S;    // length k, descending, nonnegative
  Matrix<T> V;                // n x k

  Eigen::Index rows() const { return U.rows(); }
  Eigen::Index cols() const { return V.rows(); }
  Eigen::Index rank_dim() const { return S.size(); }

  Matrix<T> reconstruct() const { return U * diag_embed<T>(S) * V.adjoint(); }
};

struct JacobiOptions {
  /// Rotation threshold on |a_p^H a_q| / (|a_p| |a_q|); 0 selects the
  /// per-precision default (1e-15 double, 1e-7 single).
  double tolerance = 0.0;
  int max_sweeps = 60;
};

template <Scalar T>
constexpr double default_jacobi_tolerance() {
  return precision_of<T> == Precision::Double ? 1e-15 : 1e-7;
}

namespace detail {

/// One-sided (Hestenes) Jacobi on the columns of W (rows >= cols).
/// On return the columns of W are mutually orthogonal and V holds the
/// accumulated unitary rotations, so that W_in * V = W_out.
template <Scalar T>
int hestenes_sweeps(Matrix<T>& W, Matrix<T>& V, const JacobiOptions& opt) {
  using R = RealOf<T>;
  const Eigen::Index n = W.cols();
  const R tol = static_cast<R>(opt.tolerance > 0 ? opt.tolerance
                                                  : default_jacobi_tolerance<T>());
  int sweep = 0;
  for (; sweep < opt.max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const R alpha = W.col(p).squaredNorm();
        const R beta = W.col(q).squaredNorm();
        const T gamma = W.col(p).dot(W.col(q));  // conjugates the left operand
        const R g = std::abs(gamma);
        if (g == R(0) || g <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;

        // Rotate the Hermitian 2x2 Gram [[alpha, gamma], [conj(gamma), beta]]
        // to diagonal form after factoring out the phase of gamma.
        const T ph = phase(gamma);
        const R zeta = (beta - alpha) / (R(2) * g);
        const R t = std::copysign(R(1), zeta) /
                    (std::abs(zeta) + std::sqrt(R(1) + zeta * zeta));
        const R c = R(1) / std::sqrt(R(1) + t * t);
        const R s = c * t;
        const R tau = s / (R(1) + c);

        // Written as corrections to the old entries (tau = tan(theta/2)) so
        // that tiny rotations with c rounding to 1 stay norm-preserving.
        // The phase only multiplies the s terms.
        auto rotate = [&](Matrix<T>& X) {
          for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const T xp = X(i, p);
            const T xq = X(i, q);
            X(i, p) = xp - s * (xq * conj(ph) + tau * xp);
            X(i, q) = xq + s * (xp * ph - tau * xq);
          }
        };
        rotate(W);
        rotate(V);
      }
    }
    if (!rotated) break;
  }
  return sweep;
}

/// Fill columns of U flagged in `missing` with unit vectors orthogonal to the
/// remaining columns (modified Gram-Schmidt against the standard basis).
template <Scalar T>
void complete_orthonormal(Matrix<T>& U, const std::vector<bool>& missing) {
  using R = RealOf<T>;
  const Eigen::Index m = U.rows();
  Eigen::Index next_basis = 0;
  for (Eigen::Index j = 0; j < U.cols(); ++j) {
    if (!missing[static_cast<std::size_t>(j)]) continue;
    for (; next_basis < m; ++next_basis) {
      Eigen::Matrix<T, Eigen::Dynamic, 1> v = Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(m);
      v(next_basis) = T(1);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index c = 0; c < U.cols(); ++c) {
          if (c == j || (missing[static_cast<std::size_t>(c)] && c > j)) continue;
          v -= U.col(c) * U.col(c).dot(v);
        }
      }
      const R nv = v.norm();
      if (nv > R(0.5)) {
        U.col(j) = v / nv;
        ++next_basis;
        break;
      }
    }
  }
}

template <Scalar T>
SvdFactors<T> svd_tall(const Matrix<T>& A, const JacobiOptions& opt) {
  using R = RealOf<T>;
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  Matrix<T> W = A;
  Matrix<T> V = Matrix<T>::Identity(n, n);
  hestenes_sweeps(W, V, opt);

  RealVector<R> norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms(j) = W.col(j).norm();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });

  SvdFactors<T> f;
  f.U.resize(m, n);
  f.V.resize(n, n);
  f.S.resize(n);
  std::vector<bool> missing(static_cast<std::size_t>(n), false);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    const R sigma = norms(src);
    f.S(j) = sigma;
    f.V.col(j) = V.col(src);
    if (sigma > R(0)) {
      f.U.col(j) = W.col(src) / sigma;
    } else {
      f.U.col(j).setZero();
      missing[static_cast<std::size_t>(j)] = true;
    }
  }
  complete_orthonormal(f.U, missing);
  return f;
}

/// Gauge: first entry of each U column above a relative noise floor made
/// real-positive; the same phase is applied to V so U S V^H is unchanged.
template <Scalar T>
void fix_sign_convention(SvdFactors<T>& f) {
  using R = RealOf<T>;
  const R floor = R(16) * std::numeric_limits<R>::epsilon();
  for (Eigen::Index j = 0; j < f.U.cols(); ++j) {
    const R colmax = f.U.col(j).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < f.U.rows(); ++i) {
      const T u = f.U(i, j);
      if (std::abs(u) > floor * colmax) {
        const T ph = conj(phase(u));
        f.U.col(j) *= ph;
        f.V.col(j) *= ph;
        break;
      }
    }
  }
}

}  // namespace detail

/// Economy SVD by cyclic one-sided Jacobi. Deterministic for a given input;
/// singular values sorted descending with zeros retained.
template <Scalar T>
SvdFactors<T> svd(const Matrix<T>& A, const JacobiOptions& opt = {}) {
  if (A.rows() < 1 || A.cols() < 1) {
    throw ShapeError("svd: empty matrix " + detail::shape_str(A.rows(), A.cols()));
  }
  if (!all_finite(A)) throw NonFiniteError("svd: input has non-finite entries");

  SvdFactors<T> f;
  if (A.rows() >= A.cols()) {
    f = detail::svd_tall<T>(A, opt);
  } else {
    SvdFactors<T> h = detail::svd_tall<T>(A.adjoint(), opt);
    f.U = std::move(h.V);
    f.S = std::move(h.S);
    f.V = std::move(h.U);
  }
  detail::fix_sign_convention(f);
  return f;
}

/// Reconstruction and orthonormality residuals, both relative.
struct SvdResiduals {
  double reconstruction = 0;
  double orthonormality_u = 0;
  double orthonormality_v = 0;
};

/// Residuals are evaluated in double precision so that single-precision
/// factors are not penalised for rounding in the check itself.
template <Scalar T>
SvdResiduals svd_residuals(const Matrix<T>& A, const SvdFactors<T>& f) {
  using D = std::conditional_t<is_complex_v<T>, std::complex<double>, double>;
  const Matrix<D> a = A.template cast<D>();
  const Matrix<D> u = f.U.template cast<D>();
  const Matrix<D> v = f.V.template cast<D>();
  const RealVector<double> s = f.S.template cast<double>();
  SvdResiduals r;
  const double denom = std::max(a.norm(), std::numeric_limits<double>::min());
  r.reconstruction = (u * s.template cast<D>().asDiagonal() * v.adjoint() - a).norm() / denom;
  const Eigen::Index k = s.size();
  const double sk = std::sqrt(static_cast<double>(k));
  r.orthonormality_u = (u.adjoint() * u - Matrix<D>::Identity(k, k)).norm() / sk;
  r.orthonormality_v = (v.adjoint() * v - Matrix<D>::Identity(k, k)).norm() / sk;
  return r;
}

}  // namespace svdinv
