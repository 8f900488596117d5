#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "svdinv/svd_backward.hpp"

namespace svdinv {

/// Soft shrinkage by tau, or hard zeroing of the trailing `tail` values.
struct ThresholdSpec {
  enum class Kind { Soft, HardTail };
  Kind kind = Kind::Soft;
  double tau = 0;
  Eigen::Index tail = 0;

  static ThresholdSpec soft(double tau) { return {Kind::Soft, tau, 0}; }
  static ThresholdSpec hard_tail(Eigen::Index d) { return {Kind::HardTail, 0, d}; }

  void validate(Eigen::Index k) const {
    if (kind == Kind::Soft && (!std::isfinite(tau) || tau < 0)) {
      throw std::invalid_argument("soft threshold must be finite and >= 0");
    }
    if (kind == Kind::HardTail && (tail < 0 || tail > k)) {
      throw std::invalid_argument("hard tail count exceeds number of singular values");
    }
  }
};

/// Thresholded singular values together with the "kept" mask. For soft
/// thresholding a value is kept iff s > tau (strict).
template <RealScalar R>
struct Shrunk {
  RealVector<R> values;
  Eigen::Matrix<bool, Eigen::Dynamic, 1> kept;
};

template <RealScalar R>
Shrunk<R> shrink(const RealVector<R>& S, const ThresholdSpec& spec) {
  const Eigen::Index k = S.size();
  spec.validate(k);
  Shrunk<R> out{RealVector<R>(k), Eigen::Matrix<bool, Eigen::Dynamic, 1>(k)};
  const R tau = static_cast<R>(spec.tau);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (spec.kind == ThresholdSpec::Kind::Soft) {
      out.kept(i) = S(i) > tau;
      out.values(i) = out.kept(i) ? S(i) - tau : R(0);
    } else {
      out.kept(i) = i < k - spec.tail;
      out.values(i) = out.kept(i) ? S(i) : R(0);
    }
  }
  return out;
}

template <Scalar T>
struct SvtResult {
  Matrix<T> B;
  SvdFactors<T> factors;
  RealVector<RealOf<T>> S_hat;
  Eigen::Matrix<bool, Eigen::Dynamic, 1> kept;
};

/// B = U diag(shrink(S)) V^H.
template <Scalar T>
SvtResult<T> svt(const Matrix<T>& A, const ThresholdSpec& spec) {
  SvtResult<T> r;
  r.factors = svd(A);
  Shrunk<RealOf<T>> s = shrink(r.factors.S, spec);
  r.S_hat = std::move(s.values);
  r.kept = std::move(s.kept);
  r.B = r.factors.U * diag_embed<T>(r.S_hat) * r.factors.V.adjoint();
  return r;
}

/// Cotangents of the U, S, V factors induced by a cotangent on
/// B = U diag(S_hat) V^H, with S_hat = shrink(S).
template <Scalar T>
struct SvtFactorCotangents {
  Matrix<T> Ubar;
  RealVector<RealOf<T>> Sbar;
  Matrix<T> Vbar;
  RealOf<T> taubar = 0;
};

template <Scalar T>
SvtFactorCotangents<T> svt_factor_cotangents(const Matrix<T>& Bbar, const SvtResult<T>& c,
                                             const ThresholdSpec& spec) {
  using R = RealOf<T>;
  const SvdFactors<T>& f = c.factors;
  detail::require_same_shape(Bbar, c.B, "svt_vjp");
  const Eigen::Matrix<T, Eigen::Dynamic, 1> sh = c.S_hat.template cast<T>();
  SvtFactorCotangents<T> out;
  out.Ubar = Bbar * f.V * sh.asDiagonal();
  out.Vbar = Bbar.adjoint() * f.U * sh.asDiagonal();
  const Matrix<T> P = f.U.adjoint() * Bbar * f.V;
  const Eigen::Index k = f.S.size();
  out.Sbar.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const R d = real_part(P(i, i));
    out.Sbar(i) = c.kept(i) ? d : R(0);
    if (spec.kind == ThresholdSpec::Kind::Soft && c.kept(i)) out.taubar -= d;
  }
  return out;
}

template <Scalar T>
struct SvtGradient {
  Matrix<T> Abar;
  RealOf<T> taubar = 0;
};

template <Scalar T>
SvtGradient<T> svt_vjp(const Matrix<T>& Bbar, const SvtResult<T>& cached,
                       const ThresholdSpec& spec, const GradMode& mode) {
  SvtFactorCotangents<T> fc = svt_factor_cotangents(Bbar, cached, spec);
  SvtGradient<T> g;
  g.Abar = svd_vjp(cached.factors, fc.Ubar, fc.Sbar, fc.Vbar, mode);
  g.taubar = fc.taubar;
  return g;
}

}  // namespace svdinv
