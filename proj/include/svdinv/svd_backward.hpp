#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "svdinv/svd.hpp"

namespace svdinv {

/// Which backward rule handles (near-)duplicate singular values.
enum class GradVariant {
  Exact,   // unguarded 1/(s_j^2 - s_i^2); may emit inf/NaN
  Tf,      // equal pairs: F = 0
  Clip,    // equal pairs: F = +-clip_value
  Taylor,  // F replaced by a truncated geometric series everywhere
  Inv,     // pseudoinverse solution: F = 0, T = 1/s on equal pairs
};

inline std::string to_string(GradVariant v) {
  switch (v) {
    case GradVariant::Exact: return "exact";
    case GradVariant::Tf: return "tf";
    case GradVariant::Clip: return "clip";
    case GradVariant::Taylor: return "taylor";
    case GradVariant::Inv: return "inv";
  }
  return "?";
}

inline GradVariant parse_variant(const std::string& s) {
  if (s == "exact") return GradVariant::Exact;
  if (s == "tf") return GradVariant::Tf;
  if (s == "clip") return GradVariant::Clip;
  if (s == "taylor") return GradVariant::Taylor;
  if (s == "inv") return GradVariant::Inv;
  throw std::invalid_argument("unknown gradient mode '" + s + "'");
}

/// t: pairs with |s_j^2 - s_i^2| < 1/t are treated as equal.
/// clamp: finite ceiling for entries that would overflow.
struct StabilityParams {
  double t = 0;
  double clamp = 0;
};

template <RealScalar R>
StabilityParams default_stability() {
  if constexpr (std::is_same_v<R, float>) {
    return {1e30, static_cast<double>(std::numeric_limits<float>::max())};
  } else {
    return {1e300, std::numeric_limits<double>::max()};
  }
}

struct GradMode {
  GradVariant variant = GradVariant::Inv;
  double clip_value = 1e16;
  int taylor_k = 9;
  /// Unset means the per-precision default of the working type.
  std::optional<StabilityParams> stability;

  static GradMode exact() { return of(GradVariant::Exact); }
  static GradMode tf() { return of(GradVariant::Tf); }
  static GradMode clip(double value = 1e16) {
    GradMode m = of(GradVariant::Clip);
    m.clip_value = value;
    return m;
  }
  static GradMode taylor(int k = 9) {
    GradMode m = of(GradVariant::Taylor);
    m.taylor_k = k;
    return m;
  }
  static GradMode inv() { return of(GradVariant::Inv); }
  static GradMode of(GradVariant v) {
    GradMode m;
    m.variant = v;
    return m;
  }

  GradMode with_stability(StabilityParams p) const {
    GradMode m = *this;
    m.stability = p;
    return m;
  }

  template <RealScalar R>
  StabilityParams resolved_stability() const {
    return stability ? *stability : default_stability<R>();
  }

  std::string name() const { return to_string(variant); }

  template <RealScalar R>
  void validate() const {
    if (variant == GradVariant::Clip && !(clip_value > 0)) {
      throw std::invalid_argument("clip value must be positive");
    }
    if (variant == GradVariant::Taylor && taylor_k < 1) {
      throw std::invalid_argument("taylor degree must be >= 1");
    }
    const StabilityParams p = resolved_stability<R>();
    if (!(p.t > 0) || !std::isfinite(p.t)) {
      throw std::invalid_argument("stability threshold t must be positive and finite");
    }
    if (!(p.clamp > 0) || !(p.clamp <= static_cast<double>(std::numeric_limits<R>::max()))) {
      throw std::invalid_argument("clamp must be positive and representable in " +
                                  to_string(std::is_same_v<R, float> ? Precision::Single
                                                                     : Precision::Double));
    }
  }
};

/// Auxiliary k x k matrices of the SVD differential.
template <RealScalar R>
struct AuxMatrices {
  Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic> F;
  Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic> T;
  RealVector<R> S_pinv;
};

enum class PairClass { Unequal, EqualNonzero, EqualZero };

template <RealScalar R>
bool pair_is_equal(R si, R sj, R t) {
  // 1/(s_j^2 - s_i^2) would exceed t in magnitude.
  return std::abs(sj * sj - si * si) < R(1) / t;
}

/// Symmetric k x k labelling of singular-value pairs.
template <RealScalar R>
Eigen::Matrix<PairClass, Eigen::Dynamic, Eigen::Dynamic> classify_pairs(
    const RealVector<R>& S, double t) {
  const Eigen::Index k = S.size();
  Eigen::Matrix<PairClass, Eigen::Dynamic, Eigen::Dynamic> g(k, k);
  const R tt = static_cast<R>(t);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (!pair_is_equal(S(i), S(j), tt)) {
        g(i, j) = PairClass::Unequal;
      } else if (S(i) == R(0) && S(j) == R(0)) {
        g(i, j) = PairClass::EqualZero;
      } else {
        g(i, j) = PairClass::EqualNonzero;
      }
    }
  }
  return g;
}

/// Quadrant of the large/small split for SVT outputs: the first
/// `num_large` indices hold retained values. Returns 1..4 (row-major).
inline int split_part(Eigen::Index i, Eigen::Index j, Eigen::Index num_large) {
  const bool li = i < num_large;
  const bool lj = j < num_large;
  if (li && lj) return 1;
  if (li) return 2;
  if (lj) return 3;
  return 4;
}

namespace detail {

template <RealScalar R>
void require_valid_spectrum(const RealVector<R>& S) {
  for (Eigen::Index i = 0; i < S.size(); ++i) {
    if (!std::isfinite(S(i))) throw NonFiniteError("singular values must be finite");
    if (S(i) < R(0)) throw std::invalid_argument("singular values must be nonnegative");
  }
}

template <RealScalar R>
R clamp_magnitude(R v, R clamp) {
  if (std::isnan(v)) return v;
  return std::abs(v) > clamp ? std::copysign(clamp, v) : v;
}

}  // namespace detail

template <RealScalar R>
AuxMatrices<R> build_aux(const RealVector<R>& S, const GradMode& mode) {
  detail::require_valid_spectrum(S);
  mode.validate<R>();
  const StabilityParams sp = mode.resolved_stability<R>();
  const R t = static_cast<R>(sp.t);
  const R clamp = static_cast<R>(sp.clamp);
  const Eigen::Index k = S.size();

  AuxMatrices<R> aux;
  aux.F.setZero(k, k);
  aux.T.setZero(k, k);
  aux.S_pinv.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    aux.S_pinv(i) = S(i) != R(0) ? R(1) / S(i) : R(0);
  }

  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      const R si = S(i);
      const R sj = S(j);
      const bool equal = pair_is_equal(si, sj, t);
      switch (mode.variant) {
        case GradVariant::Exact:
          aux.F(i, j) = R(1) / (sj * sj - si * si);
          break;
        case GradVariant::Tf:
          aux.F(i, j) = equal ? R(0) : R(1) / (sj * sj - si * si);
          break;
        case GradVariant::Clip:
          if (!equal) {
            aux.F(i, j) = R(1) / (sj * sj - si * si);
          } else if (si != sj) {
            aux.F(i, j) = std::copysign(static_cast<R>(mode.clip_value), sj - si);
          }
          break;
        case GradVariant::Taylor: {
          if (si == sj) break;
          const R hi = std::max(si, sj);
          const R lo = std::min(si, sj);
          const R ratio = (lo / hi) * (lo / hi);
          R acc = 0;
          R term = 1;
          for (int p = 0; p <= mode.taylor_k; ++p) {
            acc += term;
            term *= ratio;
          }
          const R inv_hi = R(1) / hi;
          const R v = detail::clamp_magnitude(acc * inv_hi * inv_hi, clamp);
          aux.F(i, j) = sj > si ? v : -v;
          break;
        }
        case GradVariant::Inv:
          if (!equal) {
            aux.F(i, j) = R(1) / (sj * sj - si * si);
          } else if (si != R(0)) {
            aux.T(i, j) = std::min(R(1) / si, clamp);
          }
          break;
      }
    }
  }
  return aux;
}

/// Cotangent of A given cotangents of (U, S, V); dL = Re tr(Abar^H dA).
/// Missing cotangents may be passed as empty matrices / vectors.
template <Scalar T>
Matrix<T> svd_vjp(const SvdFactors<T>& f, const Matrix<T>& Ubar_in,
                  const RealVector<RealOf<T>>& Sbar_in, const Matrix<T>& Vbar_in,
                  const GradMode& mode) {
  using R = RealOf<T>;
  const Eigen::Index m = f.U.rows();
  const Eigen::Index n = f.V.rows();
  const Eigen::Index k = f.S.size();

  const Matrix<T> Ubar = Ubar_in.size() == 0 ? Matrix<T>::Zero(m, k) : Ubar_in;
  const Matrix<T> Vbar = Vbar_in.size() == 0 ? Matrix<T>::Zero(n, k) : Vbar_in;
  const RealVector<R> Sbar = Sbar_in.size() == 0 ? RealVector<R>::Zero(k) : Sbar_in;
  if (Ubar.rows() != m || Ubar.cols() != k) throw ShapeError("svd_vjp: Ubar shape");
  if (Vbar.rows() != n || Vbar.cols() != k) throw ShapeError("svd_vjp: Vbar shape");
  if (Sbar.size() != k) throw ShapeError("svd_vjp: Sbar length");

  const AuxMatrices<R> aux = build_aux(f.S, mode);
  const Matrix<T> F = aux.F.template cast<T>();
  const Matrix<T> Tm = aux.T.template cast<T>();
  const Eigen::Matrix<T, Eigen::Dynamic, 1> s_vec = f.S.template cast<T>();
  const Eigen::Matrix<T, Eigen::Dynamic, 1> s_pinv_vec = aux.S_pinv.template cast<T>();
  const auto S = s_vec.asDiagonal();
  const auto S_pinv = s_pinv_vec.asDiagonal();

  const Matrix<T> J = f.U.adjoint() * Ubar;  // U^H Ubar
  const Matrix<T> K = f.V.adjoint() * Vbar;  // V^H Vbar

  Matrix<T> inner = F.cwiseProduct(J - J.adjoint()) * S;
  inner += Tm.cwiseProduct(J);
  inner += S * F.cwiseProduct(K - K.adjoint());
  for (Eigen::Index i = 0; i < k; ++i) {
    inner(i, i) += T(Sbar(i));
    if constexpr (is_complex_v<T>) {
      // The diagonal of U^H dU and V^H dV is imaginary and only their
      // difference is pinned down by dA; use the minimum-norm split.
      const R c = (J(i, i).imag() - K(i, i).imag()) * R(0.5) * aux.S_pinv(i);
      inner(i, i) += T(R(0), c);
    }
  }

  Matrix<T> grad = f.U * inner * f.V.adjoint();
  if (m > k) grad += (Ubar - f.U * J) * S_pinv * f.V.adjoint();
  if (n > k) grad += f.U * S_pinv * (Vbar.adjoint() - K.adjoint() * f.V.adjoint());
  return grad;
}

}  // namespace svdinv
