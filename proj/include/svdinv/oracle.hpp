#pragma once

#include <complex>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "svdinv/tape.hpp"

namespace svdinv {

/// Central differences with step h on every entry (real and imaginary parts
/// separately for complex matrices).
struct FdSpec {
  double step = 1e-6;

  void validate() const {
    if (!(step > 0) || !std::isfinite(step)) {
      throw std::invalid_argument("finite-difference step must be positive");
    }
  }
};

template <Scalar T>
struct FdResult {
  Matrix<T> grad;
  /// (row, col) of entries whose perturbed loss was not finite.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> nonfinite;

  bool ok() const { return nonfinite.empty(); }
};

/// Gradient G of a real loss with dL = Re tr(G^H dA), by central differences.
template <Scalar T>
FdResult<T> finite_difference(const std::function<double(const Matrix<T>&)>& loss,
                              const Matrix<T>& at, const FdSpec& spec = {}) {
  spec.validate();
  using R = RealOf<T>;
  const R h = static_cast<R>(spec.step);
  FdResult<T> out{Matrix<T>::Zero(at.rows(), at.cols()), {}};
  Matrix<T> x = at;
  auto central = [&](Eigen::Index i, Eigen::Index j, const T& dir, bool& bad) {
    const T saved = x(i, j);
    x(i, j) = saved + dir;
    const double fp = loss(x);
    x(i, j) = saved - dir;
    const double fm = loss(x);
    x(i, j) = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) bad = true;
    return static_cast<R>((fp - fm) / (2.0 * static_cast<double>(h)));
  };
  for (Eigen::Index j = 0; j < at.cols(); ++j) {
    for (Eigen::Index i = 0; i < at.rows(); ++i) {
      bool bad = false;
      const R re = central(i, j, T(h), bad);
      if constexpr (is_complex_v<T>) {
        const R im = central(i, j, T(R(0), h), bad);
        out.grad(i, j) = T(re, im);
      } else {
        out.grad(i, j) = re;
      }
      if (bad) out.nonfinite.emplace_back(i, j);
    }
  }
  return out;
}

/// Central differences with respect to named real scalars.
struct ParamFdResult {
  std::map<std::string, double> grad;
  std::vector<std::string> nonfinite;

  bool ok() const { return nonfinite.empty(); }
};

inline ParamFdResult finite_difference(
    const std::function<double(const std::map<std::string, double>&)>& loss,
    const std::map<std::string, double>& at, const FdSpec& spec = {}) {
  spec.validate();
  ParamFdResult out;
  std::map<std::string, double> x = at;
  for (const auto& [name, v] : at) {
    x[name] = v + spec.step;
    const double fp = loss(x);
    x[name] = v - spec.step;
    const double fm = loss(x);
    x[name] = v;
    if (!std::isfinite(fp) || !std::isfinite(fm)) out.nonfinite.push_back(name);
    out.grad[name] = (fp - fm) / (2.0 * spec.step);
  }
  return out;
}

/// Double-precision counterpart of a scalar type (float -> double,
/// complex<float> -> complex<double>).
template <Scalar T>
using DoubleOf = std::conditional_t<is_complex_v<T>, std::complex<double>, double>;

template <Scalar T>
Bindings<DoubleOf<T>> to_double(const Bindings<T>& b) {
  Bindings<DoubleOf<T>> out;
  for (const auto& [k, m] : b.inputs) out.inputs[k] = m.template cast<DoubleOf<T>>();
  for (const auto& [k, p] : b.params) out.params[k] = static_cast<double>(p);
  return out;
}

template <Scalar D>
struct ReferenceGradient {
  Tape<D> tape;
  Values<D> values;
  GradientSet<D> grads;
  /// False when the reference itself is not finite; such a trial must be
  /// discarded, never patched.
  bool valid = false;
};

/// Forward and backward of the same graph entirely in double precision with
/// the unguarded Exact backward.
template <Scalar T>
ReferenceGradient<DoubleOf<T>> reference_gradient(const Tape<T>& tape, const Bindings<T>& b,
                                                  NodeId loss) {
  using D = DoubleOf<T>;
  ReferenceGradient<D> r{tape.template rebind<D>(), {}, {}, false};
  r.values = r.tape.forward(to_double(b));
  r.grads = r.tape.backward(r.values, loss, GradMode::exact());
  r.valid = r.grads.all_finite();
  return r;
}

/// Tape loss as a function of one bound input, for use with finite_difference.
template <Scalar T>
std::function<double(const Matrix<T>&)> loss_of_input(const Tape<T>& tape, Bindings<T> b,
                                                      NodeId loss, const std::string& input) {
  return [&tape, b = std::move(b), loss, input](const Matrix<T>& x) mutable {
    b.inputs[input] = x;
    return static_cast<double>(tape.forward(b).scalar(loss));
  };
}

template <Scalar T>
std::function<double(const std::map<std::string, double>&)> loss_of_params(
    const Tape<T>& tape, Bindings<T> b, NodeId loss) {
  return [&tape, b = std::move(b), loss](const std::map<std::string, double>& p) mutable {
    for (const auto& [k, v] : p) b.params[k] = static_cast<RealOf<T>>(v);
    return static_cast<double>(tape.forward(b).scalar(loss));
  };
}

}  // namespace svdinv
