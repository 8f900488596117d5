#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace svdinv {

/// Shape disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value that must be finite was not.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

template <class T>
struct is_complex : std::false_type {};
template <class R>
struct is_complex<std::complex<R>> : std::true_type {};
template <class T>
inline constexpr bool is_complex_v = is_complex<T>::value;

template <class T>
struct real_of {
  using type = T;
};
template <class R>
struct real_of<std::complex<R>> {
  using type = R;
};
/// Underlying real type: float for complex<float>, etc.
template <class T>
using RealOf = typename real_of<T>::type;

/// The four element types the library is instantiated for.
template <class T>
concept Scalar = std::is_same_v<T, float> || std::is_same_v<T, double> ||
                 std::is_same_v<T, std::complex<float>> ||
                 std::is_same_v<T, std::complex<double>>;

template <class T>
concept RealScalar = std::is_same_v<T, float> || std::is_same_v<T, double>;

enum class Precision { Single, Double };

template <Scalar T>
inline constexpr Precision precision_of =
    std::is_same_v<RealOf<T>, float> ? Precision::Single : Precision::Double;

inline std::string to_string(Precision p) {
  return p == Precision::Single ? "f32" : "f64";
}

template <Scalar T>
T conj(const T& x) {
  if constexpr (is_complex_v<T>) {
    return std::conj(x);
  } else {
    return x;
  }
}

template <Scalar T>
RealOf<T> real_part(const T& x) {
  if constexpr (is_complex_v<T>) {
    return x.real();
  } else {
    return x;
  }
}

template <Scalar T>
RealOf<T> abs2(const T& x) {
  if constexpr (is_complex_v<T>) {
    return std::norm(x);
  } else {
    return x * x;
  }
}

template <Scalar T>
bool is_finite(const T& x) {
  if constexpr (is_complex_v<T>) {
    return std::isfinite(x.real()) && std::isfinite(x.imag());
  } else {
    return std::isfinite(x);
  }
}

/// Unit-modulus phase of x (1 for x == 0).
template <Scalar T>
T phase(const T& x) {
  const RealOf<T> a = std::abs(x);
  if (a == RealOf<T>(0)) return T(1);
  return x / a;
}

}  // namespace svdinv
