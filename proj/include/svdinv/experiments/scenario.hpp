#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/QR>

#include "svdinv/matrix.hpp"

namespace svdinv::experiments {

/// splitmix64 finaliser; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of stream `counter` under `key`, independent of evaluation order.
constexpr std::uint64_t derive_seed(std::uint64_t key, std::uint64_t counter) {
  return mix64(mix64(key) ^ (counter * 0xd1342543de82ef95ULL + 1));
}

enum class Case { One = 1, Two = 2 };

inline double case_scale(Case c) { return c == Case::One ? 1e-10 : 1e-18; }

inline Case parse_case(int c) {
  if (c == 1) return Case::One;
  if (c == 2) return Case::Two;
  throw std::invalid_argument("case must be 1 or 2, got " + std::to_string(c));
}

/// Singular vectors of the constructed matrix: identity, or Haar-distributed
/// orthogonal bases drawn from the same stream.
enum class Basis { Identity, RandomOrthogonal };

inline std::string to_string(Basis b) {
  return b == Basis::Identity ? "identity" : "random_orthogonal";
}

inline Basis parse_basis(const std::string& s) {
  if (s == "identity") return Basis::Identity;
  if (s == "random_orthogonal") return Basis::RandomOrthogonal;
  throw std::invalid_argument("unknown basis '" + s + "'");
}

struct Scenario {
  Eigen::Index size = 10;
  Case scenario_case = Case::One;
  std::uint64_t seed = 3407;
  Basis basis = Basis::Identity;
};

struct ScenarioMatrix {
  Matrix<double> A;
  /// The constructed spectrum in draw order: (sigma0, sigma1, others...).
  RealVector<double> S0;
};

namespace detail {

inline Matrix<double> haar_orthogonal(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix<double> z(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) z(i, j) = g(rng);
  Eigen::HouseholderQR<Matrix<double>> qr(z);
  Matrix<double> q = qr.householderQ();
  const Matrix<double> r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

}  // namespace detail

/// A = U0 diag(S0) V0^H in double with sigma1 = sigma0 + sigma0 * 1e-15 and
/// all values |N(0,1)| * scale.
inline ScenarioMatrix generate_scenario(const Scenario& sc) {
  if (sc.size < 2) throw std::invalid_argument("scenario size must be >= 2");
  std::mt19937_64 rng(sc.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const double scale = case_scale(sc.scenario_case);
  const Eigen::Index n = sc.size;

  ScenarioMatrix out;
  out.S0.resize(n);
  out.S0(0) = std::abs(g(rng)) * scale;
  out.S0(1) = out.S0(0) + out.S0(0) * 1e-15;
  for (Eigen::Index i = 2; i < n; ++i) out.S0(i) = std::abs(g(rng)) * scale;

  const Matrix<double> D = out.S0.asDiagonal();
  if (sc.basis == Basis::Identity) {
    out.A = D;
  } else {
    const Matrix<double> U = detail::haar_orthogonal(n, rng);
    const Matrix<double> V = detail::haar_orthogonal(n, rng);
    out.A = U * D * V.transpose();
  }
  return out;
}

/// 1 / (sigma1^2 - sigma0^2) of the constructed duplicate pair.
inline double duplicate_pair_f(const ScenarioMatrix& m) {
  const double a = m.S0(0), b = m.S0(1);
  return 1.0 / (b * b - a * a);
}

}  // namespace svdinv::experiments
