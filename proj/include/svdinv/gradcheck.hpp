#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "svdinv/experiments/scenario.hpp"
#include "svdinv/oracle.hpp"

namespace svdinv {

struct GradcheckConfig {
  int cases = 20;
  std::uint64_t seed = 3407;
  /// Bound on the relative error against finite differences.
  double tolerance = 1e-5;
  /// Bound on the relative disagreement of Exact and Inv on separated spectra.
  double agreement_tolerance = 1e-12;
  FdSpec fd{};
  double min_gap = 0.1;
};

struct OpCheck {
  std::string op;
  int cases = 0;
  double worst = 0;
  double tolerance = 0;
  bool pass() const { return worst <= tolerance; }
};

struct GradcheckReport {
  std::vector<OpCheck> checks;
  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const OpCheck& c) { return c.pass(); });
  }
};

namespace detail {

template <Scalar T>
Matrix<T> gaussian(Eigen::Index m, Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix<T> a(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      if constexpr (is_complex_v<T>) {
        a(i, j) = T(g(rng), g(rng));
      } else {
        a(i, j) = g(rng);
      }
    }
  }
  return a;
}

template <Scalar T>
Matrix<T> orthonormal(Eigen::Index m, Eigen::Index k, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix<T>> qr(gaussian<T>(m, k, rng));
  return qr.householderQ() * Matrix<T>::Identity(m, k);
}

/// Spectrum with consecutive gaps in [gap, gap + 0.5], smallest >= gap.
inline RealVector<double> gapped_spectrum(Eigen::Index k, double gap, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 0.5);
  RealVector<double> s(k);
  double cur = gap + u(rng);
  for (Eigen::Index i = k; i-- > 0;) {
    s(i) = cur;
    cur += gap + u(rng);
  }
  return s;
}

template <Scalar T>
Matrix<T> gapped_matrix(Eigen::Index m, Eigen::Index n, double gap, std::mt19937_64& rng) {
  const Eigen::Index k = std::min(m, n);
  const RealVector<double> s = gapped_spectrum(k, gap, rng);
  return orthonormal<T>(m, k, rng) * s.cast<T>().asDiagonal() * orthonormal<T>(n, k, rng).adjoint();
}

template <class A, class B>
double rel_err(const A& got, const B& want) {
  const double w = want.norm();
  const double d = (got - want).norm();
  return w > 0 ? d / w : d;
}

/// L1 and soft-threshold kinks are avoided: every entry of B and every
/// |sigma - tau| must be at least 10 h.
template <Scalar T>
bool clear_of_kinks(const Matrix<T>& a, double tau, double h) {
  const SvtResult<T> r = svt(a, ThresholdSpec::soft(tau));
  for (Eigen::Index i = 0; i < r.factors.S.size(); ++i) {
    if (std::abs(r.factors.S(i) - tau) < 10 * h) return false;
  }
  for (Eigen::Index i = 0; i < r.B.size(); ++i) {
    if (std::abs(r.B.data()[i]) < 10 * h) return false;
  }
  return true;
}

}  // namespace detail

/// Finite-difference and cross-mode checks over a random suite of
/// double-precision problems with separated spectra.
inline GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  using cd = std::complex<double>;
  cfg.fd.validate();
  std::mt19937_64 rng(experiments::derive_seed(cfg.seed, 0x9c));
  std::uniform_int_distribution<int> dim(2, 7);
  std::map<std::string, OpCheck> checks;
  auto record = [&](const std::string& op, double err, double tol) {
    OpCheck& c = checks[op];
    c.op = op;
    c.tolerance = tol;
    c.cases += 1;
    c.worst = std::max(c.worst, std::isfinite(err) ? err : std::numeric_limits<double>::infinity());
  };

  for (int trial = 0; trial < cfg.cases; ++trial) {
    const int m = dim(rng), n = dim(rng);
    const Matrix<double> a = detail::gapped_matrix<double>(m, n, cfg.min_gap, rng);
    const SvdFactors<double> f = svd(a);
    const Eigen::Index k = f.S.size();

    // Sum of singular values.
    {
      const FdResult<double> fd = finite_difference<double>(
          [](const Matrix<double>& x) { return svd(x).S.sum(); }, a, cfg.fd);
      const RealVector<double> ones = RealVector<double>::Ones(k);
      const Matrix<double> ge = svd_vjp<double>(f, {}, ones, {}, GradMode::exact());
      const Matrix<double> gi = svd_vjp<double>(f, {}, ones, {}, GradMode::inv());
      record("svd_vjp:sum_sigma", std::max(detail::rel_err(ge, fd.grad), detail::rel_err(gi, fd.grad)),
             cfg.tolerance);
      record("exact_vs_inv", detail::rel_err(gi, ge), cfg.agreement_tolerance);
    }
    // Squared Frobenius norm of the reconstruction, through a tape.
    {
      Tape<double> t;
      const NodeId x = t.input("A");
      const NodeId s = t.svd(x);
      const NodeId r = t.reconstruct(s);
      const NodeId l = t.mse_loss(r, t.mask_project(t.input("Z"), r));
      Bindings<double> b;
      b.inputs["A"] = a;
      b.inputs["Z"] = Matrix<double>::Zero(m, n);
      const FdResult<double> fd = finite_difference(loss_of_input(t, b, l, "A"), a, cfg.fd);
      const Values<double> v = t.forward(b);
      const Matrix<double> ge = t.backward(v, l, GradMode::exact()).matrix(x, m, n);
      const Matrix<double> gi = t.backward(v, l, GradMode::inv()).matrix(x, m, n);
      record("svd_vjp:frobenius_sq", std::max(detail::rel_err(ge, fd.grad), detail::rel_err(gi, fd.grad)),
             cfg.tolerance);
      record("exact_vs_inv", detail::rel_err(gi, ge), cfg.agreement_tolerance);
    }
    // L1 norm of soft SVT, real and complex.
    {
      const double tau = 0.5 * (f.S(0) + f.S(k - 1)) + 0.01;
      if (detail::clear_of_kinks(a, tau, cfg.fd.step)) {
        auto loss = [tau](const Matrix<double>& x) {
          return svt(x, ThresholdSpec::soft(tau)).B.cwiseAbs().sum();
        };
        const FdResult<double> fd = finite_difference<double>(loss, a, cfg.fd);
        const SvtResult<double> r = svt(a, ThresholdSpec::soft(tau));
        const Matrix<double> bb = r.B.unaryExpr([](double z) { return z > 0 ? 1.0 : (z < 0 ? -1.0 : 0.0); });
        const Matrix<double> ge = svt_vjp(bb, r, ThresholdSpec::soft(tau), GradMode::exact()).Abar;
        const Matrix<double> gi = svt_vjp(bb, r, ThresholdSpec::soft(tau), GradMode::inv()).Abar;
        record("svt_vjp:l1", std::max(detail::rel_err(ge, fd.grad), detail::rel_err(gi, fd.grad)),
               cfg.tolerance);
        record("exact_vs_inv", detail::rel_err(gi, ge), cfg.agreement_tolerance);
      }
      const Matrix<cd> c = detail::gapped_matrix<cd>(m, n, cfg.min_gap, rng);
      const RealVector<double> sc = svd(c).S;
      const double tc = 0.5 * (sc(0) + sc(k - 1)) + 0.01;
      if (detail::clear_of_kinks(c, tc, cfg.fd.step)) {
        auto loss = [tc](const Matrix<cd>& x) {
          return svt(x, ThresholdSpec::soft(tc)).B.cwiseAbs().sum();
        };
        const FdResult<cd> fd = finite_difference<cd>(loss, c, cfg.fd);
        const SvtResult<cd> r = svt(c, ThresholdSpec::soft(tc));
        const Matrix<cd> bb = r.B.unaryExpr([](cd z) { return std::abs(z) > 0 ? z / std::abs(z) : cd(0); });
        const Matrix<cd> gi = svt_vjp(bb, r, ThresholdSpec::soft(tc), GradMode::inv()).Abar;
        record("svt_vjp:l1_complex", detail::rel_err(gi, fd.grad), cfg.tolerance);
      }
    }
    // Hermitian PSD input, loss tr(f(S)) with f(s) = s^2 / 2 + s.
    {
      const Eigen::Index p = std::min(m, n);
      const Matrix<cd> q = detail::orthonormal<cd>(p, p, rng);
      const RealVector<double> ev = detail::gapped_spectrum(p, cfg.min_gap, rng);
      Matrix<cd> h = q * ev.cast<cd>().asDiagonal() * q.adjoint();
      h = (0.5 * (h + h.adjoint())).eval();
      auto loss = [](const Matrix<cd>& x) {
        const RealVector<double> s = svd(x).S;
        return (0.5 * s.array().square() + s.array()).sum();
      };
      const FdResult<cd> fd = finite_difference<cd>(loss, h, cfg.fd);
      const SvdFactors<cd> fh = svd(h);
      const RealVector<double> sb = (fh.S.array() + 1.0).matrix();
      record("svd_vjp:psd", detail::rel_err(svd_vjp<cd>(fh, {}, sb, {}, GradMode::inv()), fd.grad),
             cfg.tolerance);
    }
    // Plain tape ops and the double reference oracle.
    {
      Tape<double> t;
      const NodeId x = t.input("A");
      const NodeId w = t.input("W");
      const NodeId pw = t.parameter("p");
      const NodeId y = t.hadamard(t.matmul(t.conj_transpose(w), x), t.matmul(t.conj_transpose(w), x));
      const NodeId l = t.mse_loss(t.scale_by_param(t.scalar_exp(pw), y), t.input("Z"));
      Bindings<double> b;
      b.inputs["A"] = a;
      b.inputs["W"] = detail::gaussian<double>(m, m, rng);
      b.inputs["Z"] = detail::gaussian<double>(m, n, rng);
      b.params["p"] = 0.1;
      const ReferenceGradient<double> ref = reference_gradient(t, b, l);
      const FdResult<double> fd = finite_difference(loss_of_input(t, b, l, "A"), a, cfg.fd);
      const ParamFdResult pfd = finite_difference(loss_of_params(t, b, l), {{"p", 0.1}}, cfg.fd);
      const double pe = std::abs(ref.grads.scalar(pw) - pfd.grad.at("p")) /
                        std::max(std::abs(pfd.grad.at("p")), 1e-300);
      record("tape:plain", std::max(detail::rel_err(ref.grads.matrix(x, m, n), fd.grad), pe),
             cfg.tolerance);
    }
  }

  GradcheckReport rep;
  for (auto& [name, c] : checks) rep.checks.push_back(c);
  return rep;
}

}  // namespace svdinv
