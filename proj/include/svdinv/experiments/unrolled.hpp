#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "svdinv/tape.hpp"

namespace svdinv::experiments {

enum class Solver { Admm, Pgd };

inline std::string to_string(Solver s) { return s == Solver::Admm ? "admm" : "pgd"; }

inline Solver parse_solver(const std::string& s) {
  if (s == "admm") return Solver::Admm;
  if (s == "pgd") return Solver::Pgd;
  throw std::invalid_argument("unknown solver '" + s + "'");
}

/// Unrolled completion network. Inputs: "Y" (observations, unobserved
/// entries ignored), "M" (0/1 sampling mask), "X" (ground truth, loss only).
/// Parameters are logarithms of the per-iteration positive scalars.
template <Scalar T>
struct UnrolledNet {
  Tape<T> tape;
  Solver solver = Solver::Admm;
  int n_unroll = 1;
  NodeId y = 0, mask = 0, target = 0;
  NodeId output = 0;
  NodeId loss = 0;
  std::vector<NodeId> iterates;
  std::vector<std::string> param_names;
};

inline std::string iter_param(const std::string& base, int n) {
  return "log_" + base + "_" + std::to_string(n);
}

/// Z_n = SVT_{lambda/mu}(X_{n-1} + L_{n-1});
/// X_n = P_O(Y) + P_Oc(Z_n - L_{n-1}); L_n = L_{n-1} - eta (Z_n - X_n);
/// X_0 = P_O(Y), L_0 = 0.
template <Scalar T>
UnrolledNet<T> build_admm(int n_unroll) {
  if (n_unroll < 1) throw std::invalid_argument("n_unroll must be >= 1");
  UnrolledNet<T> net;
  net.solver = Solver::Admm;
  net.n_unroll = n_unroll;
  Tape<T>& t = net.tape;
  net.y = t.input("Y");
  net.mask = t.input("M");
  net.target = t.input("X");
  const NodeId y_obs = t.mask_project(net.mask, net.y);
  NodeId x = y_obs;
  std::optional<NodeId> l;
  for (int n = 0; n < n_unroll; ++n) {
    for (const char* base : {"lambda", "mu", "eta"}) net.param_names.push_back(iter_param(base, n));
    const NodeId lam = t.scalar_exp(t.parameter(iter_param("lambda", n)));
    const NodeId mu = t.scalar_exp(t.parameter(iter_param("mu", n)));
    const NodeId eta = t.scalar_exp(t.parameter(iter_param("eta", n)));
    const NodeId z = t.svt_soft(l ? t.add(x, *l) : x, t.scalar_div(lam, mu));
    const NodeId z_minus_l = l ? t.sub(z, *l) : z;
    x = t.add(y_obs, t.mask_project(net.mask, z_minus_l, true));
    const NodeId step = t.scale_by_param(eta, t.sub(z, x));
    l = l ? t.sub(*l, step) : t.scale_by_param(eta, t.sub(x, z));
    net.iterates.push_back(x);
  }
  net.output = x;
  net.loss = t.mse_loss(x, net.target);
  return net;
}

/// Z = X_n - rho A^H(A X_n - b); X_{n+1} = SVT_{lambda rho}(Z), with A the
/// sampling operator, b = P_O(Y) and X_0 = b.
template <Scalar T>
UnrolledNet<T> build_pgd(int n_unroll) {
  if (n_unroll < 1) throw std::invalid_argument("n_unroll must be >= 1");
  UnrolledNet<T> net;
  net.solver = Solver::Pgd;
  net.n_unroll = n_unroll;
  Tape<T>& t = net.tape;
  net.y = t.input("Y");
  net.mask = t.input("M");
  net.target = t.input("X");
  const NodeId b = t.mask_project(net.mask, net.y);
  NodeId x = b;
  for (int n = 0; n < n_unroll; ++n) {
    for (const char* base : {"rho", "lambda"}) net.param_names.push_back(iter_param(base, n));
    const NodeId rho = t.scalar_exp(t.parameter(iter_param("rho", n)));
    const NodeId lam = t.scalar_exp(t.parameter(iter_param("lambda", n)));
    const NodeId residual = t.sub(t.mask_project(net.mask, x), b);
    const NodeId z = t.sub(x, t.scale_by_param(rho, residual));
    x = t.svt_soft(z, t.scalar_mul(lam, rho));
    net.iterates.push_back(x);
  }
  net.output = x;
  net.loss = t.mse_loss(x, net.target);
  return net;
}

template <Scalar T>
UnrolledNet<T> build_unrolled(Solver s, int n_unroll) {
  return s == Solver::Admm ? build_admm<T>(n_unroll) : build_pgd<T>(n_unroll);
}

/// All positive scalars equal to one.
template <Scalar T>
std::map<std::string, double> initial_params(const UnrolledNet<T>& net) {
  std::map<std::string, double> p;
  for (const std::string& n : net.param_names) p[n] = 0.0;
  return p;
}

template <Scalar T>
Bindings<T> bind_unrolled(const Matrix<T>& Y, const Matrix<T>& M, const Matrix<T>& X,
                          const std::map<std::string, double>& params) {
  svdinv::detail::require_same_shape(Y, M, "unrolled: mask");
  svdinv::detail::require_same_shape(Y, X, "unrolled: target");
  Bindings<T> b;
  b.inputs["Y"] = Y;
  b.inputs["M"] = M;
  b.inputs["X"] = X;
  for (const auto& [k, v] : params) b.params[k] = static_cast<RealOf<T>>(v);
  return b;
}

/// Forward pass returning every iterate (the last is the reconstruction).
template <Scalar T>
std::vector<Matrix<T>> unrolled_iterates(const UnrolledNet<T>& net, const Matrix<T>& Y,
                                         const Matrix<T>& M,
                                         const std::map<std::string, double>& params) {
  const Values<T> v = net.tape.forward(bind_unrolled<T>(Y, M, Matrix<T>::Zero(Y.rows(), Y.cols()), params));
  std::vector<Matrix<T>> out;
  for (NodeId id : net.iterates) out.push_back(v.matrix(id));
  return out;
}

template <Scalar T>
Matrix<T> unrolled_admm_forward(const Matrix<T>& Y, const Matrix<T>& M, int n_unroll,
                                const std::map<std::string, double>& params) {
  return unrolled_iterates(build_admm<T>(n_unroll), Y, M, params).back();
}

template <Scalar T>
Matrix<T> unrolled_pgd_forward(const Matrix<T>& Y, const Matrix<T>& M, int n_unroll,
                               const std::map<std::string, double>& params) {
  return unrolled_iterates(build_pgd<T>(n_unroll), Y, M, params).back();
}

/// Parameters holding the same (lambda, mu, eta) or (rho, lambda) at every
/// iteration.
inline std::map<std::string, double> constant_admm_params(int n_unroll, double lambda, double mu,
                                                          double eta) {
  std::map<std::string, double> p;
  for (int n = 0; n < n_unroll; ++n) {
    p[iter_param("lambda", n)] = std::log(lambda);
    p[iter_param("mu", n)] = std::log(mu);
    p[iter_param("eta", n)] = std::log(eta);
  }
  return p;
}

inline std::map<std::string, double> constant_pgd_params(int n_unroll, double rho, double lambda) {
  std::map<std::string, double> p;
  for (int n = 0; n < n_unroll; ++n) {
    p[iter_param("rho", n)] = std::log(rho);
    p[iter_param("lambda", n)] = std::log(lambda);
  }
  return p;
}

}  // namespace svdinv::experiments
