#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "svdinv/svt.hpp"

namespace svdinv {

using NodeId = std::size_t;

enum class OpKind {
  Input,
  ParameterScalar,
  Matmul,
  Add,
  Sub,
  ScaleByParam,
  ConjTranspose,
  Hadamard,
  MaskProject,
  Svd,
  Svt,
  Reconstruct,
  SoftThresholdVector,
  HardThresholdVector,
  L1Loss,
  MseLoss,
  SumSingularValues,
  ScalarExp,
  ScalarMul,
  ScalarDiv,
};

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::Input: return "input";
    case OpKind::ParameterScalar: return "parameter_scalar";
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::ScaleByParam: return "scale_by_param";
    case OpKind::ConjTranspose: return "conj_transpose";
    case OpKind::Hadamard: return "hadamard";
    case OpKind::MaskProject: return "mask_project";
    case OpKind::Svd: return "svd";
    case OpKind::Svt: return "svt";
    case OpKind::Reconstruct: return "reconstruct";
    case OpKind::SoftThresholdVector: return "soft_threshold_vector";
    case OpKind::HardThresholdVector: return "hard_threshold_vector";
    case OpKind::L1Loss: return "l1_loss";
    case OpKind::MseLoss: return "mse_loss";
    case OpKind::SumSingularValues: return "sum_singular_values";
    case OpKind::ScalarExp: return "scalar_exp";
    case OpKind::ScalarMul: return "scalar_mul";
    case OpKind::ScalarDiv: return "scalar_div";
  }
  return "?";
}

/// Values bound to the input and parameter nodes of a tape, by name.
template <Scalar T>
struct Bindings {
  std::map<std::string, Matrix<T>> inputs;
  std::map<std::string, RealOf<T>> params;
};

template <Scalar T>
struct SvdCotangent {
  Matrix<T> Ubar;
  RealVector<RealOf<T>> Sbar;
  Matrix<T> Vbar;
};

template <Scalar T>
using NodeValue = std::variant<std::monostate, Matrix<T>, RealVector<RealOf<T>>, RealOf<T>,
                               SvdFactors<T>, SvtResult<T>>;

template <Scalar T>
using Cotangent = std::variant<std::monostate, Matrix<T>, RealVector<RealOf<T>>, RealOf<T>,
                               SvdCotangent<T>>;

/// Forward values of every node, indexed by NodeId.
template <Scalar T>
struct Values {
  std::vector<NodeValue<T>> v;

  const Matrix<T>& matrix(NodeId id) const;
  RealOf<T> scalar(NodeId id) const { return std::get<RealOf<T>>(v.at(id)); }
  const SvdFactors<T>& factors(NodeId id) const;
  const RealVector<RealOf<T>>& vector(NodeId id) const;
};

template <Scalar T>
const Matrix<T>& Values<T>::matrix(NodeId id) const {
  const NodeValue<T>& x = v.at(id);
  if (const auto* r = std::get_if<SvtResult<T>>(&x)) return r->B;
  return std::get<Matrix<T>>(x);
}

template <Scalar T>
const SvdFactors<T>& Values<T>::factors(NodeId id) const {
  const NodeValue<T>& x = v.at(id);
  if (const auto* r = std::get_if<SvtResult<T>>(&x)) return r->factors;
  return std::get<SvdFactors<T>>(x);
}

template <Scalar T>
const RealVector<RealOf<T>>& Values<T>::vector(NodeId id) const {
  const NodeValue<T>& x = v.at(id);
  if (const auto* f = std::get_if<SvdFactors<T>>(&x)) return f->S;
  return std::get<RealVector<RealOf<T>>>(x);
}

/// Cotangents keyed by node id. `nonfinite_origin` is the first node (in
/// backward order) whose VJP turned finite cotangents into non-finite ones.
template <Scalar T>
struct GradientSet {
  std::vector<Cotangent<T>> g;
  std::optional<NodeId> nonfinite_origin;

  bool all_finite() const { return !nonfinite_origin.has_value(); }
  bool has(NodeId id) const {
    return id < g.size() && !std::holds_alternative<std::monostate>(g[id]);
  }
  Matrix<T> matrix(NodeId id, Eigen::Index rows, Eigen::Index cols) const {
    if (!has(id)) return Matrix<T>::Zero(rows, cols);
    return std::get<Matrix<T>>(g[id]);
  }
  RealOf<T> scalar(NodeId id) const {
    if (!has(id)) return RealOf<T>(0);
    return std::get<RealOf<T>>(g[id]);
  }
};

class UnboundError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Append-only reverse-mode graph. Node ids are creation indices, so every
/// node's parents precede it and creation order is a valid evaluation order.
template <Scalar T>
class Tape {
 public:
  using R = RealOf<T>;

  struct Node {
    OpKind op = OpKind::Input;
    std::vector<NodeId> parents{};
    std::string name{};
    Eigen::Index tail = 0;
    bool complement = false;
  };

  NodeId input(const std::string& name) { return push({OpKind::Input, {}, name}); }
  NodeId parameter(const std::string& name) {
    return push({OpKind::ParameterScalar, {}, name});
  }
  NodeId matmul(NodeId a, NodeId b) { return push({OpKind::Matmul, {a, b}}); }
  NodeId add(NodeId a, NodeId b) { return push({OpKind::Add, {a, b}}); }
  NodeId sub(NodeId a, NodeId b) { return push({OpKind::Sub, {a, b}}); }
  NodeId scale_by_param(NodeId p, NodeId x) { return push({OpKind::ScaleByParam, {p, x}}); }
  NodeId conj_transpose(NodeId x) { return push({OpKind::ConjTranspose, {x}}); }
  NodeId hadamard(NodeId a, NodeId b) { return push({OpKind::Hadamard, {a, b}}); }
  /// mask ⊙ x, or (1 - mask) ⊙ x when `complement`. The mask receives no
  /// gradient.
  NodeId mask_project(NodeId mask, NodeId x, bool complement = false) {
    Node n{OpKind::MaskProject, {mask, x}};
    n.complement = complement;
    return push(std::move(n));
  }
  NodeId svd(NodeId x) { return push({OpKind::Svd, {x}}); }
  NodeId svt_soft(NodeId x, NodeId tau) { return push({OpKind::Svt, {x, tau}}); }
  NodeId svt_hard(NodeId x, Eigen::Index tail) {
    Node n{OpKind::Svt, {x}};
    n.tail = tail;
    return push(std::move(n));
  }
  /// U diag(S) V^H from an svd node, or U diag(s) V^H with s from `vec`.
  NodeId reconstruct(NodeId svd_node) { return push({OpKind::Reconstruct, {svd_node}}); }
  NodeId reconstruct(NodeId svd_node, NodeId vec) {
    return push({OpKind::Reconstruct, {svd_node, vec}});
  }
  /// `src` may be a vector node or an svd node (its S is used).
  NodeId soft_threshold_vector(NodeId src, NodeId tau) {
    return push({OpKind::SoftThresholdVector, {src, tau}});
  }
  NodeId hard_threshold_vector(NodeId src, Eigen::Index tail) {
    Node n{OpKind::HardThresholdVector, {src}};
    n.tail = tail;
    return push(std::move(n));
  }
  NodeId l1_loss(NodeId x) { return push({OpKind::L1Loss, {x}}); }
  NodeId mse_loss(NodeId x, NodeId y) { return push({OpKind::MseLoss, {x, y}}); }
  NodeId sum_singular_values(NodeId svd_node) {
    return push({OpKind::SumSingularValues, {svd_node}});
  }
  NodeId scalar_exp(NodeId p) { return push({OpKind::ScalarExp, {p}}); }
  NodeId scalar_mul(NodeId a, NodeId b) { return push({OpKind::ScalarMul, {a, b}}); }
  NodeId scalar_div(NodeId a, NodeId b) { return push({OpKind::ScalarDiv, {a, b}}); }

  std::size_t size() const { return nodes_.size(); }

  /// The same graph over another scalar type (e.g. a double-precision copy).
  template <Scalar U>
  Tape<U> rebind() const {
    Tape<U> out;
    for (const Node& n : nodes_) {
      typename Tape<U>::Node m{n.op, n.parents, n.name};
      m.tail = n.tail;
      m.complement = n.complement;
      out.push(std::move(m));
    }
    return out;
  }
  const Node& node(NodeId id) const { return nodes_.at(id); }

  Values<T> forward(const Bindings<T>& b) const;

  /// Reverse accumulation seeded with `seed` at the scalar node `loss`.
  GradientSet<T> backward(const Values<T>& vals, NodeId loss, const GradMode& mode,
                          R seed = R(1)) const;

 private:
  NodeId push(Node n) {
    const NodeId id = nodes_.size();
    for (NodeId p : n.parents) {
      if (p >= id) throw std::out_of_range("tape: parent id does not precede node");
    }
    nodes_.push_back(std::move(n));
    return id;
  }

  static ThresholdSpec spec_of(const Node& n, const Values<T>& vals) {
    if (n.parents.size() == 2) return ThresholdSpec::soft(static_cast<double>(vals.scalar(n.parents[1])));
    return ThresholdSpec::hard_tail(n.tail);
  }

  std::vector<Node> nodes_;

  template <Scalar U>
  friend class Tape;
};

namespace detail {

template <Scalar T>
void accumulate(Cotangent<T>& slot, Matrix<T> g) {
  if (auto* m = std::get_if<Matrix<T>>(&slot)) {
    *m += g;
  } else {
    slot = std::move(g);
  }
}

template <Scalar T>
void accumulate_vector(Cotangent<T>& slot, RealVector<RealOf<T>> g) {
  if (auto* m = std::get_if<RealVector<RealOf<T>>>(&slot)) {
    *m += g;
  } else {
    slot = std::move(g);
  }
}

template <Scalar T>
void accumulate_scalar(Cotangent<T>& slot, RealOf<T> g) {
  if (auto* m = std::get_if<RealOf<T>>(&slot)) {
    *m += g;
  } else {
    slot = g;
  }
}

template <Scalar T>
SvdCotangent<T>& svd_slot(Cotangent<T>& slot, const SvdFactors<T>& f) {
  if (!std::holds_alternative<SvdCotangent<T>>(slot)) {
    slot = SvdCotangent<T>{Matrix<T>::Zero(f.U.rows(), f.U.cols()),
                           RealVector<RealOf<T>>::Zero(f.S.size()),
                           Matrix<T>::Zero(f.V.rows(), f.V.cols())};
  }
  return std::get<SvdCotangent<T>>(slot);
}

template <Scalar T>
bool cotangent_finite(const Cotangent<T>& c) {
  return std::visit(
      [](const auto& x) -> bool {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, std::monostate>) {
          return true;
        } else if constexpr (std::is_same_v<X, RealOf<T>>) {
          return std::isfinite(x);
        } else if constexpr (std::is_same_v<X, SvdCotangent<T>>) {
          return svdinv::all_finite(x.Ubar) && svdinv::all_finite(x.Sbar) &&
                 svdinv::all_finite(x.Vbar);
        } else {
          return svdinv::all_finite(x);
        }
      },
      c);
}

}  // namespace detail

template <Scalar T>
Values<T> Tape<T>::forward(const Bindings<T>& b) const {
  Values<T> vals;
  vals.v.resize(nodes_.size());
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    auto M = [&](std::size_t i) -> const Matrix<T>& { return vals.matrix(n.parents[i]); };
    auto S = [&](std::size_t i) { return vals.scalar(n.parents[i]); };
    NodeValue<T>& out = vals.v[id];
    switch (n.op) {
      case OpKind::Input: {
        auto it = b.inputs.find(n.name);
        if (it == b.inputs.end()) throw UnboundError("unbound input '" + n.name + "'");
        out = it->second;
        break;
      }
      case OpKind::ParameterScalar: {
        auto it = b.params.find(n.name);
        if (it == b.params.end()) throw UnboundError("unbound parameter '" + n.name + "'");
        out = it->second;
        break;
      }
      case OpKind::Matmul: out = svdinv::matmul<T>(M(0), M(1)); break;
      case OpKind::Add: out = svdinv::add<T>(M(0), M(1)); break;
      case OpKind::Sub: out = svdinv::sub<T>(M(0), M(1)); break;
      case OpKind::ScaleByParam: out = Matrix<T>(M(1) * T(S(0))); break;
      case OpKind::ConjTranspose: out = Matrix<T>(M(0).adjoint()); break;
      case OpKind::Hadamard: out = svdinv::hadamard<T>(M(0), M(1)); break;
      case OpKind::MaskProject: {
        detail::require_same_shape(M(0), M(1), "mask_project");
        const Matrix<T>& mask = M(0);
        out = n.complement ? Matrix<T>((Matrix<T>::Ones(mask.rows(), mask.cols()) - mask)
                                           .cwiseProduct(M(1)))
                           : Matrix<T>(mask.cwiseProduct(M(1)));
        break;
      }
      case OpKind::Svd: out = svdinv::svd<T>(M(0)); break;
      case OpKind::Svt: out = svdinv::svt<T>(M(0), spec_of(n, vals)); break;
      case OpKind::Reconstruct: {
        const SvdFactors<T>& f = vals.factors(n.parents[0]);
        const RealVector<R>& s = n.parents.size() == 2 ? vals.vector(n.parents[1]) : f.S;
        if (s.size() != f.S.size()) throw ShapeError("reconstruct: vector length");
        out = Matrix<T>(f.U * diag_embed<T>(s) * f.V.adjoint());
        break;
      }
      case OpKind::SoftThresholdVector:
        out = shrink(vals.vector(n.parents[0]),
                     ThresholdSpec::soft(static_cast<double>(S(1)))).values;
        break;
      case OpKind::HardThresholdVector:
        out = shrink(vals.vector(n.parents[0]), ThresholdSpec::hard_tail(n.tail)).values;
        break;
      case OpKind::L1Loss: out = R(M(0).cwiseAbs().sum()); break;
      case OpKind::MseLoss: {
        detail::require_same_shape(M(0), M(1), "mse_loss");
        out = R((M(0) - M(1)).squaredNorm() / static_cast<R>(M(0).size()));
        break;
      }
      case OpKind::SumSingularValues: out = R(vals.factors(n.parents[0]).S.sum()); break;
      case OpKind::ScalarExp: out = R(std::exp(S(0))); break;
      case OpKind::ScalarMul: out = R(S(0) * S(1)); break;
      case OpKind::ScalarDiv: out = R(S(0) / S(1)); break;
    }
  }
  return vals;
}

template <Scalar T>
GradientSet<T> Tape<T>::backward(const Values<T>& vals, NodeId loss, const GradMode& mode,
                                 R seed) const {
  if (loss >= nodes_.size()) throw std::out_of_range("backward: loss node out of range");
  if (vals.v.size() != nodes_.size()) throw std::invalid_argument("backward: stale values");
  if (!std::holds_alternative<R>(vals.v[loss])) {
    throw std::invalid_argument("backward: loss node is not a real scalar");
  }
  GradientSet<T> gs;
  gs.g.resize(nodes_.size());
  gs.g[loss] = seed;
  if (!std::isfinite(seed)) gs.nonfinite_origin = loss;

  for (NodeId id = loss + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    Cotangent<T>& gbar = gs.g[id];
    if (std::holds_alternative<std::monostate>(gbar)) continue;
    const bool was_finite = detail::cotangent_finite<T>(gbar);
    auto P = [&](std::size_t i) -> Cotangent<T>& { return gs.g[n.parents[i]]; };
    auto M = [&](std::size_t i) -> const Matrix<T>& { return vals.matrix(n.parents[i]); };

    switch (n.op) {
      case OpKind::Input:
      case OpKind::ParameterScalar:
        break;
      case OpKind::Matmul: {
        const Matrix<T>& c = std::get<Matrix<T>>(gbar);
        detail::accumulate<T>(P(0), c * M(1).adjoint());
        detail::accumulate<T>(P(1), M(0).adjoint() * c);
        break;
      }
      case OpKind::Add:
      case OpKind::Sub: {
        const Matrix<T>& c = std::get<Matrix<T>>(gbar);
        detail::accumulate<T>(P(0), c);
        detail::accumulate<T>(P(1), n.op == OpKind::Add ? c : Matrix<T>(-c));
        break;
      }
      case OpKind::ScaleByParam: {
        const Matrix<T>& c = std::get<Matrix<T>>(gbar);
        const R p = vals.scalar(n.parents[0]);
        detail::accumulate_scalar<T>(P(0), real_part(M(1).cwiseProduct(c.conjugate()).sum()));
        detail::accumulate<T>(P(1), Matrix<T>(c * T(p)));
        break;
      }
      case OpKind::ConjTranspose:
        detail::accumulate<T>(P(0), Matrix<T>(std::get<Matrix<T>>(gbar).adjoint()));
        break;
      case OpKind::Hadamard: {
        const Matrix<T>& c = std::get<Matrix<T>>(gbar);
        detail::accumulate<T>(P(0), Matrix<T>(c.cwiseProduct(M(1).conjugate())));
        detail::accumulate<T>(P(1), Matrix<T>(c.cwiseProduct(M(0).conjugate())));
        break;
      }
      case OpKind::MaskProject: {
        const Matrix<T>& c = std::get<Matrix<T>>(gbar);
        const Matrix<T>& mask = M(0);
        detail::accumulate<T>(
            P(1), n.complement
                      ? Matrix<T>((Matrix<T>::Ones(mask.rows(), mask.cols()) - mask)
                                      .conjugate()
                                      .cwiseProduct(c))
                      : Matrix<T>(mask.conjugate().cwiseProduct(c)));
        break;
      }
      case OpKind::Svd: {
        const auto& c = std::get<SvdCotangent<T>>(gbar);
        detail::accumulate<T>(P(0),
                              svd_vjp<T>(vals.factors(id), c.Ubar, c.Sbar, c.Vbar, mode));
        break;
      }
      case OpKind::Svt: {
        const auto& r = std::get<SvtResult<T>>(vals.v[id]);
        const ThresholdSpec spec = spec_of(n, vals);
        SvtGradient<T> g = svt_vjp<T>(std::get<Matrix<T>>(gbar), r, spec, mode);
        detail::accumulate<T>(P(0), std::move(g.Abar));
        if (n.parents.size() == 2) detail::accumulate_scalar<T>(P(1), g.taubar);
        break;
      }
      case OpKind::Reconstruct: {
        const Matrix<T>& c = std::get<Matrix<T>>(gbar);
        const SvdFactors<T>& f = vals.factors(n.parents[0]);
        const bool own = n.parents.size() == 1;
        const RealVector<R>& s = own ? f.S : vals.vector(n.parents[1]);
        const Eigen::Matrix<T, Eigen::Dynamic, 1> st = s.template cast<T>();
        SvdCotangent<T>& sc = detail::svd_slot<T>(P(0), f);
        sc.Ubar += c * f.V * st.asDiagonal();
        sc.Vbar += c.adjoint() * f.U * st.asDiagonal();
        const Matrix<T> inner = f.U.adjoint() * c * f.V;
        RealVector<R> sb(s.size());
        for (Eigen::Index i = 0; i < s.size(); ++i) sb(i) = real_part(inner(i, i));
        if (own) {
          sc.Sbar += sb;
        } else {
          detail::accumulate_vector<T>(P(1), std::move(sb));
        }
        break;
      }
      case OpKind::SoftThresholdVector:
      case OpKind::HardThresholdVector: {
        const RealVector<R>& c = std::get<RealVector<R>>(gbar);
        const ThresholdSpec spec =
            n.op == OpKind::SoftThresholdVector
                ? ThresholdSpec::soft(static_cast<double>(vals.scalar(n.parents[1])))
                : ThresholdSpec::hard_tail(n.tail);
        const Shrunk<R> sh = shrink(vals.vector(n.parents[0]), spec);
        RealVector<R> sb = RealVector<R>::Zero(c.size());
        R taubar = 0;
        for (Eigen::Index i = 0; i < c.size(); ++i) {
          if (!sh.kept(i)) continue;
          sb(i) = c(i);
          taubar -= c(i);
        }
        if (std::holds_alternative<SvdFactors<T>>(vals.v[n.parents[0]])) {
          detail::svd_slot<T>(P(0), vals.factors(n.parents[0])).Sbar += sb;
        } else {
          detail::accumulate_vector<T>(P(0), std::move(sb));
        }
        if (n.op == OpKind::SoftThresholdVector) detail::accumulate_scalar<T>(P(1), taubar);
        break;
      }
      case OpKind::L1Loss: {
        const R c = std::get<R>(gbar);
        Matrix<T> g = M(0).unaryExpr([c](const T& z) {
          const R a = std::abs(z);
          return a > R(0) ? T(z / a * c) : T(0);
        });
        detail::accumulate<T>(P(0), std::move(g));
        break;
      }
      case OpKind::MseLoss: {
        const R c = std::get<R>(gbar);
        const Matrix<T> d = (M(0) - M(1)) * T(R(2) * c / static_cast<R>(M(0).size()));
        detail::accumulate<T>(P(0), d);
        detail::accumulate<T>(P(1), Matrix<T>(-d));
        break;
      }
      case OpKind::SumSingularValues: {
        const R c = std::get<R>(gbar);
        const SvdFactors<T>& f = vals.factors(n.parents[0]);
        detail::svd_slot<T>(P(0), f).Sbar.array() += c;
        break;
      }
      case OpKind::ScalarExp: {
        const R c = std::get<R>(gbar);
        detail::accumulate_scalar<T>(P(0), c * vals.scalar(id));
        break;
      }
      case OpKind::ScalarMul: {
        const R c = std::get<R>(gbar);
        detail::accumulate_scalar<T>(P(0), c * vals.scalar(n.parents[1]));
        detail::accumulate_scalar<T>(P(1), c * vals.scalar(n.parents[0]));
        break;
      }
      case OpKind::ScalarDiv: {
        const R c = std::get<R>(gbar);
        const R a = vals.scalar(n.parents[0]);
        const R b = vals.scalar(n.parents[1]);
        detail::accumulate_scalar<T>(P(0), c / b);
        detail::accumulate_scalar<T>(P(1), -c * a / (b * b));
        break;
      }
    }

    if (was_finite && !gs.nonfinite_origin) {
      for (NodeId p : n.parents) {
        if (!detail::cotangent_finite<T>(gs.g[p])) {
          gs.nonfinite_origin = id;
          break;
        }
      }
    }
  }
  return gs;
}

}  // namespace svdinv
