#pragma once

#include <stdexcept>
#include <string>

#include "svdinv/tape.hpp"

namespace svdinv::experiments {

/// 1: L1(U S V^H); 2: last two singular values zeroed; 3: soft threshold tau.
template <Scalar T>
struct WorkflowGraph {
  Tape<T> tape;
  NodeId input = 0;
  NodeId svd_node = 0;
  NodeId loss = 0;
  int workflow = 1;
};

inline void require_workflow(int wf) {
  if (wf < 1 || wf > 3) {
    throw std::invalid_argument("workflow must be 1, 2 or 3, got " + std::to_string(wf));
  }
}

/// Graph reading input "A" and, for workflow 3, parameter "tau".
template <Scalar T>
WorkflowGraph<T> build_workflow(int wf) {
  require_workflow(wf);
  WorkflowGraph<T> g;
  g.workflow = wf;
  Tape<T>& t = g.tape;
  g.input = t.input("A");
  g.svd_node = t.svd(g.input);
  NodeId b = 0;
  if (wf == 1) {
    b = t.reconstruct(g.svd_node);
  } else if (wf == 2) {
    b = t.reconstruct(g.svd_node, t.hard_threshold_vector(g.svd_node, 2));
  } else {
    const NodeId tau = t.parameter("tau");
    b = t.reconstruct(g.svd_node, t.soft_threshold_vector(g.svd_node, tau));
  }
  g.loss = t.l1_loss(b);
  return g;
}

/// Threshold for workflow 3: the third-smallest singular value is kept and
/// the two smallest vanish (tau = sigma_{k-2} in 1-based order).
inline double workflow3_tau(const RealVector<double>& sorted_desc) {
  const Eigen::Index k = sorted_desc.size();
  if (k < 3) throw std::invalid_argument("workflow 3 needs at least 3 singular values");
  return sorted_desc(k - 2);
}

}  // namespace svdinv::experiments
