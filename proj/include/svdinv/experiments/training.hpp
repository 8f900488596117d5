#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "svdinv/experiments/adam.hpp"
#include "svdinv/experiments/scenario.hpp"
#include "svdinv/experiments/unrolled.hpp"

namespace svdinv::experiments {

struct CompletionSample {
  Matrix<double> Y;  // observations (full matrix; the mask selects entries)
  Matrix<double> M;  // 0/1 mask
  Matrix<double> X;  // ground truth
};

struct TrainConfig {
  Solver solver = Solver::Admm;
  Eigen::Index size = 20;
  int rank = 2;
  double sampling = 0.5;
  int n_unroll = 10;
  int steps = 200;
  AdamConfig adam{};
  GradMode mode = GradMode::inv();
  double inject_duplicates = 0.1;
  std::uint64_t seed = 3407;
  int train_size = 32;
  int val_size = 8;

  void validate() const {
    if (size < 2) throw std::invalid_argument("size must be >= 2");
    if (rank < 1 || rank > size) throw std::invalid_argument("rank must be in [1, size]");
    if (!(sampling > 0 && sampling <= 1)) throw std::invalid_argument("sampling must be in (0, 1]");
    if (n_unroll < 1) throw std::invalid_argument("n_unroll must be >= 1");
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (!(inject_duplicates >= 0 && inject_duplicates <= 1)) {
      throw std::invalid_argument("inject_duplicates must be in [0, 1]");
    }
    if (train_size < 1 || val_size < 1) throw std::invalid_argument("dataset sizes must be >= 1");
    if (!(adam.lr >= 0)) throw std::invalid_argument("learning rate must be >= 0");
    mode.validate<float>();
  }
};

/// Rank-r ground truth with unit-variance entries and an i.i.d. Bernoulli mask.
inline CompletionSample make_completion_sample(Eigen::Index n, int rank, double sampling,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution keep(sampling);
  Matrix<double> L(n, rank), R(n, rank);
  for (Eigen::Index j = 0; j < rank; ++j)
    for (Eigen::Index i = 0; i < n; ++i) L(i, j) = g(rng);
  for (Eigen::Index j = 0; j < rank; ++j)
    for (Eigen::Index i = 0; i < n; ++i) R(i, j) = g(rng);
  CompletionSample s;
  s.X = L * R.transpose() / std::sqrt(static_cast<double>(rank));
  s.M.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) s.M(i, j) = keep(rng) ? 1.0 : 0.0;
  s.Y = s.X;
  return s;
}

inline std::vector<CompletionSample> make_completion_dataset(const TrainConfig& cfg, int count,
                                                             std::uint64_t stream) {
  std::vector<CompletionSample> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(make_completion_sample(cfg.size, cfg.rank, cfg.sampling,
                                         derive_seed(derive_seed(cfg.seed, stream),
                                                     static_cast<std::uint64_t>(i))));
  }
  return out;
}

/// A case-2 scenario matrix of the training size standing in for a sample,
/// so the first SVT sees an exactly duplicated spectrum in single precision.
inline CompletionSample duplicate_injection(const CompletionSample& like, std::uint64_t seed) {
  Scenario sc;
  sc.size = like.X.rows();
  sc.scenario_case = Case::Two;
  sc.seed = seed;
  CompletionSample s;
  s.X = generate_scenario(sc).A;
  s.Y = s.X;
  s.M = Matrix<double>::Ones(s.X.rows(), s.X.cols());
  return s;
}

struct TrainLogLine {
  int step = 0;
  double loss = 0;        // validation MSE after this step's update
  double train_loss = 0;  // loss of the step's sample (before update)
  bool grad_finite = true;
  bool injected = false;
  std::optional<NodeId> nonfinite_node;
  std::map<std::string, double> params;
};

struct TrainResult {
  std::vector<TrainLogLine> log;
  std::map<std::string, double> params;
  int nonfinite_events = 0;
  bool halted = false;
  std::string diagnostic;
};

template <Scalar T>
double validation_mse(const UnrolledNet<T>& net, const std::vector<CompletionSample>& val,
                      const std::map<std::string, double>& params) {
  double acc = 0;
  for (const CompletionSample& s : val) {
    const Values<T> v = net.tape.forward(bind_unrolled<T>(
        s.Y.cast<T>(), s.M.cast<T>(), s.X.cast<T>(), params));
    acc += static_cast<double>(v.scalar(net.loss));
  }
  return acc / static_cast<double>(val.size());
}

/// Adam on the log-parameters of the unrolled net, one sample per step, in
/// single precision. Stops early if a parameter becomes non-finite.
inline TrainResult train_unrolled(const TrainConfig& cfg,
                                  const std::vector<CompletionSample>& train,
                                  const std::vector<CompletionSample>& val,
                                  const std::function<void(const TrainLogLine&)>& on_line = {}) {
  cfg.validate();
  if (train.empty() || val.empty()) throw std::invalid_argument("dataset must be nonempty");
  using T = float;
  const UnrolledNet<T> net = build_unrolled<T>(cfg.solver, cfg.n_unroll);
  TrainResult res;
  res.params = initial_params(net);
  Adam opt(cfg.adam);

  auto emit = [&](TrainLogLine line) {
    line.params = res.params;
    if (on_line) on_line(line);
    res.log.push_back(std::move(line));
  };

  TrainLogLine first;
  first.loss = validation_mse(net, val, res.params);
  first.train_loss = first.loss;
  emit(first);

  std::mt19937_64 inject_rng(derive_seed(cfg.seed, 0x1a7ec7ULL));
  std::bernoulli_distribution inject(cfg.inject_duplicates);
  for (int step = 1; step <= cfg.steps; ++step) {
    const CompletionSample& base = train[static_cast<std::size_t>(step - 1) % train.size()];
    TrainLogLine line;
    line.step = step;
    line.injected = inject(inject_rng);
    const CompletionSample s =
        line.injected ? duplicate_injection(base, derive_seed(cfg.seed, 0xd0bULL + static_cast<std::uint64_t>(step)))
                      : base;

    const Bindings<T> b = bind_unrolled<T>(s.Y.cast<T>(), s.M.cast<T>(), s.X.cast<T>(), res.params);
    const Values<T> v = net.tape.forward(b);
    const GradientSet<T> gs = net.tape.backward(v, net.loss, cfg.mode);
    line.train_loss = static_cast<double>(v.scalar(net.loss));

    std::map<std::string, double> grads;
    for (NodeId id = 0; id < net.tape.size(); ++id) {
      const auto& node = net.tape.node(id);
      if (node.op != OpKind::ParameterScalar) continue;
      const double g = static_cast<double>(gs.scalar(id));
      grads[node.name] = g;
      if (!std::isfinite(g)) line.grad_finite = false;
    }
    if (!gs.all_finite()) line.grad_finite = false;
    line.nonfinite_node = gs.nonfinite_origin;
    if (!line.grad_finite) ++res.nonfinite_events;

    opt.step(res.params, grads);
    bool params_finite = true;
    for (const auto& [k, p] : res.params) params_finite = params_finite && std::isfinite(p);
    line.loss = params_finite ? validation_mse(net, val, res.params)
                              : std::numeric_limits<double>::quiet_NaN();
    emit(line);
    if (!params_finite) {
      res.halted = true;
      res.diagnostic = "non-finite parameter after update at step " + std::to_string(step) +
                       (line.nonfinite_node ? " (gradient first non-finite at node " +
                                                  std::to_string(*line.nonfinite_node) + ", " +
                                                  to_string(net.tape.node(*line.nonfinite_node).op) + ")"
                                            : std::string());
      break;
    }
  }
  return res;
}

/// Dataset of the configured size drawn from the config's seed.
inline TrainResult train_unrolled(const TrainConfig& cfg,
                                  const std::function<void(const TrainLogLine&)>& on_line = {}) {
  cfg.validate();
  return train_unrolled(cfg, make_completion_dataset(cfg, cfg.train_size, 1),
                        make_completion_dataset(cfg, cfg.val_size, 2), on_line);
}

}  // namespace svdinv::experiments
