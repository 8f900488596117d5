#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "svdinv/experiments/scenario.hpp"
#include "svdinv/experiments/workflows.hpp"
#include "svdinv/oracle.hpp"

namespace svdinv::experiments {

struct EfficacyConfig {
  int trials = 1000;
  std::vector<int> cases{1, 2};
  std::vector<int> workflows{1, 2, 3};
  std::vector<GradMode> modes{GradMode::tf(), GradMode::clip(), GradMode::taylor(),
                              GradMode::inv()};
  std::vector<std::uint64_t> seeds{3407};
  Eigen::Index size = 10;
  Basis basis = Basis::Identity;
  int threads = 1;
  /// Regeneration attempts per trial before giving up.
  int max_regenerations = 100;

  void validate() const {
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    if (cases.empty() || workflows.empty() || seeds.empty()) {
      throw std::invalid_argument("cases, workflows and seeds must be nonempty");
    }
    for (int c : cases) parse_case(c);
    for (int w : workflows) require_workflow(w);
    bool has_inv = false, has_baseline = false;
    for (const GradMode& m : modes) {
      if (m.variant == GradVariant::Exact) {
        throw std::invalid_argument("the exact mode is not a benchmark mode");
      }
      m.validate<float>();
      (m.variant == GradVariant::Inv ? has_inv : has_baseline) = true;
    }
    if (!has_inv || !has_baseline) {
      throw std::invalid_argument("modes must include inv and at least one baseline");
    }
    if (size < 3) throw std::invalid_argument("size must be >= 3");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  }
};

struct EfficacyCell {
  int case_id = 1;
  int workflow = 1;
  std::string mode;
  int trials = 0;
  /// Sum over trials of the entrywise squared error summed over entries.
  double mse_sum = 0;
  /// Sum over trials of the per-entry mean squared error.
  double mse_mean = 0;
  int invalid_trials = 0;
  int nonfinite_gradients = 0;
  std::vector<std::uint64_t> seeds;
  StabilityParams stability;
  int taylor_k = 0;
  double clip_value = 0;
};

struct EfficacyReport {
  EfficacyConfig config;
  std::vector<EfficacyCell> cells;

  const EfficacyCell& cell(int c, int wf, const std::string& mode) const {
    for (const EfficacyCell& x : cells) {
      if (x.case_id == c && x.workflow == wf && x.mode == mode) return x;
    }
    throw std::out_of_range("no efficacy cell for case " + std::to_string(c) + ", workflow " +
                            std::to_string(wf) + ", mode " + mode);
  }
};

/// Squared errors of one trial, per mode.
struct TrialErrors {
  std::vector<double> sum;
  std::vector<double> mean;
  std::vector<bool> finite;
  int regenerations = 0;
  double tau = 0;
};

/// Single-precision gradients of one trial for every mode plus the double
/// reference, for inspection and for the paired-trial checks.
struct TrialGradients {
  Matrix<double> reference;
  std::vector<Matrix<float>> by_mode;
  Values<float> forward;
  bool valid = false;
};

inline TrialGradients trial_gradients(const Matrix<double>& A, int workflow,
                                      const std::vector<GradMode>& modes) {
  WorkflowGraph<float> g = build_workflow<float>(workflow);
  Bindings<float> b;
  b.inputs["A"] = A.cast<float>();
  if (workflow == 3) {
    b.params["tau"] = static_cast<float>(workflow3_tau(svd<double>(A).S));
  }
  TrialGradients out;
  // The reference re-runs the same graph in double from the double matrix.
  Bindings<double> bd;
  bd.inputs["A"] = A;
  if (workflow == 3) bd.params["tau"] = workflow3_tau(svd<double>(A).S);
  const Tape<double> td = g.tape.template rebind<double>();
  const Values<double> vd = td.forward(bd);
  const GradientSet<double> gd = td.backward(vd, g.loss, GradMode::exact());
  out.valid = gd.all_finite();
  out.reference = gd.matrix(g.input, A.rows(), A.cols());

  out.forward = g.tape.forward(b);
  for (const GradMode& m : modes) {
    out.by_mode.push_back(
        g.tape.backward(out.forward, g.loss, m).matrix(g.input, A.rows(), A.cols()));
  }
  return out;
}

inline std::uint64_t trial_key(std::uint64_t master, int case_id, int workflow) {
  return derive_seed(derive_seed(master, static_cast<std::uint64_t>(case_id)),
                     static_cast<std::uint64_t>(workflow));
}

inline TrialErrors run_trial(const EfficacyConfig& cfg, std::uint64_t master, int case_id,
                             int workflow, int trial) {
  const std::uint64_t key = trial_key(master, case_id, workflow);
  TrialErrors e;
  for (int sub = 0; sub <= cfg.max_regenerations; ++sub) {
    Scenario sc;
    sc.size = cfg.size;
    sc.scenario_case = parse_case(case_id);
    sc.basis = cfg.basis;
    sc.seed = derive_seed(key, (static_cast<std::uint64_t>(trial) << 16) |
                                   static_cast<std::uint64_t>(sub));
    const ScenarioMatrix m = generate_scenario(sc);
    TrialGradients tg = trial_gradients(m.A, workflow, cfg.modes);
    if (!tg.valid) {
      ++e.regenerations;
      continue;
    }
    const double count = static_cast<double>(m.A.size());
    for (const Matrix<float>& g : tg.by_mode) {
      const bool finite = all_finite(g);
      const double s = finite ? (g.cast<double>() - tg.reference).squaredNorm() : 0.0;
      e.sum.push_back(s);
      e.mean.push_back(s / count);
      e.finite.push_back(finite);
    }
    return e;
  }
  throw std::runtime_error("efficacy: no valid reference after " +
                           std::to_string(cfg.max_regenerations) + " regenerations");
}

/// Cumulative gradient error against the double-precision reference for every
/// (case, workflow, mode). Trials are paired: every mode sees the same
/// matrix and the same single-precision forward values.
inline EfficacyReport run_efficacy(const EfficacyConfig& cfg) {
  cfg.validate();
  EfficacyReport rep;
  rep.config = cfg;
  const std::size_t nm = cfg.modes.size();

  for (int c : cfg.cases) {
    for (int wf : cfg.workflows) {
      std::vector<EfficacyCell> row(nm);
      for (std::size_t i = 0; i < nm; ++i) {
        const GradMode& m = cfg.modes[i];
        row[i].case_id = c;
        row[i].workflow = wf;
        row[i].mode = m.name();
        row[i].seeds = cfg.seeds;
        row[i].stability = m.resolved_stability<float>();
        row[i].taylor_k = m.taylor_k;
        row[i].clip_value = m.clip_value;
      }
      for (std::uint64_t seed : cfg.seeds) {
        std::vector<TrialErrors> errs(static_cast<std::size_t>(cfg.trials));
        auto work = [&](int begin, int end) {
          for (int t = begin; t < end; ++t) {
            errs[static_cast<std::size_t>(t)] = run_trial(cfg, seed, c, wf, t);
          }
        };
        const int nt = std::min(cfg.threads, cfg.trials);
        if (nt <= 1) {
          work(0, cfg.trials);
        } else {
          std::vector<std::thread> pool;
          const int chunk = (cfg.trials + nt - 1) / nt;
          for (int w = 0; w < nt; ++w) {
            pool.emplace_back(work, w * chunk, std::min(cfg.trials, (w + 1) * chunk));
          }
          for (std::thread& th : pool) th.join();
        }
        // Fixed-order reduction keeps the report independent of threading.
        for (const TrialErrors& e : errs) {
          for (std::size_t i = 0; i < nm; ++i) {
            row[i].trials += 1;
            row[i].mse_sum += e.sum[i];
            row[i].mse_mean += e.mean[i];
            row[i].invalid_trials += e.regenerations;
            if (!e.finite[i]) row[i].nonfinite_gradients += 1;
          }
        }
      }
      rep.cells.insert(rep.cells.end(), row.begin(), row.end());
    }
  }
  return rep;
}

/// True iff `mode` has a strictly smaller mse_sum than every other mode in
/// the given cell.
inline bool strictly_smallest(const EfficacyReport& rep, int c, int wf, const std::string& mode) {
  const double mine = rep.cell(c, wf, mode).mse_sum;
  for (const EfficacyCell& x : rep.cells) {
    if (x.case_id == c && x.workflow == wf && x.mode != mode && !(mine < x.mse_sum)) {
      return false;
    }
  }
  return true;
}

}  // namespace svdinv::experiments
