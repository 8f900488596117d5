#pragma once

#include <cstdio>
#include <sstream>
#include <string>

#include <json.hpp>

#include "svdinv/experiments/efficacy.hpp"
#include "svdinv/experiments/training.hpp"

namespace svdinv::cli {

using nlohmann::json;

/// Shortest round-trip representation of a double.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json grad_mode_json(const GradMode& m) {
  json j{{"mode", m.name()}};
  if (m.variant == GradVariant::Clip) j["clip_value"] = m.clip_value;
  if (m.variant == GradVariant::Taylor) j["taylor_k"] = m.taylor_k;
  if (m.stability) j["stability"] = {{"t", m.stability->t}, {"clamp", m.stability->clamp}};
  return j;
}

inline std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(seeds[i]);
  }
  return s;
}

inline json efficacy_cell_json(const experiments::EfficacyCell& c) {
  return {{"case", c.case_id},
          {"workflow", c.workflow},
          {"mode", c.mode},
          {"trials", c.trials},
          {"mse_sum", c.mse_sum},
          {"mse_mean", c.mse_mean},
          {"invalid_trials", c.invalid_trials},
          {"nonfinite_gradients", c.nonfinite_gradients},
          {"seed_list", c.seeds},
          {"t", c.stability.t},
          {"clamp", c.stability.clamp},
          {"taylor_k", c.taylor_k},
          {"clip_value", c.clip_value}};
}

/// CSV with a leading `# config <json>` line.
inline std::string efficacy_csv(const experiments::EfficacyReport& r, const json& config) {
  std::ostringstream os;
  os << "# config " << config.dump() << "\n";
  os << "case,workflow,mode,trials,mse_sum,mse_mean,invalid_trials,seed_list,t,clamp,taylor_k\n";
  for (const auto& c : r.cells) {
    os << c.case_id << ',' << c.workflow << ',' << c.mode << ',' << c.trials << ','
       << fmt_double(c.mse_sum) << ',' << fmt_double(c.mse_mean) << ',' << c.invalid_trials
       << ',' << seed_list(c.seeds) << ',' << fmt_double(c.stability.t) << ','
       << fmt_double(c.stability.clamp) << ',' << c.taylor_k << "\n";
  }
  return os.str();
}

inline std::string efficacy_json(const experiments::EfficacyReport& r, const json& config) {
  json cells = json::array();
  for (const auto& c : r.cells) cells.push_back(efficacy_cell_json(c));
  return json{{"config", config}, {"cells", cells}}.dump(2) + "\n";
}

inline json train_line_json(const experiments::TrainLogLine& l) {
  json j{{"step", l.step},
         {"loss", l.loss},
         {"train_loss", l.train_loss},
         {"grad_finite", l.grad_finite},
         {"injected", l.injected},
         {"params", l.params}};
  if (l.nonfinite_node) j["nonfinite_node"] = *l.nonfinite_node;
  return j;
}

}  // namespace svdinv::cli
