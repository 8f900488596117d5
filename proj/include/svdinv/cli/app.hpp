#pragma once

#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "svdinv/cli/report.hpp"
#include "svdinv/gradcheck.hpp"

namespace svdinv::cli {

enum Exit : int { Ok = 0, Failure = 1, Usage = 2 };

/// Bad configuration or I/O; reported with exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Kind { Int, UInt, Double, OptDouble, String, IntList, UIntList, StringList };

struct Field {
  std::string key;
  Kind kind;
  json fallback;
  std::string help;
  /// Excluded from the configuration embedded in reports.
  bool io_only = false;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ConfigError("empty item in list '" + s + "'");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

inline long long to_int(const std::string& s) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

inline unsigned long long to_uint(const std::string& s) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (!s.empty() && s[0] != '-') v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw ConfigError("expected a nonnegative integer, got '" + s + "'");
  return v;
}

inline double to_double(const std::string& s) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

inline json from_flag(const Field& f, const std::string& s) {
  switch (f.kind) {
    case Kind::Int: return to_int(s);
    case Kind::UInt: return to_uint(s);
    case Kind::Double:
    case Kind::OptDouble: return to_double(s);
    case Kind::String: return s;
    case Kind::IntList: {
      json a = json::array();
      for (const auto& x : split(s)) a.push_back(to_int(x));
      return a;
    }
    case Kind::UIntList: {
      json a = json::array();
      for (const auto& x : split(s)) a.push_back(to_uint(x));
      return a;
    }
    case Kind::StringList: {
      json a = json::array();
      for (const auto& x : split(s)) a.push_back(x);
      return a;
    }
  }
  return nullptr;
}

inline bool type_ok(Kind k, const json& v) {
  auto all = [&](auto pred) {
    if (!v.is_array() || v.empty()) return false;
    for (const auto& x : v) {
      if (!pred(x)) return false;
    }
    return true;
  };
  switch (k) {
    case Kind::Int: return v.is_number_integer();
    case Kind::UInt: return v.is_number_unsigned();
    case Kind::Double: return v.is_number();
    case Kind::OptDouble: return v.is_number() || v.is_null();
    case Kind::String: return v.is_string();
    case Kind::IntList: return all([](const json& x) { return x.is_number_integer(); });
    case Kind::UIntList: return all([](const json& x) { return x.is_number_unsigned(); });
    case Kind::StringList: return all([](const json& x) { return x.is_string(); });
  }
  return false;
}

inline std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  for (char& c : s) c = c == '_' ? '-' : c;
  return s;
}

}  // namespace detail

/// Defaults, then the --config file, then explicit flags.
class Settings {
 public:
  Settings(CLI::App& sub, std::vector<Field> fields) : fields_(std::move(fields)) {
    raw_.resize(fields_.size());
    for (std::size_t i = 0; i < fields_.size(); ++i) {
      opts_.push_back(sub.add_option(detail::flag_name(fields_[i].key), raw_[i], fields_[i].help));
    }
    sub.add_option("--config", config_path_, "JSON file with any of the above keys");
  }

  json resolve() const {
    json r = json::object();
    for (const Field& f : fields_) r[f.key] = f.fallback;
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw ConfigError("cannot read config '" + config_path_ + "'");
      json c;
      try {
        c = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("config '" + config_path_ + "': " + e.what());
      }
      if (!c.is_object()) throw ConfigError("config '" + config_path_ + "' must be a JSON object");
      for (const auto& [k, v] : c.items()) {
        const Field* f = find(k);
        if (!f) throw ConfigError("config '" + config_path_ + "': unknown key '" + k + "'");
        if (!detail::type_ok(f->kind, v)) {
          throw ConfigError("config '" + config_path_ + "': bad value for '" + k + "'");
        }
        r[k] = v;
      }
    }
    for (std::size_t i = 0; i < fields_.size(); ++i) {
      if (opts_[i]->count() == 0) continue;
      try {
        r[fields_[i].key] = detail::from_flag(fields_[i], raw_[i]);
      } catch (const ConfigError& e) {
        throw ConfigError(detail::flag_name(fields_[i].key) + ": " + e.what());
      }
    }
    return r;
  }

  /// The resolved settings without I/O-only keys.
  json embedded(const json& resolved) const {
    json e = resolved;
    for (const Field& f : fields_) {
      if (f.io_only) e.erase(f.key);
    }
    return e;
  }

 private:
  const Field* find(const std::string& k) const {
    for (const Field& f : fields_) {
      if (f.key == k) return &f;
    }
    return nullptr;
  }

  std::vector<Field> fields_;
  std::vector<std::string> raw_;
  std::vector<CLI::Option*> opts_;
  std::string config_path_;
};

inline std::vector<Field> stability_fields() {
  return {{"t", Kind::OptDouble, nullptr, "equal-pair threshold (pairs with |s_j^2 - s_i^2| < 1/t)"},
          {"clamp", Kind::OptDouble, nullptr, "magnitude clamp for F and T"},
          {"clip_value", Kind::Double, 1e16, "clip mode value"},
          {"taylor_k", Kind::Int, 9, "taylor mode degree"}};
}

inline GradMode mode_from(const std::string& name, const json& r) {
  GradMode m;
  try {
    m = GradMode::of(parse_variant(name));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  m.clip_value = r.at("clip_value").get<double>();
  m.taylor_k = r.at("taylor_k").get<int>();
  if (!r.at("t").is_null() || !r.at("clamp").is_null()) {
    StabilityParams p = default_stability<float>();
    if (!r.at("t").is_null()) p.t = r.at("t").get<double>();
    if (!r.at("clamp").is_null()) p.clamp = r.at("clamp").get<double>();
    m.stability = p;
  }
  return m;
}

/// Writes to `path`, or to `out` when the path is empty.
inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open output '" + path + "'");
  f << text;
  if (!f) throw ConfigError("write failed for '" + path + "'");
}

inline std::vector<Field> efficacy_fields() {
  std::vector<Field> f = {
      {"trials", Kind::Int, 1000, "trials per cell"},
      {"cases", Kind::IntList, {1, 2}, "scenario cases, e.g. 1,2"},
      {"workflows", Kind::IntList, {1, 2, 3}, "workflows, e.g. 1,2,3"},
      {"modes", Kind::StringList, {"tf", "clip", "taylor", "inv"}, "backward modes"},
      {"seed", Kind::UInt, 3407, "master seed"},
      {"seeds", Kind::UIntList, nullptr, "several master seeds (overrides --seed)"},
      {"basis", Kind::String, "identity", "singular vector basis: identity or random_orthogonal"},
      {"size", Kind::Int, 10, "matrix size"},
      {"threads", Kind::Int, 1, "worker threads"},
      {"format", Kind::String, "csv", "csv or json"},
      {"out", Kind::String, "", "output path (stdout if empty)", true},
  };
  for (Field& s : stability_fields()) f.push_back(std::move(s));
  return f;
}

inline std::vector<Field> train_fields() {
  std::vector<Field> f = {
      {"solver", Kind::String, "admm", "admm or pgd"},
      {"steps", Kind::Int, 200, "optimizer steps"},
      {"lr", Kind::Double, 0.05, "Adam learning rate"},
      {"mode", Kind::String, "inv", "backward mode"},
      {"inject_duplicates", Kind::Double, 0.1, "probability of a duplicate-spectrum sample per step"},
      {"seed", Kind::UInt, 3407, "master seed"},
      {"n_unroll", Kind::Int, 10, "unrolled iterations"},
      {"size", Kind::Int, 20, "matrix size"},
      {"rank", Kind::Int, 2, "ground-truth rank"},
      {"sampling", Kind::Double, 0.5, "observed fraction"},
      {"train_size", Kind::Int, 32, "training samples"},
      {"val_size", Kind::Int, 8, "validation samples"},
      {"out", Kind::String, "", "output path (stdout if empty)", true},
  };
  for (Field& s : stability_fields()) f.push_back(std::move(s));
  return f;
}

inline std::vector<Field> gradcheck_fields() {
  return {
      {"cases", Kind::Int, 20, "random problems"},
      {"seed", Kind::UInt, 3407, "master seed"},
      {"tolerance", Kind::Double, 1e-5, "relative error bound against finite differences"},
      {"agreement_tolerance", Kind::Double, 1e-12, "exact vs inv agreement bound"},
      {"fd_step", Kind::Double, 1e-6, "central difference step"},
      {"out", Kind::String, "", "output path (stdout if empty)", true},
  };
}

inline int cmd_efficacy(const json& r, const json& embedded, std::ostream& out, std::ostream& err) {
  experiments::EfficacyConfig cfg;
  cfg.trials = r.at("trials").get<int>();
  cfg.cases = r.at("cases").get<std::vector<int>>();
  cfg.workflows = r.at("workflows").get<std::vector<int>>();
  cfg.modes.clear();
  for (const auto& name : r.at("modes").get<std::vector<std::string>>()) cfg.modes.push_back(mode_from(name, r));
  cfg.seeds = r.at("seeds").is_null() ? std::vector<std::uint64_t>{r.at("seed").get<std::uint64_t>()}
                                      : r.at("seeds").get<std::vector<std::uint64_t>>();
  const std::string format = r.at("format").get<std::string>();
  if (format != "csv" && format != "json") throw ConfigError("format must be csv or json");
  try {
    cfg.basis = experiments::parse_basis(r.at("basis").get<std::string>());
    cfg.size = r.at("size").get<int>();
    cfg.threads = r.at("threads").get<int>();
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const experiments::EfficacyReport rep = experiments::run_efficacy(cfg);
  emit(r.at("out").get<std::string>(),
       format == "csv" ? efficacy_csv(rep, embedded) : efficacy_json(rep, embedded), out);
  for (int c : cfg.cases) {
    for (int wf : cfg.workflows) {
      if (!experiments::strictly_smallest(rep, c, wf, "inv")) {
        err << "note: inv is not strictly smallest in case " << c << ", workflow " << wf << "\n";
      }
    }
  }
  return Ok;
}

inline int cmd_train(const json& r, const json& embedded, std::ostream& out, std::ostream& err) {
  experiments::TrainConfig cfg;
  try {
    cfg.solver = experiments::parse_solver(r.at("solver").get<std::string>());
    cfg.steps = r.at("steps").get<int>();
    cfg.adam.lr = r.at("lr").get<double>();
    cfg.mode = mode_from(r.at("mode").get<std::string>(), r);
    cfg.inject_duplicates = r.at("inject_duplicates").get<double>();
    cfg.seed = r.at("seed").get<std::uint64_t>();
    cfg.n_unroll = r.at("n_unroll").get<int>();
    cfg.size = r.at("size").get<int>();
    cfg.rank = r.at("rank").get<int>();
    cfg.sampling = r.at("sampling").get<double>();
    cfg.train_size = r.at("train_size").get<int>();
    cfg.val_size = r.at("val_size").get<int>();
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::string log;
  const experiments::TrainResult res = experiments::train_unrolled(cfg, [&](const experiments::TrainLogLine& l) {
    json j = train_line_json(l);
    if (l.step == 0) j["config"] = embedded;
    log += j.dump() + "\n";
  });
  if (res.halted) {
    log += json{{"halted", true}, {"step", res.log.back().step}, {"diagnostic", res.diagnostic}}.dump() + "\n";
  }
  emit(r.at("out").get<std::string>(), log, out);
  if (res.halted) {
    err << "training halted: " << res.diagnostic << "\n";
    return Failure;
  }
  return Ok;
}

inline int cmd_gradcheck(const json& r, const json& embedded, std::ostream& out, std::ostream& err) {
  GradcheckConfig cfg;
  cfg.cases = r.at("cases").get<int>();
  cfg.seed = r.at("seed").get<std::uint64_t>();
  cfg.tolerance = r.at("tolerance").get<double>();
  cfg.agreement_tolerance = r.at("agreement_tolerance").get<double>();
  cfg.fd.step = r.at("fd_step").get<double>();
  if (cfg.cases < 1) throw ConfigError("cases must be >= 1");
  if (!(cfg.tolerance >= 0) || !(cfg.agreement_tolerance >= 0)) {
    throw ConfigError("tolerances must be >= 0");
  }
  try {
    cfg.fd.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const GradcheckReport rep = run_gradcheck(cfg);
  json ops = json::array();
  for (const OpCheck& c : rep.checks) {
    ops.push_back({{"op", c.op}, {"cases", c.cases}, {"worst_rel_err", c.worst},
                   {"tolerance", c.tolerance}, {"pass", c.pass()}});
    if (!c.pass()) {
      err << "violation: " << c.op << " worst " << fmt_double(c.worst) << " > " << fmt_double(c.tolerance) << "\n";
    }
  }
  emit(r.at("out").get<std::string>(),
       json{{"config", embedded}, {"ops", ops}, {"pass", rep.pass()}}.dump(2) + "\n", out);
  return rep.pass() ? Ok : Failure;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Differentiable SVD with a pseudoinverse backward pass: gradient checks and benchmarks"};
  app.require_subcommand(1);
  CLI::App* g = app.add_subcommand("gradcheck", "finite-difference and reference gradient checks");
  CLI::App* e = app.add_subcommand("efficacy", "gradient error benchmark on duplicated spectra");
  CLI::App* t = app.add_subcommand("train", "train an unrolled completion network");
  Settings gs(*g, gradcheck_fields());
  Settings es(*e, efficacy_fields());
  Settings ts(*t, train_fields());
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    std::ostringstream o, x;
    const int code = app.exit(pe, o, x);
    out << o.str();
    err << x.str();
    return code == 0 ? Ok : Usage;
  }
  try {
    if (g->parsed()) {
      const json r = gs.resolve();
      return cmd_gradcheck(r, gs.embedded(r), out, err);
    }
    if (e->parsed()) {
      const json r = es.resolve();
      return cmd_efficacy(r, es.embedded(r), out, err);
    }
    const json r = ts.resolve();
    return cmd_train(r, ts.embedded(r), out, err);
  } catch (const ConfigError& ce) {
    err << "error: " << ce.what() << "\n";
    return Usage;
  } catch (const json::exception& je) {
    err << "error: " << je.what() << "\n";
    return Usage;
  }
}

}  // namespace svdinv::cli
