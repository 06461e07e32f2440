#include "vrcn/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/algorithm/string/split.hpp>
#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "vrcn/errors.hpp"
#include "vrcn/libsvm.hpp"

namespace vrcn {

namespace {

namespace pt = boost::property_tree;

std::string key_name(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

double to_double(const std::string& where, const std::string& v) {
  double out = 0.0;
  const char* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc{} || res.ptr != end) throw ConfigError(where + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& where, const std::string& v) {
  std::uint64_t out = 0;
  const char* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw ConfigError(where + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& where, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError(where + ": expected on/off, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> parts;
  boost::split(parts, v, [](char ch) { return ch == ','; });
  std::vector<std::string> out;
  for (std::string& p : parts) {
    boost::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

Sampling parse_sampling(const std::string& where, const std::string& v) {
  if (v == "with_replacement") return Sampling::WithReplacement;
  if (v == "without_replacement") return Sampling::WithoutReplacement;
  if (v == "full_pass") return Sampling::FullPass;
  throw ConfigError(where + ": unknown sampling '" + v + "'");
}

std::string sampling_name(Sampling s) {
  switch (s) {
    case Sampling::WithReplacement:
      return "with_replacement";
    case Sampling::WithoutReplacement:
      return "without_replacement";
    case Sampling::FullPass:
      return "full_pass";
  }
  return "?";
}

using Setter = std::function<void(ExperimentConfig&, const std::string& where, const std::string& value)>;
using SectionTable = std::map<std::string, Setter>;

Setter problem_double(double ProblemSpec::*member) {
  return [member](ExperimentConfig& c, const std::string& w, const std::string& v) { c.problem.*member = to_double(w, v); };
}
Setter problem_size(std::size_t ProblemSpec::*member) {
  return [member](ExperimentConfig& c, const std::string& w, const std::string& v) {
    c.problem.*member = static_cast<std::size_t>(to_u64(w, v));
  };
}
Setter override_value(std::optional<double> ConstantOverrides::*member) {
  return [member](ExperimentConfig& c, const std::string& w, const std::string& v) {
    c.problem.overrides.*member = to_double(w, v);
  };
}
Setter run_double(double RunConfig::*member) {
  return [member](ExperimentConfig& c, const std::string& w, const std::string& v) { c.run.*member = to_double(w, v); };
}
Setter run_opt_double(std::optional<double> RunConfig::*member) {
  return [member](ExperimentConfig& c, const std::string& w, const std::string& v) { c.run.*member = to_double(w, v); };
}
Setter run_opt_size(std::optional<std::size_t> RunConfig::*member) {
  return [member](ExperimentConfig& c, const std::string& w, const std::string& v) {
    c.run.*member = static_cast<std::size_t>(to_u64(w, v));
  };
}
Setter run_bool(bool RunConfig::*member) {
  return [member](ExperimentConfig& c, const std::string& w, const std::string& v) { c.run.*member = to_bool(w, v); };
}
Setter schedule_constant(double ScheduleConstants::*member) {
  return [member](ExperimentConfig& c, const std::string& w, const std::string& v) {
    c.run.constants.*member = to_double(w, v);
  };
}

const std::map<std::string, SectionTable>& tables() {
  static const std::map<std::string, SectionTable> t = [] {
    std::map<std::string, SectionTable> m;
    SectionTable& p = m["problem"];
    p["kind"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.problem.kind = v; };
    p["n"] = problem_size(&ProblemSpec::n);
    p["d"] = problem_size(&ProblemSpec::d);
    p["seed"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) { c.problem.seed = to_u64(w, v); };
    p["shift_scale"] = problem_double(&ProblemSpec::shift_scale);
    p["box"] = problem_double(&ProblemSpec::box);
    p["mu"] = problem_double(&ProblemSpec::mu);
    p["lam"] = problem_double(&ProblemSpec::lam);
    p["flip"] = problem_double(&ProblemSpec::flip);
    p["noise"] = problem_double(&ProblemSpec::noise);
    p["curvature"] = problem_double(&ProblemSpec::curvature);
    p["path"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.problem.path = v; };
    p["normalize_rows"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.problem.normalize_rows = to_bool(w, v);
    };
    p["L2"] = override_value(&ConstantOverrides::L2);
    p["LH"] = override_value(&ConstantOverrides::LH);
    p["sigma1"] = override_value(&ConstantOverrides::sigma1);
    p["sigma2"] = override_value(&ConstantOverrides::sigma2);
    p["R"] = override_value(&ConstantOverrides::R);
    p["safety"] = problem_double(&ProblemSpec::safety);
    p["estimate_seed"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.problem.estimate_seed = to_u64(w, v);
    };

    SectionTable& r = m["run"];
    r["methods"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.methods = to_list(v);
      if (c.methods.empty()) throw ConfigError(w + ": empty method list");
      for (const std::string& name : c.methods) {
        try {
          parse_method(name);
        } catch (const ConfigError& e) {
          throw ConfigError(w + ": " + e.what());
        }
      }
    };
    r["epsilon"] = run_double(&RunConfig::epsilon);
    r["c"] = run_double(&RunConfig::c);
    r["fixed_alpha"] = run_opt_double(&RunConfig::fixed_alpha);
    r["theta"] = run_double(&RunConfig::theta);
    r["M"] = run_opt_double(&RunConfig::M);
    r["b"] = run_opt_size(&RunConfig::b);
    r["sampling"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.run.sampling = parse_sampling(w, v);
    };
    r["beta"] = run_double(&RunConfig::beta);
    r["beta0"] = run_opt_double(&RunConfig::beta0);
    r["prox_epoch_exponent"] = run_double(&RunConfig::prox_epoch_exponent);
    r["epochs"] = run_opt_size(&RunConfig::epochs);
    r["inner"] = run_opt_size(&RunConfig::inner);
    r["step_norm_stop"] = run_bool(&RunConfig::step_norm_stop);
    r["seed"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) { c.master_seed = to_u64(w, v); };
    r["max_total_iters"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.run.max_total_iters = static_cast<std::size_t>(to_u64(w, v));
    };
    r["backend"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      if (v == "dense") {
        c.run.backend = HessianBackend::Dense;
      } else if (v == "hutchinson") {
        c.run.backend = HessianBackend::Hutchinson;
      } else {
        throw ConfigError(w + ": unknown backend '" + v + "'");
      }
    };
    r["q"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.run.hutchinson.q = static_cast<std::size_t>(to_u64(w, v));
    };
    r["probe"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      if (v == "rademacher") {
        c.run.hutchinson.dist = ProbeDistribution::Rademacher;
      } else if (v == "gaussian") {
        c.run.hutchinson.dist = ProbeDistribution::Gaussian;
      } else {
        throw ConfigError(w + ": unknown probe distribution '" + v + "'");
      }
    };
    r["log_F"] = run_bool(&RunConfig::log_F);
    r["log_grad_norm"] = run_bool(&RunConfig::log_grad_norm);
    r["record_wall_clock"] = run_bool(&RunConfig::record_wall_clock);
    r["x0"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      if (v != "zero" && v != "constant" && v != "gaussian") throw ConfigError(w + ": unknown x0 kind '" + v + "'");
      c.x0.kind = v;
    };
    r["x0_value"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) { c.x0.value = to_double(w, v); };
    r["x0_scale"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) { c.x0.scale = to_double(w, v); };
    r["C_T"] = schedule_constant(&ScheduleConstants::C_T);
    r["C_max"] = schedule_constant(&ScheduleConstants::C_max);
    r["C1"] = schedule_constant(&ScheduleConstants::C1);
    r["C_beta"] = schedule_constant(&ScheduleConstants::C_beta);
    r["C3"] = schedule_constant(&ScheduleConstants::C3);
    r["C4"] = schedule_constant(&ScheduleConstants::C4);
    r["C5"] = schedule_constant(&ScheduleConstants::C5);

    SectionTable& s = m["solver"];
    s["c_theta"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.run.solver.c_theta = to_double(w, v);
    };
    s["max_bisect"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.run.solver.max_bisect = static_cast<std::size_t>(to_u64(w, v));
    };
    s["max_cg"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.run.solver.max_cg = static_cast<std::size_t>(to_u64(w, v));
    };
    s["max_escalations"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.run.solver.max_escalations = static_cast<std::size_t>(to_u64(w, v));
    };
    s["refine"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.run.solver.refine = to_bool(w, v);
    };
    s["jacobi"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.run.solver.jacobi = to_bool(w, v);
    };

    SectionTable& sw = m["sweep"];
    sw["epsilons"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.sweep.epsilons.clear();
      for (const std::string& e : to_list(v)) c.sweep.epsilons.push_back(to_double(w, e));
    };
    sw["seeds"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.sweep.seeds.clear();
      for (const std::string& e : to_list(v)) c.sweep.seeds.push_back(to_u64(w, e));
    };
    sw["seed_count"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      const std::uint64_t k = to_u64(w, v);
      c.sweep.seeds.clear();
      for (std::uint64_t i = 0; i < k; ++i) c.sweep.seeds.push_back(i);
    };
    sw["batch_sizes"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.sweep.batch_sizes.clear();
      for (const std::string& e : to_list(v)) c.sweep.batch_sizes.push_back(static_cast<std::size_t>(to_u64(w, e)));
    };

    SectionTable& o = m["output"];
    o["dir"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; };
    o["workers"] = [](ExperimentConfig& c, const std::string& w, const std::string& v) {
      c.workers = static_cast<std::size_t>(to_u64(w, v));
    };
    return m;
  }();
  return t;
}

std::string opt_str(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : "none"; }
std::string opt_str(const std::optional<std::size_t>& v) { return v ? fmt::format("{}", *v) : "none"; }

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside any section");
    const auto table = tables().find(section);
    if (table == tables().end()) throw ConfigError("unknown section [" + section + "]");
    for (const auto& [key, node] : body) {
      const std::string where = key_name(section, key);
      const auto setter = table->second.find(key);
      if (setter == table->second.end()) throw ConfigError("unknown key " + where);
      std::string value = node.get_value<std::string>();
      boost::trim(value);
      setter->second(cfg, where, value);
    }
  }
  try {
    cfg.run.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid [run] settings: ") + e.what());
  }
  if (cfg.sweep.epsilons.empty()) cfg.sweep.epsilons.push_back(cfg.run.epsilon);
  for (double e : cfg.sweep.epsilons) {
    if (!(e > 0.0)) throw ConfigError("[sweep] epsilons: values must be > 0");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string canonical_config(const ExperimentConfig& c) {
  std::string out;
  auto line = [&](std::string_view key, const std::string& value) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  };
  const ProblemSpec& p = c.problem;
  line("problem.kind", p.kind);
  line("problem.n", fmt::format("{}", p.n));
  line("problem.d", fmt::format("{}", p.d));
  line("problem.seed", fmt::format("{}", p.seed));
  line("problem.shift_scale", fmt::format("{}", p.shift_scale));
  line("problem.box", fmt::format("{}", p.box));
  line("problem.mu", fmt::format("{}", p.mu));
  line("problem.lam", fmt::format("{}", p.lam));
  line("problem.flip", fmt::format("{}", p.flip));
  line("problem.noise", fmt::format("{}", p.noise));
  line("problem.curvature", fmt::format("{}", p.curvature));
  line("problem.path", p.path);
  line("problem.normalize_rows", p.normalize_rows ? "on" : "off");
  line("problem.L2", opt_str(p.overrides.L2));
  line("problem.LH", opt_str(p.overrides.LH));
  line("problem.sigma1", opt_str(p.overrides.sigma1));
  line("problem.sigma2", opt_str(p.overrides.sigma2));
  line("problem.R", opt_str(p.overrides.R));
  line("problem.safety", fmt::format("{}", p.safety));
  line("problem.estimate_seed", fmt::format("{}", p.estimate_seed));

  std::string methods;
  for (const std::string& m : c.methods) methods += (methods.empty() ? "" : ",") + m;
  const RunConfig& r = c.run;
  line("run.methods", methods);
  line("run.epsilon", fmt::format("{}", r.epsilon));
  line("run.c", fmt::format("{}", r.c));
  line("run.fixed_alpha", opt_str(r.fixed_alpha));
  line("run.theta", fmt::format("{}", r.theta));
  line("run.M", opt_str(r.M));
  line("run.b", opt_str(r.b));
  line("run.sampling", sampling_name(r.sampling));
  line("run.beta", fmt::format("{}", r.beta));
  line("run.beta0", opt_str(r.beta0));
  line("run.prox_epoch_exponent", fmt::format("{}", r.prox_epoch_exponent));
  line("run.epochs", opt_str(r.epochs));
  line("run.inner", opt_str(r.inner));
  line("run.step_norm_stop", r.step_norm_stop ? "on" : "off");
  line("run.seed", fmt::format("{}", c.master_seed));
  line("run.max_total_iters", fmt::format("{}", r.max_total_iters));
  line("run.backend", r.backend == HessianBackend::Dense ? "dense" : "hutchinson");
  line("run.q", fmt::format("{}", r.hutchinson.q));
  line("run.probe", r.hutchinson.dist == ProbeDistribution::Rademacher ? "rademacher" : "gaussian");
  line("run.log_F", r.log_F ? "on" : "off");
  line("run.log_grad_norm", r.log_grad_norm ? "on" : "off");
  line("run.record_wall_clock", r.record_wall_clock ? "on" : "off");
  line("run.x0", c.x0.kind);
  line("run.x0_value", fmt::format("{}", c.x0.value));
  line("run.x0_scale", fmt::format("{}", c.x0.scale));
  const ScheduleConstants& k = r.constants;
  line("run.C", fmt::format("{},{},{},{},{},{},{}", k.C_T, k.C_max, k.C1, k.C_beta, k.C3, k.C4, k.C5));
  line("solver.c_theta", fmt::format("{}", r.solver.c_theta));
  line("solver.max_bisect", fmt::format("{}", r.solver.max_bisect));
  line("solver.max_cg", fmt::format("{}", r.solver.max_cg));
  line("solver.max_escalations", fmt::format("{}", r.solver.max_escalations));
  line("solver.refine", r.solver.refine ? "on" : "off");
  line("solver.jacobi", r.solver.jacobi ? "on" : "off");
  std::string eps, seeds, bs;
  for (double e : c.sweep.epsilons) eps += fmt::format("{}{}", eps.empty() ? "" : ",", e);
  for (std::uint64_t s : c.sweep.seeds) seeds += fmt::format("{}{}", seeds.empty() ? "" : ",", s);
  for (std::size_t b : c.sweep.batch_sizes) bs += fmt::format("{}{}", bs.empty() ? "" : ",", b);
  line("sweep.epsilons", eps);
  line("sweep.seeds", seeds);
  line("sweep.batch_sizes", bs);
  return out;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const ExperimentConfig& config) { return fnv1a64(canonical_config(config)); }

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

MethodSpec parse_method(const std::string& name) {
  MethodSpec m;
  m.name = name;
  constexpr std::string_view prefix = "vrcn_";
  if (name.rfind(prefix, 0) == 0) {
    m.regime = parse_regime(name.substr(prefix.size()));
    return m;
  }
  m.baseline = true;
  m.method = parse_baseline(name);
  return m;
}

ProblemPtr build_problem(const ProblemSpec& s) {
  if (s.kind == "double_well") return make_double_well(s.n, s.d, s.shift_scale, s.seed, s.box);
  if (s.kind == "logistic_l2") return make_logistic_l2(make_classification_dataset(s.n, s.d, s.flip, s.seed), s.mu);
  if (s.kind == "nonconvex_logistic") {
    return make_nonconvex_logistic(make_classification_dataset(s.n, s.d, s.flip, s.seed), s.lam);
  }
  if (s.kind == "quadratic") {
    Matrix a(s.d, s.d);
    for (std::size_t i = 0; i < s.d; ++i) a(i, i) = s.curvature;
    return make_shared_hessian_quadratic(std::move(a), Vector(s.d, 1.0), s.n, s.noise, s.seed);
  }
  if (s.kind == "libsvm_logistic" || s.kind == "libsvm_nonconvex") {
    if (s.path.empty()) throw ConfigError("[problem] path: required for kind " + s.kind);
    LibsvmOptions opt;
    opt.normalize_rows = s.normalize_rows;
    opt.map_zero_label = true;
    Dataset data = load_libsvm(s.path, opt);
    return s.kind == "libsvm_logistic" ? make_logistic_l2(std::move(data), s.mu)
                                       : make_nonconvex_logistic(std::move(data), s.lam);
  }
  throw ConfigError("[problem] kind: unknown problem kind '" + s.kind + "'");
}

ProblemConstants problem_constants(const ProblemSpec& spec, const FiniteSumProblem& problem) {
  ResolveOptions opt;
  opt.overrides = spec.overrides;
  opt.safety = spec.safety;
  opt.estimate.seed = spec.estimate_seed;
  return resolve_constants(problem, opt).values;
}

}  // namespace vrcn
