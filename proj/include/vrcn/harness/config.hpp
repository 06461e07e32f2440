#pragma once

// Experiment configuration: flat INI sections [problem] [run] [solver] [sweep]
// [output]. Unknown sections and keys are rejected with the offending name.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrcn/constants.hpp"
#include "vrcn/optimizer.hpp"
#include "vrcn/problems.hpp"

namespace vrcn {

struct ProblemSpec {
  // double_well | logistic_l2 | nonconvex_logistic | quadratic | libsvm_logistic | libsvm_nonconvex
  std::string kind = "double_well";
  std::size_t n = 64;
  std::size_t d = 10;
  std::uint64_t seed = 1;
  double shift_scale = 0.3;
  double box = 2.0;
  double mu = 0.1;
  double lam = 0.1;
  double flip = 0.1;
  // Offset noise of the shared-Hessian quadratic; its Hessian is I * curvature.
  double noise = 0.5;
  double curvature = 1.0;
  std::string path;
  bool normalize_rows = false;
  ConstantOverrides overrides;
  double safety = 1.5;
  std::uint64_t estimate_seed = 7;
};

struct X0Spec {
  // zero | constant | gaussian (drawn per run from the run seed)
  std::string kind = "zero";
  double value = 0.0;
  double scale = 1.0;
};

struct SweepSpec {
  std::vector<double> epsilons;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> batch_sizes;
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<std::string> methods{"vrcn_nonconvex"};
  RunConfig run;
  X0Spec x0;
  SweepSpec sweep;
  std::string out_dir = "out";
  std::uint64_t master_seed = 0;
  std::size_t workers = 0;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

// Every field in a fixed order, one "section.key=value" per line; the hash
// input, so command-line overrides change it too.
std::string canonical_config(const ExperimentConfig& config);
std::uint64_t fnv1a64(std::string_view data);
std::uint64_t config_hash(const ExperimentConfig& config);
std::string hex64(std::uint64_t v);

struct MethodSpec {
  std::string name;
  bool baseline = false;
  Regime regime = Regime::NonconvexPlain;
  Baseline method = Baseline::FullCRN;
};

// vrcn_nonconvex | vrcn_convex | vrcn_nonconvex_prox | full_crn | subsampled_crn | sarah_gd
MethodSpec parse_method(const std::string& name);

ProblemPtr build_problem(const ProblemSpec& spec);
ProblemConstants problem_constants(const ProblemSpec& spec, const FiniteSumProblem& problem);

}  // namespace vrcn
