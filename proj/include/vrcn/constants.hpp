#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vrcn/problems.hpp"

namespace vrcn {

struct EstimateOptions {
  std::size_t x_samples = 8;
  std::size_t pair_samples = 16;
  std::uint64_t seed = 0;
  // Points are drawn as center + radius * N(0, I) / sqrt(d); the center itself is always included.
  double radius = 1.0;
  std::optional<Vector> center;
  // Pairs are (x, x + step * u) with u a random unit vector.
  double pair_step = 1e-2;
};

// Sampled estimates, i.e. lower bounds on the true suprema:
//   sigma1^2 = max_x mean_i ||grad f_i(x) - grad F(x)||^2
//   sigma2^2 = max_x mean_i ||hess f_i(x) - hess F(x)||_F^2
//   L2       = max_pairs ||hess F(x) - hess F(y)||_op / ||x - y||
//   LH       = max_x ||hess F(x)||_op
ProblemConstants estimate_constants(const FiniteSumProblem& problem, const EstimateOptions& options);
ProblemConstants estimate_constants(const FiniteSumProblem& problem, std::size_t x_samples,
                                    std::size_t pair_samples, std::uint64_t seed);

struct ConstantOverrides {
  std::optional<double> L2;
  std::optional<double> LH;
  std::optional<double> sigma1;
  std::optional<double> sigma2;
  std::optional<double> R;
};

struct ResolveOptions {
  ConstantOverrides overrides;
  // Multiplies sampled estimates; analytic bounds are used as-is.
  double safety = 1.5;
  double c_tilde_h = 1.0;
  EstimateOptions estimate;
};

enum class ConstantSource { Override, Analytic, Estimated };

struct ResolvedConstants {
  ProblemConstants values;
  ConstantSource L2_source = ConstantSource::Estimated;
  ConstantSource LH_source = ConstantSource::Estimated;
  ConstantSource sigma1_source = ConstantSource::Estimated;
  ConstantSource sigma2_source = ConstantSource::Estimated;
};

// Per field: user override, else the problem's analytic bound, else safety times
// the sampled estimate. R is copied from the overrides only.
ResolvedConstants resolve_constants(const FiniteSumProblem& problem, const ResolveOptions& options);

// ||x0|| + 1, logged as a warning; the distance to the minimizer is unknowable up front.
double default_distance_estimate(const Vector& x0);

std::string to_string(ConstantSource source);

}  // namespace vrcn
