#pragma once

#include <cstddef>
#include <span>

namespace vrcn {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  std::size_t points = 0;
};

// Ordinary least squares y = intercept + slope x. Throws std::invalid_argument
// with "insufficient points" for fewer than two distinct x values.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

// Fit of log(y) against log(x); all values must be positive.
LineFit fit_loglog(std::span<const double> x, std::span<const double> y);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
  double stderr_mean = 0.0;
};

MeanStd mean_std(std::span<const double> xs);

}  // namespace vrcn
