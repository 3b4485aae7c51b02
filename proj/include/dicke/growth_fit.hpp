#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace dicke {

/// Ordinary least squares y = intercept + slope * x with a 95% Student-t
/// confidence interval on the slope.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

/// Sample mean with a 95% Student-t interval.
struct MeanEstimate {
  double mean = 0.0;
  double stddev = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t count = 0;
};

MeanEstimate mean_ci(std::span<const double> x);

/// Window selection for exponential-growth fits.
///
/// The window opens once the series exceeds `onset_factor` times its initial
/// value and closes at the last point below `end_fraction` of the first
/// maximum. A fit is attempted only if the series grows by at least
/// `min_decades` between t = 0 and that maximum.
struct FitWindowPolicy {
  double onset_factor = 10.0;
  double end_fraction = 0.1;
  double min_decades = 1.5;
  std::size_t min_points = 3;
};

struct FirstMaximum {
  std::size_t index = 0;
  double time = 0.0;
  double value = 0.0;
  bool at_end = false;  // no interior maximum: end-of-grid marker
};

/// First local maximum after the series has crossed the onset threshold.
FirstMaximum first_maximum(std::span<const double> t, std::span<const double> v,
                           const FitWindowPolicy& policy = {});

enum class FitStatus { Ok, NoExponentialWindow };

struct GrowthFit {
  FitStatus status = FitStatus::NoExponentialWindow;
  double rate = 0.0;  // per unit of t
  double ci_low = 0.0;
  double ci_high = 0.0;
  double r_squared = 0.0;
  std::size_t window_first = 0;
  std::size_t window_last = 0;
  FirstMaximum maximum;
  std::string reason;

  bool ok() const { return status == FitStatus::Ok; }
  double half_width() const { return 0.5 * (ci_high - ci_low); }
};

/// Least-squares slope of log(v) against t on the policy's window.
GrowthFit fit_exponential_growth(std::span<const double> t, std::span<const double> v,
                                 const FitWindowPolicy& policy = {});

}  // namespace dicke
