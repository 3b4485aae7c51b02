#include "dicke/growth_fit.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace dicke {

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("linear_fit: size mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("linear_fit: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("linear_fit: degenerate abscissa");
  LinearFit f;
  f.points = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    sse += r * r;
  }
  f.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  if (n > 2) {
    f.slope_stderr = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
    const boost::math::students_t dist(static_cast<double>(n - 2));
    const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
    f.ci_low = f.slope - q * f.slope_stderr;
    f.ci_high = f.slope + q * f.slope_stderr;
  } else {
    f.ci_low = f.ci_high = f.slope;
  }
  return f;
}

MeanEstimate mean_ci(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean_ci: empty sample");
  MeanEstimate m;
  m.count = x.size();
  for (double v : x) m.mean += v;
  m.mean /= static_cast<double>(x.size());
  if (x.size() < 2) {
    m.ci_low = m.ci_high = m.mean;
    return m;
  }
  double ss = 0.0;
  for (double v : x) ss += (v - m.mean) * (v - m.mean);
  m.stddev = std::sqrt(ss / static_cast<double>(x.size() - 1));
  const boost::math::students_t dist(static_cast<double>(x.size() - 1));
  const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
  const double half = q * m.stddev / std::sqrt(static_cast<double>(x.size()));
  m.ci_low = m.mean - half;
  m.ci_high = m.mean + half;
  return m;
}

namespace {

std::size_t onset_index(std::span<const double> v, const FitWindowPolicy& policy) {
  const double threshold = policy.onset_factor * std::max(v[0], 0.0);
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > threshold) return i;
  return v.size();
}

}  // namespace

FirstMaximum first_maximum(std::span<const double> t, std::span<const double> v,
                           const FitWindowPolicy& policy) {
  if (t.size() != v.size() || v.empty())
    throw std::invalid_argument("first_maximum: bad series");
  std::size_t start = onset_index(v, policy);
  // Series that never cross the onset threshold: take the first interior
  // maximum of the whole series.
  if (start >= v.size()) start = 1;
  for (std::size_t i = std::max<std::size_t>(start, 1); i + 1 < v.size(); ++i) {
    if (v[i] >= v[i - 1] && v[i] > v[i + 1]) return {i, t[i], v[i], false};
  }
  const std::size_t last = v.size() - 1;
  return {last, t[last], v[last], true};
}

GrowthFit fit_exponential_growth(std::span<const double> t, std::span<const double> v,
                                 const FitWindowPolicy& policy) {
  GrowthFit out;
  if (t.size() != v.size() || v.size() < policy.min_points) {
    out.reason = "series too short";
    return out;
  }
  const double v0 = v[0];
  if (!(v0 > 0.0)) {
    out.reason = "initial value must be positive for a logarithmic fit";
    return out;
  }
  const std::size_t start = onset_index(v, policy);
  if (start >= v.size()) {
    out.reason = "series never exceeds the onset threshold";
    return out;
  }
  out.maximum = first_maximum(t, v, policy);
  const double decades = std::log10(out.maximum.value / v0);
  if (!(decades >= policy.min_decades)) {
    out.reason = "growth of " + std::to_string(decades) + " decades below minimum";
    return out;
  }
  const double stop = policy.end_fraction * out.maximum.value;
  std::size_t last = start;
  for (std::size_t i = start; i <= out.maximum.index; ++i) {
    if (v[i] <= stop) last = i;
  }
  if (last < start || last - start + 1 < policy.min_points) {
    out.reason = "fit window has fewer than the minimum number of points";
    return out;
  }
  std::vector<double> x(t.begin() + start, t.begin() + last + 1);
  std::vector<double> y;
  y.reserve(x.size());
  for (std::size_t i = start; i <= last; ++i) y.push_back(std::log(v[i]));
  const LinearFit lf = linear_fit(x, y);
  out.status = FitStatus::Ok;
  out.rate = lf.slope;
  out.ci_low = lf.ci_low;
  out.ci_high = lf.ci_high;
  out.r_squared = lf.r_squared;
  out.window_first = start;
  out.window_last = last;
  return out;
}

}  // namespace dicke
