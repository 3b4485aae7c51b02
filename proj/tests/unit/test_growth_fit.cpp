#include <doctest.h>

#include <cmath>
#include <vector>

#include "dicke/growth_fit.hpp"

using namespace dicke;

TEST_CASE("linear fit recovers an exact line") {
  const std::vector<double> x{0, 1, 2, 3, 4}, y{1, 3, 5, 7, 9};
  const LinearFit f = linear_fit(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r_squared == doctest::Approx(1.0));
}

TEST_CASE("mean interval uses the Student-t quantile") {
  const std::vector<double> x{1, 2, 3};
  const MeanEstimate m = mean_ci(x);
  CHECK(m.mean == doctest::Approx(2.0));
  // t_{0.975, 2} = 4.302653
  CHECK(m.ci_high - m.mean == doctest::Approx(4.302653 * 1.0 / std::sqrt(3.0)).epsilon(1e-5));
}

TEST_CASE("exponential growth rate is recovered before saturation") {
  std::vector<double> t, v;
  for (int i = 0; i <= 400; ++i) {
    t.push_back(0.01 * i);
    // logistic: e^{3t} growth, saturating at 1e4 with a maximum afterwards
    const double g = std::exp(3.0 * t.back());
    v.push_back(g / (1.0 + g / 1e4) * (1.0 + 0.1 * std::exp(-std::pow(t.back() - 3.5, 2) * 20)));
  }
  const GrowthFit f = fit_exponential_growth(t, v);
  REQUIRE(f.ok());
  CHECK(f.rate == doctest::Approx(3.0).epsilon(0.03));
  CHECK(f.ci_low <= f.rate);
  CHECK(f.ci_high >= f.rate);
}

TEST_CASE("flat series reports no exponential window") {
  std::vector<double> t, v;
  for (int i = 0; i < 50; ++i) {
    t.push_back(i);
    v.push_back(1.0 + 0.01 * std::sin(i));
  }
  const GrowthFit f = fit_exponential_growth(t, v);
  CHECK_FALSE(f.ok());
  CHECK_FALSE(f.reason.empty());
}
