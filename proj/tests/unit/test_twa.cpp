#include <doctest.h>

#include <cmath>

#include "dicke/propagate.hpp"
#include "dicke/twa.hpp"

using namespace dicke;

TEST_CASE("initial Wigner moments match the coherent state") {
  const int n = 40;
  const std::size_t r = 40000;
  const WignerEnsemble ens = sample_initial(n, WignerRecipe::critical(), r, 9);
  double mx = 0, mx2 = 0, my2 = 0, mn = 0, msx = 0;
  for (const auto& p : ens.points) {
    mx += p.ar;
    mx2 += p.ar * p.ar;
    my2 += p.sy * p.sy;
    mn += p.boson_number() - 0.5;
    msx += p.sx;
  }
  mx /= r, mx2 /= r, my2 /= r, mn /= r, msx /= r;
  const double tol = 5.0 / std::sqrt(static_cast<double>(r));
  CHECK(std::abs(mx) < 0.5 * tol);
  CHECK(mx2 == doctest::Approx(0.25).epsilon(2 * tol));  // var X = 1/4 at t = 0
  CHECK(my2 == doctest::Approx(n / 4.0).epsilon(2 * tol));
  CHECK(std::abs(mn) < tol);                             // Weyl symbol of n has zero mean in vacuum
  CHECK(msx == doctest::Approx(-n / 2.0).epsilon(1e-12));
}

TEST_CASE("sampling and evolution do not depend on the thread count") {
  const ModelParams p = reference_params(10, 0.2, 1);
  const WignerEnsemble a = sample_initial(10, WignerRecipe::critical(), 300, 4, 1);
  const WignerEnsemble b = sample_initial(10, WignerRecipe::critical(), 300, 4, 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.points[i].vec() == b.points[i].vec());

  const std::vector<double> times = TimeGrid{1.0, 11}.times();
  EnsembleOptions o1, o3;
  o1.blocks = o3.blocks = 10;
  o3.threads = 3;
  const MomentSeries s1 = evolve_ensemble(a, p, times, o1);
  const MomentSeries s3 = evolve_ensemble(a, p, times, o3);
  for (std::size_t k = 0; k < s1.tracks.size(); ++k) {
    CHECK(s1.tracks[k].mean == s3.tracks[k].mean);
    CHECK(s1.tracks[k].variance == s3.tracks[k].variance);
  }
}

TEST_CASE("recipe text round-trips") {
  const WignerRecipe r = WignerRecipe::parse("coherent theta=1.2 phi=0.4 sign=1 alpha_r=0.5 alpha_i=-1");
  CHECK(r.axis.theta == doctest::Approx(1.2));
  CHECK(r.sign == 1);
  CHECK(r.alpha == cplx(0.5, -1.0));
  const WignerRecipe back = WignerRecipe::parse(r.tag());
  CHECK(back.axis.phi == doctest::Approx(0.4));
  CHECK(back.alpha == r.alpha);
  CHECK_THROWS(WignerRecipe::parse("squeezed"));
}

TEST_CASE("TWA follows the exact early-time quadrature variance at N = 20") {
  const ModelParams p = reference_params(20, 0.2, 120);
  const std::vector<double> times = TimeGrid{0.8, 9}.times();
  const ChebyshevPropagator prop(p);
  const OperatorSet ops = build_operators(p);
  std::vector<double> exact;
  prop.evolve_visit(critical_state(p), times, [&](std::size_t, const StateVector& s) {
    const double m = s.expectation(ops.x.matrix).real();
    exact.push_back(s.expectation(ops.x.matrix * ops.x.matrix).real() - m * m);
  });
  const WignerEnsemble ens = sample_initial(20, WignerRecipe::critical(), 20000, 17);
  const MomentSeries s = evolve_ensemble(ens, p, times);
  const MomentTrack& x = s.track(TwaObservable::X);
  for (std::size_t i = 0; i < times.size(); ++i)
    CHECK(x.variance[i] == doctest::Approx(exact[i]).epsilon(0.1));
}
