#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "dicke/classical.hpp"

using namespace dicke;

namespace {

// Flow from the energy alone: dS/dt = grad_S E x S, d(ar)/dt = dE/d(ai) / 2,
// d(ai)/dt = -dE/d(ar) / 2, with the gradient taken by central differences.
Vec5 poisson_flow(const MeanField& mf, const Vec5& x) {
  Vec5 grad;
  for (int i = 0; i < 5; ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(x(i)));
    Vec5 a = x, b = x;
    a(i) += h;
    b(i) -= h;
    grad(i) = (mf.energy(PhasePoint::from(a)) - mf.energy(PhasePoint::from(b))) / (2 * h);
  }
  const Eigen::Vector3d s = x.head<3>(), gs = grad.head<3>();
  Vec5 f;
  f.head<3>() = gs.cross(s);
  f(3) = 0.5 * grad(4);
  f(4) = -0.5 * grad(3);
  return f;
}

Vec5 rk4_oracle(const MeanField& mf, Vec5 x, double t_end, int steps) {
  const double h = t_end / steps;
  for (int i = 0; i < steps; ++i) {
    const Vec5 k1 = poisson_flow(mf, x);
    const Vec5 k2 = poisson_flow(mf, x + 0.5 * h * k1);
    const Vec5 k3 = poisson_flow(mf, x + 0.5 * h * k2);
    const Vec5 k4 = poisson_flow(mf, x + h * k3);
    x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return x;
}

const ModelParams kParams = reference_params(20, 0.2, 1);

PhasePoint off_critical() {
  PhasePoint x = critical_point(20);
  x.sy = 0.8;
  x.sz = -1.1;
  x.sx = -std::sqrt(100.0 - x.sy * x.sy - x.sz * x.sz);
  x.ar = 0.3;
  x.ai = -0.2;
  return x;
}

}  // namespace

TEST_CASE("mean-field rhs equals the Poisson-bracket flow of the energy") {
  const MeanField mf{kParams};
  const Vec5 x = off_critical().vec();
  const Vec5 a = mf.rhs(x), b = poisson_flow(mf, x);
  CHECK((a - b).norm() < 1e-6 * b.norm());
}

TEST_CASE("adaptive integrator agrees with a fixed-step RK4 oracle") {
  const MeanField mf{kParams};
  const PhasePoint x0 = off_critical();
  const std::vector<double> times{0.0, 0.5, 1.0};
  const auto traj = integrate(x0, mf, times);
  const Vec5 ref = rk4_oracle(mf, x0.vec(), 1.0, 4000);
  CHECK((traj.back().vec() - ref).norm() < 1e-6 * ref.norm());
}

TEST_CASE("jacobian matches finite differences") {
  for (Scaling sc : {Scaling::Bare, Scaling::Rescaled}) {
    const MeanField mf{kParams, PhaseSign::Heisenberg, sc};
    const Vec5 x = mf.to_internal(off_critical());
    const Mat5 j = mf.jacobian(x);
    for (int c = 0; c < 5; ++c) {
      Vec5 a = x, b = x;
      const double h = 1e-6 * std::max(1.0, std::abs(x(c)));
      a(c) += h;
      b(c) -= h;
      const Vec5 col = (mf.rhs(a) - mf.rhs(b)) / (2 * h);
      CHECK((col - j.col(c)).norm() < 1e-6 * std::max(1.0, j.norm()));
    }
  }
}

TEST_CASE("energy and spin length are conserved") {
  const MeanField mf{kParams};
  const PhasePoint x0 = off_critical();
  std::vector<double> times;
  for (int i = 0; i <= 100; ++i) times.push_back(0.1 * i);
  const auto traj = integrate(x0, mf, times);
  const double e0 = mf.energy(x0), s0 = x0.spin_norm2();
  for (const auto& x : traj) {
    CHECK(std::abs(mf.energy(x) - e0) < 1e-7 * std::abs(e0));
    CHECK(std::abs(x.spin_norm2() - s0) < 1e-7 * s0);
  }
}

TEST_CASE("rescaled flow is the bare flow in scaled coordinates") {
  const MeanField bare{kParams, PhaseSign::Heisenberg, Scaling::Bare};
  const MeanField scaled{kParams, PhaseSign::Heisenberg, Scaling::Rescaled};
  const PhasePoint x0 = off_critical();
  const std::vector<double> times{0.0, 2.0};
  const auto a = integrate(x0, bare, times);
  const auto b = integrate(x0, scaled, times);
  CHECK((a.back().vec() - b.back().vec()).norm() < 1e-6 * x0.vec().norm());
}

TEST_CASE("critical-point exponent is the top eigenvalue of the linearization") {
  const MeanField mf{kParams};
  const Vec5 xc = critical_point(20).vec();
  Mat5 j;
  for (int c = 0; c < 5; ++c) {
    Vec5 a = xc, b = xc;
    a(c) += 1e-6;
    b(c) -= 1e-6;
    j.col(c) = (mf.rhs(a) - mf.rhs(b)) / 2e-6;
  }
  const Eigen::VectorXcd ev = Eigen::EigenSolver<Mat5>(j).eigenvalues();
  double top = -1e300;
  for (const auto& z : ev) top = std::max(top, z.real());
  CHECK(critical_point_exponent(kParams) == doctest::Approx(top).epsilon(1e-6));
  CHECK(critical_point_exponent(kParams) == doctest::Approx(4.073).epsilon(1e-3));

  // the tangent flow at the fixed point recovers the same number
  const LyapunovResult ly = lyapunov_max(critical_point(20), mf, {.t_end = 20.0});
  CHECK(ly.lambda == doctest::Approx(top).epsilon(0.02));
}

TEST_CASE("regular motion in the normal phase has a small exponent") {
  const ModelParams p = reference_params(20, 4.0, 1);
  const MeanField mf{p};
  PhasePoint x = classical_image(20, BlochAxis::x(), -1);
  x.sz = 1.0;
  x.sx = -std::sqrt(100.0 - 1.0);
  const LyapunovResult ly = lyapunov_max(x, mf, {.t_end = 100.0});
  CHECK(ly.lambda < 0.3);
}

TEST_CASE("classical image of the critical state is the fixed point itself") {
  const PhasePoint x = classical_image(1000, BlochAxis::x(), -1);
  const PhasePoint c = critical_point(1000);
  CHECK(x.vec() == c.vec());
}
