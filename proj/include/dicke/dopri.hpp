#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dicke {

class StiffnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dormand-Prince 5(4) stepper with FSAL and a persistent step size, for
/// small fixed-size autonomous systems.
template <int Dim, class Rhs>
class Dopri5 {
 public:
  using Vec = Eigen::Matrix<double, Dim, 1>;

  Dopri5(Rhs f, Vec scale, double rtol, double atol, double h0, double hmin,
         std::size_t max_steps)
      : f_(std::move(f)), scale_(std::move(scale)), rtol_(rtol), atol_(atol), h_(h0),
        hmin_(hmin), max_steps_(max_steps) {}

  /// Advances y from t0 to t1 (t1 > t0), landing exactly on t1.
  void advance(Vec& y, double t0, double t1) {
    if (!(t1 > t0)) return;
    double t = t0;
    Vec k1 = f_(y);
    while (t < t1) {
      if (++steps_ > max_steps_) throw std::runtime_error("integrator step budget exhausted");
      double h = std::min(h_, t1 - t);
      const bool clipped = h < h_;
      const Vec k2 = f_(y + h * (a21 * k1));
      const Vec k3 = f_(y + h * (a31 * k1 + a32 * k2));
      const Vec k4 = f_(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
      const Vec k5 = f_(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      const Vec k6 = f_(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      const Vec yn = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      const Vec k7 = f_(yn);
      const Vec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      double norm = 0.0;
      for (int i = 0; i < y.size(); ++i) {
        const double sc = atol_ * scale_(i) + rtol_ * std::max(std::abs(y(i)), std::abs(yn(i)));
        norm = std::max(norm, std::abs(err(i)) / sc);
      }
      if (!std::isfinite(norm)) throw std::runtime_error("integrator produced a non-finite state");
      if (norm <= 1.0) {
        t = (h == t1 - t) ? t1 : t + h;
        y = yn;
        k1 = k7;
        const double grow = norm > 0.0 ? std::min(5.0, 0.9 * std::pow(norm, -0.2)) : 5.0;
        // keep the unclipped step so that output times do not shrink it
        if (!clipped) h_ = h * grow;
        else h_ = std::max(h_, h * grow);
      } else {
        h_ = h * std::max(0.2, 0.9 * std::pow(norm, -0.2));
        if (h_ < hmin_) throw StiffnessError("step size underflow (stiff flow?)");
      }
    }
  }

  std::size_t steps() const { return steps_; }

 private:
  static constexpr double a21 = 1.0 / 5.0;
  static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
  static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
  static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                          a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
  static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                          a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
  static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                          b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
  static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                          e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

  Rhs f_;
  Vec scale_;
  double rtol_, atol_;
  double h_, hmin_;
  std::size_t max_steps_;
  std::size_t steps_ = 0;
};

template <int Dim, class Rhs>
Dopri5<Dim, Rhs> make_dopri(Rhs f, Eigen::Matrix<double, Dim, 1> scale, double rtol, double atol,
                            double h0, double hmin, std::size_t max_steps) {
  return Dopri5<Dim, Rhs>(std::move(f), std::move(scale), rtol, atol, h0, hmin, max_steps);
}

}  // namespace dicke
