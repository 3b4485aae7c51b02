#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dicke/dopri.hpp"
#include "dicke/growth_fit.hpp"
#include "dicke/model.hpp"

namespace dicke {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

/// Mean-field coordinates, ordered (S_x, S_y, S_z, alpha_R, alpha_I).
struct PhasePoint {
  double sx = 0.0, sy = 0.0, sz = 0.0, ar = 0.0, ai = 0.0;

  Vec5 vec() const { return (Vec5() << sx, sy, sz, ar, ai).finished(); }
  static PhasePoint from(const Vec5& v) { return {v(0), v(1), v(2), v(3), v(4)}; }
  double spin_norm2() const { return sx * sx + sy * sy + sz * sz; }
  double boson_number() const { return ar * ar + ai * ai; }
};

/// Classical image of a coherent spin state (sign N/2 along axis) with a
/// coherent boson amplitude.
PhasePoint classical_image(int n_spins, BlochAxis axis, int sign, cplx alpha = 0.0);
/// (-N/2, 0, 0, 0, 0), the image of the critical state.
PhasePoint critical_point(int n_spins);

/// Sense of the boson phase rotation in the alpha rows (+1: Heisenberg
/// derivation from H; -1: alpha -> alpha*). Exponents do not depend on it.
enum class PhaseSign : int { Heisenberg = 1, Conjugate = -1 };

/// Bare variables (S, alpha) or rescaled ones (s = 2S/N, beta = alpha/sqrt N),
/// in which the flow no longer depends on N.
enum class Scaling { Bare, Rescaled };

struct MeanField {
  ModelParams params;
  PhaseSign sign = PhaseSign::Heisenberg;
  Scaling scaling = Scaling::Bare;

  Vec5 rhs(const Vec5& x) const;
  Mat5 jacobian(const Vec5& x) const;
  /// Mean-field energy in rad/ms (bare variables).
  double energy(const PhasePoint& x) const;

  Vec5 to_internal(const PhasePoint& x) const;
  PhasePoint from_internal(const Vec5& v) const;
};

struct IntegratorOptions {
  double rtol = 1e-10;
  double atol = 1e-12;  // relative to the state scale (N/2 bare, 1 rescaled)
  double initial_step = 1e-4;
  double min_step = 1e-14;
  std::size_t max_steps = 50'000'000;
};

/// Trajectory of the flow sampled on `times` (ascending, starting at or after 0).
std::vector<PhasePoint> integrate(const PhasePoint& x0, const MeanField& mf,
                                  std::span<const double> times, const IntegratorOptions& opt = {});

struct LyapunovOptions {
  double t_end = 200.0;
  double renorm_interval = 0.1;
  double drift_tolerance = 0.02;  // relative, over the final third
  double drift_floor = 1e-2;      // absolute (1/ms) for exponents near zero
  IntegratorOptions integrator{};
  Vec5 tangent = Vec5::Constant(1.0 / std::sqrt(5.0));
};

struct LyapunovResult {
  double lambda = 0.0;   // 1/ms
  double drift = 0.0;    // |lambda(T) - lambda(2T/3)|
  bool converged = false;
  std::vector<double> times;    // renormalization instants
  std::vector<double> running;  // running estimate at those instants
};

/// Maximal exponent from the tangent flow dv/dt = J(x) v with single-vector
/// renormalization.
LyapunovResult lyapunov_max(const PhasePoint& x0, const MeanField& mf,
                            const LyapunovOptions& opt = {});

/// Growing root of the linearization at the critical point, closed form.
double critical_point_exponent(const ModelParams& p);

enum class TwinObservable { BosonNumber, AlphaR };

struct TwinOptions {
  int cycles = 16;
  double t_end = 12.0;
  std::size_t points = 1201;
  double epsilon = 1e-9;  // separation relative to the state scale
  std::uint64_t seed = 1;
  FitWindowPolicy policy{};
  IntegratorOptions integrator{};
};

struct TwinResult {
  FitStatus status = FitStatus::NoExponentialWindow;
  double rate = 0.0;  // mean of per-cycle slopes
  double ci_low = 0.0, ci_high = 0.0;
  int fitted_cycles = 0;
  std::vector<double> rates;
  bool ok() const { return status == FitStatus::Ok; }
};

/// Separation exponent of an observable between twin trajectories started
/// epsilon apart along random directions. Each cycle re-seeds the twin from
/// x0 with a fresh direction; the exponent is the mean per-cycle slope.
TwinResult twin_exponent(const PhasePoint& x0, const MeanField& mf, TwinObservable obs,
                         const TwinOptions& opt = {});
/// lambda_c: twin exponent of n = alpha_R^2 + alpha_I^2.
TwinResult lambda_c_nonlinear(const PhasePoint& x0, const MeanField& mf,
                              const TwinOptions& opt = {});

struct ScanOptions {
  std::vector<double> field_ratios;  // B/B_c values
  int energy_bins = 20;
  double energy_min = -2.0;  // E/|E_c| range
  double energy_max = 2.0;
  int samples = 200;          // per field value
  double r_max = 1.5;         // alpha disk radius in units of sqrt(N)
  std::uint64_t seed = 1;
  int threads = 1;
  LyapunovOptions lyapunov{50.0};
};

struct ScanCell {
  double sqrt_bc_over_b = 0.0;
  double field_ratio = 0.0;
  double energy_center = 0.0;  // E/|E_c|
  double lambda_max = 0.0;
  int samples = 0;             // 0: no data
};

/// Largest lambda_L per (field, energy bin) over random product-state images.
std::vector<ScanCell> phase_diagram_scan(const ModelParams& base, const ScanOptions& opt);

}  // namespace dicke
