#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dicke/classical.hpp"
#include "dicke/growth_fit.hpp"

namespace dicke {

/// Coherent spin state |(sign N/2)_axis> times a boson coherent state |alpha>.
struct WignerRecipe {
  BlochAxis axis = BlochAxis::x();
  int sign = -1;
  cplx alpha = 0.0;

  static WignerRecipe critical() { return {}; }
  /// "critical" or "coherent theta=<t> phi=<p> sign=<s> [alpha_r=<a>] [alpha_i=<b>]".
  static WignerRecipe parse(const std::string& text);
  std::string tag() const;
};

struct WignerEnsemble {
  int n_spins = 0;
  std::uint64_t seed = 0;
  WignerRecipe recipe;
  std::vector<PhasePoint> points;

  std::size_t size() const { return points.size(); }
};

/// Draws trajectory i from its own generator seeded by (seed, i), so the
/// ensemble does not depend on how the work is split.
PhasePoint sample_trajectory(int n_spins, const WignerRecipe& recipe, std::uint64_t seed,
                             std::uint64_t index);
WignerEnsemble sample_initial(int n_spins, const WignerRecipe& recipe, std::size_t trajectories,
                              std::uint64_t seed, int threads = 1);

enum class TwaObservable { X, Sy, N };
inline constexpr std::array<TwaObservable, 3> kTwaObservables{TwaObservable::X, TwaObservable::Sy,
                                                             TwaObservable::N};
std::string observable_tag(TwaObservable o);

/// Ensemble moments of one observable on the time grid.
struct MomentTrack {
  TwaObservable observable = TwaObservable::X;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> stderr_mean;
  std::vector<double> stderr_variance;  // block jackknife
};

struct MomentSeries {
  std::vector<double> times;
  std::size_t trajectories = 0;
  std::size_t blocks = 0;
  double max_spin_drift = 0.0;    // relative change of |S|^2
  double max_energy_drift = 0.0;  // relative to N omega_B / 2
  std::vector<MomentTrack> tracks;

  const MomentTrack& track(TwaObservable o) const;
};

struct EnsembleOptions {
  int threads = 1;
  std::size_t blocks = 64;            // jackknife blocks (fewer if R is small)
  Scaling scaling = Scaling::Bare;     // Rescaled is chosen automatically for N > 1000
  bool auto_rescale = true;
  double conservation_tolerance = 1e-6;
  IntegratorOptions integrator{1e-9, 1e-11};
};

/// Integrates every trajectory and accumulates mean and variance of X = alpha_R,
/// S_y and n = |alpha|^2 - 1/2 (Weyl symbol). Any trajectory that breaks spin
/// length or energy conservation beyond the tolerance invalidates the run.
MomentSeries evolve_ensemble(const WignerEnsemble& ensemble, const ModelParams& p,
                             std::span<const double> times, const EnsembleOptions& opt = {});

struct TwaExponent {
  TwaObservable observable = TwaObservable::X;
  GrowthFit fit;
};

/// Growth rate of var(G) per observable, windows chosen on the ensemble series.
std::vector<TwaExponent> extract_exponents(const MomentSeries& series,
                                           const FitWindowPolicy& policy = {});

}  // namespace dicke
