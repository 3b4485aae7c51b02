#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dicke/propagate.hpp"

namespace dicke {

// ---- level statistics ------------------------------------------------------

enum class EnergyWindow { Below, Above };  // relative to E_c
std::string window_tag(EnergyWindow w);

struct LevelStatsOptions {
  bool parity_resolved = true;
  double edge_trim = 0.05;       // fraction dropped at each end of a window
  int unfold_degree = 7;
  std::size_t min_levels = 50;
  int histogram_bins = 20;
  double histogram_max = 4.0;
  /// A level counts as converged in the Fock cutoff when its weight on the
  /// top `tail_rows` boson levels stays below `tail_threshold`. Unconverged
  /// levels are dropped individually: the truncated quadrature produces edge
  /// states scattered through the bulk of the spectrum.
  int tail_rows = 8;
  double tail_threshold = 1e-6;
  /// Optional upper energy bound for the Above window.
  std::optional<double> energy_max;
};

struct SpacingStats {
  EnergyWindow window = EnergyWindow::Below;
  int sector = -1;                 // parity block index, -1 when pooled
  std::size_t levels = 0;          // after trimming
  std::vector<double> spacings;    // unfolded
  std::vector<double> bin_edges;
  std::vector<double> histogram;   // density, integrates to 1 over the range
  double mean_spacing = 0.0;
  double mean_r = 0.0;
  double ks_wigner = 0.0;
  double ks_poisson = 0.0;
  bool sufficient = false;         // at least min_levels levels

  bool closer_to_wigner() const { return ks_wigner < ks_poisson; }
};

/// Polynomial fit of the counting function; returns unfolded levels.
std::vector<double> unfold(std::span<const double> levels, int degree);
/// Mean of min(s_i, s_{i+1}) / max(s_i, s_{i+1}) over consecutive raw spacings.
double mean_gap_ratio(std::span<const double> levels);
double wigner_cdf(double s);
double poisson_cdf(double s);
/// sup |F_emp - F| for the empirical distribution of `samples`.
double ks_distance(std::span<const double> samples, double (*cdf)(double));

/// Spacing statistics for a sorted spectrum slice.
SpacingStats spacing_stats(std::span<const double> levels, EnergyWindow w, int sector,
                           const LevelStatsOptions& opt = {});

/// Statistics per window and parity sector, plus pooled entries (sector -1)
/// combining the unfolded spacings of all sectors in a window.
std::vector<SpacingStats> level_statistics(const EigenSystem& es, double e_c,
                                           const LevelStatsOptions& opt = {});

/// Converged energies per parity sector (or one merged list when unresolved).
std::vector<std::vector<double>> converged_levels(const EigenSystem& es,
                                                  const LevelStatsOptions& opt = {});

// ---- ensembles -------------------------------------------------------------

enum class EnsembleKind { Thermal, Diagonal };

struct EnsembleSpec {
  EnsembleKind kind = EnsembleKind::Diagonal;
  Eigen::VectorXd weights;       // aligned with es.energies()
  double beta = 0.0;             // thermal only, in ms
  bool negative_temperature = false;
  double target_energy = 0.0;    // <psi0|H|psi0>
  double energy = 0.0;           // ensemble energy
  double matching_residual = 0.0;  // |energy - target| / max(|target|, 1)
  std::string reference;         // recipe of psi0
};

/// Canonical ensemble whose energy matches psi0. Targets above the
/// infinite-temperature mean give beta < 0, flagged in the result.
EnsembleSpec thermal_ensemble(const EigenSystem& es, const StateVector& psi0,
                              double tolerance = 1e-12);
EnsembleSpec thermal_ensemble(const EigenSystem& es, double target_energy,
                              double tolerance = 1e-12);

/// Weights |<E_k|psi0>|^2.
EnsembleSpec diagonal_ensemble(const EigenSystem& es, const StateVector& psi0);

/// sum_k w_k Tr_ph |E_k><E_k| in the S_z basis.
Eigen::MatrixXd ensemble_spin_matrix(const EigenSystem& es, const Eigen::VectorXd& weights);

struct Distributions {
  Eigen::VectorXd p_mz;  // index j = m_z + N/2
  Eigen::VectorXd p_n;   // index n
};

Distributions ensemble_distributions(const EigenSystem& es, const EnsembleSpec& ens);

/// Average of P(M_z) and P(n) of the evolved state over `times`.
Distributions time_averaged_distributions(const StateVector& psi0, const EigenSystem& es,
                                          std::span<const double> times);
Distributions time_averaged_distributions(const StateVector& psi0,
                                          const ChebyshevPropagator& prop,
                                          std::span<const double> times);

/// 0.5 sum |p - q|.
double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// S_2 of the first L_A spins for L_A = 1..N in the ensemble state.
std::vector<double> ensemble_subsystem_renyi(const EigenSystem& es, const EnsembleSpec& ens);

}  // namespace dicke
