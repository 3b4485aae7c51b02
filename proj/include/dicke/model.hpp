#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace dicke {

using cplx = std::complex<double>;
using SparseOp = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using RealSparseOp = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Invalid physical or numerical parameters.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A state or operator would need Fock levels beyond the configured cutoff.
class CutoffError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A numerical precondition (Hermiticity, normalization, ...) was violated.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Physical and truncation parameters of the spin-boson system.
///
/// Frequencies are given in kHz (cycles per ms). The angular accessors return
/// rad/ms, the unit every dynamical routine works in (hbar = 1, time in ms).
struct ModelParams {
  int n_spins = 1;
  double g_khz = 0.0;
  double delta_khz = 0.0;
  double b_khz = 0.0;
  int n_max = 1;  // largest Fock index kept (inclusive)

  void validate() const;

  double omega_g() const { return kTwoPi * g_khz; }
  double omega_delta() const { return kTwoPi * delta_khz; }
  double omega_b() const { return kTwoPi * b_khz; }

  /// B_c = 4 g^2 / delta in kHz. Throws if delta == 0.
  double critical_field_khz() const;
  double field_ratio() const { return b_khz / critical_field_khz(); }

  /// Excited-state critical energy -omega_B N / 2 (rad/ms).
  double esqpt_energy() const { return -omega_b() * n_spins / 2.0; }

  int spin_dim() const { return n_spins + 1; }
  int fock_dim() const { return n_max + 1; }
  Eigen::Index dim() const {
    return static_cast<Eigen::Index>(spin_dim()) * fock_dim();
  }

  /// Same couplings with B chosen so that B / B_c == ratio.
  ModelParams with_field_ratio(double ratio) const;
  ModelParams with_cutoff(int new_n_max) const;
  /// All coherent couplings (g, delta, B) multiplied by factor.
  ModelParams enhanced(double factor) const;

  std::uint64_t hash() const;
  std::string describe() const;
};

/// Coupling strengths used throughout the figures: g/2pi = 0.66 kHz,
/// delta/2pi = 0.5 kHz, B chosen relative to B_c.
ModelParams reference_params(int n_spins, double field_ratio, int n_max);

/// (Fock index, spin ladder index) of a flattened basis state.
///
/// The spin ladder index j = m + N/2 runs over 0..N; the flattened index is
/// k = n (N+1) + j, so spin is the fast index and a state vector reshaped to
/// (N+1) x (n_max+1) column-major has one column per Fock level.
struct BasisIndex {
  int n = 0;
  int j = 0;
  double m(int n_spins) const { return j - n_spins / 2.0; }
};

Eigen::Index flatten(const ModelParams& p, BasisIndex idx);
BasisIndex unflatten(const ModelParams& p, Eigen::Index k);

// ---- single-factor matrices ------------------------------------------------

namespace spin {
/// Collective spin matrices for spin N/2 in the S_z basis, ordered m = -N/2..N/2.
Eigen::MatrixXd sz(int n_spins);
Eigen::MatrixXd sx(int n_spins);
Eigen::MatrixXcd sy(int n_spins);
/// S_+ (real, superdiagonal in our ordering).
Eigen::MatrixXd raising(int n_spins);
/// m values -N/2..N/2.
Eigen::VectorXd m_values(int n_spins);

/// Wigner small-d matrix d(beta) = exp(-i beta S_y), real orthogonal.
Eigen::MatrixXd wigner_d(int n_spins, double beta);
/// Rotation R(theta, phi) = exp(-i phi S_z) exp(-i theta S_y). Column j is the
/// eigenvector of S_r with eigenvalue m_j, S_r = e_r(theta, phi) . S.
Eigen::MatrixXcd rotation(int n_spins, double theta, double phi);
/// e_r(theta, phi) . S as a dense matrix.
Eigen::MatrixXcd axis_operator(int n_spins, double theta, double phi);
}  // namespace spin

namespace fock {
Eigen::MatrixXd annihilation(int n_max);
Eigen::VectorXd number_values(int n_max);
/// X = (a + a^dagger) / 2 on the truncated space.
Eigen::MatrixXd quadrature(int n_max);
}  // namespace fock

// ---- full-space operators --------------------------------------------------

enum class OperatorTag { Sx, Sy, Sz, A, Adag, N, X, Identity, Hamiltonian, Sr };

std::string to_string(OperatorTag tag);

struct Operator {
  OperatorTag tag = OperatorTag::Identity;
  SparseOp matrix;

  Eigen::MatrixXcd dense() const { return Eigen::MatrixXcd(matrix); }
  /// max |O - O^dagger| over all entries.
  double hermiticity_defect() const;
};

struct OperatorSet {
  Operator sx, sy, sz, a, adag, n, x, identity;
};

/// All elementary operators in the flattened |n> (x) |m> basis.
OperatorSet build_operators(const ModelParams& p);

/// Embeds a spin-factor matrix as 1 (x) S.
SparseOp embed_spin(const ModelParams& p, const Eigen::MatrixXcd& s);
/// Embeds a Fock-factor matrix as F (x) 1.
SparseOp embed_fock(const ModelParams& p, const Eigen::MatrixXcd& f);

/// H = (2 w_g / sqrt N)(a + a^dagger) S_z + w_delta a^dagger a + w_B S_x.
Operator build_hamiltonian(const ModelParams& p);
/// Real-valued sparse copy of H (H is real in the S_z product basis).
RealSparseOp hamiltonian_real(const ModelParams& p);

/// S_r = sin(theta)cos(phi) S_x + sin(theta)sin(phi) S_y + cos(theta) S_z.
Operator rotation_generator(const ModelParams& p, double theta, double phi);
/// Boson phase generator n = a^dagger a.
Operator boson_phase_generator(const ModelParams& p);

// ---- states ----------------------------------------------------------------

/// Unit vector on the Bloch sphere expressed by polar/azimuthal angles.
struct BlochAxis {
  double theta = 0.0;
  double phi = 0.0;

  static BlochAxis x() { return {M_PI / 2.0, 0.0}; }
  static BlochAxis y() { return {M_PI / 2.0, M_PI / 2.0}; }
  static BlochAxis z() { return {0.0, 0.0}; }
  static BlochAxis from_vector(const Eigen::Vector3d& v);
  Eigen::Vector3d vector() const;
};

class StateVector {
 public:
  StateVector() = default;
  StateVector(int n_spins, int n_max, Eigen::VectorXcd amplitudes,
              std::string recipe = {});

  int n_spins() const { return n_spins_; }
  int n_max() const { return n_max_; }
  Eigen::Index dim() const { return amp_.size(); }

  const Eigen::VectorXcd& amplitudes() const { return amp_; }
  Eigen::VectorXcd& amplitudes() { return amp_; }
  const std::string& recipe() const { return recipe_; }

  /// Amplitudes viewed as a (N+1) x (n_max+1) matrix; column n holds the
  /// spin amplitudes attached to Fock level n.
  Eigen::Map<const Eigen::MatrixXcd> as_matrix() const {
    return {amp_.data(), n_spins_ + 1, n_max_ + 1};
  }
  Eigen::Map<Eigen::MatrixXcd> as_matrix() {
    return {amp_.data(), n_spins_ + 1, n_max_ + 1};
  }

  double norm() const { return amp_.norm(); }
  cplx expectation(const SparseOp& op) const;
  /// Population carried by the top `rows` Fock levels.
  double fock_tail(int rows = 2) const;
  /// Marginal distributions over n and over the S_z ladder.
  Eigen::VectorXd fock_distribution() const;
  Eigen::VectorXd spin_distribution() const;

 private:
  int n_spins_ = 0;
  int n_max_ = 0;
  Eigen::VectorXcd amp_;
  std::string recipe_;
};

/// Extremal eigenstate of S_r with eigenvalue sign * N/2, as spin amplitudes.
Eigen::VectorXcd coherent_spin_amplitudes(int n_spins, BlochAxis axis, int sign);

/// |(sign N/2)_r> (x) |n0>.
StateVector coherent_spin_state(const ModelParams& p, BlochAxis axis, int sign,
                                int n0 = 0);

/// |(-N/2)_x> (x) |0>, the state sitting at the excited-state critical energy.
StateVector critical_state(const ModelParams& p);

/// Product of arbitrary spin amplitudes and Fock amplitudes.
StateVector product_state(const ModelParams& p, const Eigen::VectorXcd& spin,
                          const Eigen::VectorXcd& fock, std::string recipe);

/// Pure-state density matrix |psi><psi| (dense; small systems only).
Eigen::MatrixXcd density_matrix(const StateVector& psi);

}  // namespace dicke
