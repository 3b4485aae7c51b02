#pragma once

#include <string>
#include <vector>

#include "dicke/model.hpp"
#include "dicke/propagate.hpp"

namespace dicke {

/// Multiple-quantum intensities I_M, M = -m_max..m_max.
struct MqcSpectrum {
  std::string generator;
  int m_max = 0;
  std::vector<double> intensities;  // index M + m_max
  double time = 0.0;

  double at(int m) const;
  double total() const;
};

/// Thrown for generators whose spectrum is not integer spaced (X).
class UnsupportedGenerator : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

/// I_M from a density matrix on the model space, as the squared Frobenius
/// norm of each coherence block in the generator eigenbasis.
MqcSpectrum block_decompose(const Eigen::MatrixXcd& rho, const ModelParams& p, Generator g,
                            double time = 0.0);
/// Pure-state fast path: I_M = sum_g P(g) P(g - M).
MqcSpectrum block_decompose(const StateVector& psi, Generator g, double time = 0.0);

/// Largest coherence order resolved for g in psi. For the spin generators this
/// is N; for n it is the occupied Fock support (last level with P > 1e-12).
int mqc_order(const StateVector& psi, Generator g);

/// I_M from the discrete Fourier transform of the echo fidelity
/// F(phi_k) = |<psi0| U^dagger(t) exp(i phi_k G) U(t) |psi0>|^2 on `angles`
/// equally spaced phi_k in [0, 2 pi). Refuses grids with fewer than
/// 2 m_max + 1 points.
MqcSpectrum intensities_via_fourier(const StateVector& psi0, const EigenSystem& es, Generator g,
                                    double t, std::size_t angles);

/// Terms of Tr[rho_B^2] = I_0^A + I_0^B - D_diag + C_off for a pure state
/// whose amplitudes are arranged as W(a, b) with a, b the two parties in
/// their chosen bases.
struct BipartiteTerms {
  double i0_rows = 0.0;  // sum_a P(a)^2
  double i0_cols = 0.0;  // sum_b P(b)^2
  double d_diag = 0.0;   // sum |W_ab|^4
  double c_off = 0.0;    // coherence remainder, evaluated directly
  double purity = 0.0;   // ||W W^dagger||_F^2
};

BipartiteTerms bipartite_terms(const Eigen::MatrixXcd& w);

struct PurityDecomposition {
  double i0_spin = 0.0;
  double i0_boson = 0.0;
  double d_diag = 0.0;
  double c_off = 0.0;
  double purity_ph = 0.0;  // Tr[rho_ph^2] from the unrotated amplitudes
  BlochAxis axis;

  double residual() const { return i0_spin + i0_boson - d_diag + c_off - purity_ph; }
};

/// All four terms of the spin-phonon purity identity with S_r along `axis`.
/// Requires a normalized pure state.
PurityDecomposition purity_decomposition(const StateVector& psi, BlochAxis axis);

/// Reduced spin matrix rho_s = Tr_ph |psi><psi| in the S_z basis.
Eigen::MatrixXcd reduced_spin_matrix(const StateVector& psi);

/// -log of a purity; +inf for zero.
double renyi2(double purity);

struct RenyiEstimates {
  double s2 = 0.0;              // exact S_2(rho_ph)
  double sf_spin = 0.0;         // -log I_0^{S_r}
  double sf_spin_boson = 0.0;   // -log(I_0^{S_r} + I_0^{n})
  double i0_spin = 0.0;
  double i0_boson = 0.0;
  BlochAxis axis;
};

RenyiEstimates renyi_spin_phonon(const StateVector& psi, BlochAxis axis);

enum class AxisStrategy { MaxVariance, MinResidual };

struct AxisGrid {
  int theta_points = 24;
  int phi_points = 48;
};

/// Spin-rotation axis on the (theta, phi) grid. MaxVariance maximizes
/// var(S_r); MinResidual minimizes |S_F^{S_r,n} - S_2| and needs the exact
/// entropy, so it is meant for validation. Ties go to the first grid point.
BlochAxis optimize_axis(const StateVector& psi, AxisStrategy strategy = AxisStrategy::MaxVariance,
                        AxisGrid grid = {});

/// 3x3 covariance matrix of (S_x, S_y, S_z) in the spin reduced state.
Eigen::Matrix3d spin_covariance(const Eigen::MatrixXcd& rho_spin);

/// sqrt(C(L, jA) C(N-L, jB) / C(N, jA+jB)): overlap of |N/2, m> with
/// |L/2, mA> (x) |(N-L)/2, m - mA> for the fully symmetric coupling.
/// Rows jA = 0..L, columns jB = 0..N-L.
Eigen::MatrixXd symmetric_cg_table(int n_spins, int l_a);

/// rho_A on the first L_A spins from the (N+1)-dimensional spin reduced matrix.
Eigen::MatrixXcd partial_trace_spins(const Eigen::MatrixXcd& rho_spin, int n_spins, int l_a);
Eigen::MatrixXcd partial_trace_spins(const StateVector& psi, int l_a);

struct SubsystemEstimate {
  int l_a = 0;
  double s2 = 0.0;        // exact S_2(rho_A)
  double estimate = 0.0;  // -log(I_0^A + I_0^{A_c})
  BipartiteTerms terms;   // rows: m_A, columns: (m_B, n)
  BlochAxis axis;
};

/// Subsystem FOTOC estimator with a collective rotation along `axis` on
/// both A and its complement.
SubsystemEstimate subsystem_fotoc_renyi(const StateVector& psi, int l_a, BlochAxis axis);

}  // namespace dicke
