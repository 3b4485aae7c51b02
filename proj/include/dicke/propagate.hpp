#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dicke/growth_fit.hpp"
#include "dicke/model.hpp"

namespace dicke {

/// Parity exp(i pi (n + S_x + N/2)), the Z2 symmetry of the Hamiltonian.
Operator parity_operator(const ModelParams& p);

/// Spectral decomposition H = V diag(E) V^T.
///
/// For the model Hamiltonian the decomposition is parity resolved: H is
/// block diagonal in the |n> (x) |m_x> basis, and each block is diagonalized
/// separately. Eigenvectors are real; each is signed so that its
/// largest-magnitude component in the working basis is positive.
class EigenSystem {
 public:
  struct Block {
    std::vector<Eigen::Index> basis;  // working-basis indices in this block
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
  };

  EigenSystem(ModelParams params, Eigen::MatrixXd spin_transform,
              std::vector<Block> blocks);

  const ModelParams& params() const { return params_; }
  std::uint64_t provenance() const { return params_.hash(); }
  Eigen::Index dim() const { return energies_.size(); }
  const Eigen::VectorXd& energies() const { return energies_; }
  std::size_t block_count() const { return blocks_.size(); }
  const Block& block(std::size_t b) const { return blocks_[b]; }
  /// Block holding eigenstate k (in ascending global order).
  int block_of(Eigen::Index k) const { return order_[k].first; }
  /// Global index of column `col` of block b.
  Eigen::Index global_index(std::size_t b, Eigen::Index col) const {
    return global_of_[b][static_cast<std::size_t>(col)];
  }
  /// Columns: the working spin basis expressed in the S_z basis.
  const Eigen::MatrixXd& spin_transform() const { return spin_transform_; }

  /// Eigenvector k in the flattened S_z product basis.
  Eigen::VectorXd eigenvector(Eigen::Index k) const;
  /// All eigenvectors as a dense D x D matrix (small systems only).
  Eigen::MatrixXd dense_vectors() const;

  /// c_k = <E_k|psi>, ordered like energies().
  Eigen::VectorXcd to_eigenbasis(const StateVector& psi) const;
  StateVector from_eigenbasis(const Eigen::VectorXcd& c, std::string recipe = {}) const;

  /// exp(-i H t) psi. Negative t evolves backward.
  StateVector evolve(const StateVector& psi, double t) const;
  std::vector<StateVector> evolve_many(const StateVector& psi,
                                       std::span<const double> times) const;

  /// ||V diag(E) V^T - H||_F / ||H||_F, dense check for small systems.
  double reconstruction_residual() const;
  /// max |V^T V - I|.
  double orthogonality_defect() const;

 private:
  Eigen::MatrixXcd to_working(const StateVector& psi) const;
  StateVector from_working(const Eigen::MatrixXcd& w, std::string recipe) const;
  std::vector<StateVector> evolve_coefficients(const Eigen::VectorXcd& c,
                                               std::span<const double> times,
                                               double sign) const;

  ModelParams params_;
  Eigen::MatrixXd spin_transform_;  // columns: working spin basis in S_z basis
  std::vector<Block> blocks_;
  Eigen::VectorXd energies_;
  std::vector<std::pair<int, Eigen::Index>> order_;             // global -> (block, col)
  std::vector<std::vector<Eigen::Index>> global_of_;            // (block, col) -> global
};

/// Parity-resolved diagonalization of the model Hamiltonian.
EigenSystem diagonalize(const ModelParams& p);
/// Generic route for an explicit Hermitian operator on the model space.
/// Throws ContractViolation if the operator is not Hermitian and
/// ParameterError if it has complex entries (only real H is supported here).
EigenSystem diagonalize(const ModelParams& p, const Operator& h);

/// Time stepping with a Chebyshev expansion of exp(-i H dt) on the sparse
/// Hamiltonian. Used where a dense spectrum is out of reach.
class ChebyshevPropagator {
 public:
  explicit ChebyshevPropagator(const ModelParams& p, double tolerance = 1e-15);

  const ModelParams& params() const { return params_; }
  StateVector step(const StateVector& psi, double dt) const;
  /// States at each requested time (ascending, >= 0), starting from t = 0.
  std::vector<StateVector> evolve_many(const StateVector& psi,
                                       std::span<const double> times) const;
  /// Streaming variant: calls visit(i, state) for each time.
  void evolve_visit(const StateVector& psi, std::span<const double> times,
                    const std::function<void(std::size_t, const StateVector&)>& visit) const;

 private:
  void apply_scaled(const Eigen::VectorXcd& in, Eigen::VectorXcd& out) const;

  ModelParams params_;
  RealSparseOp h_;
  double center_ = 0.0;
  double half_width_ = 1.0;
  double tolerance_;
};

// ---- perturbation generators -----------------------------------------------

/// Hermitian generator G of the echo perturbation exp(i dphi G).
struct Generator {
  enum class Kind { X, N, Sx, Sy, Sz, Sr };
  Kind kind = Kind::X;
  BlochAxis axis{};  // only for Sr

  static Generator quadrature() { return {Kind::X, {}}; }
  static Generator number() { return {Kind::N, {}}; }
  static Generator spin_x() { return {Kind::Sx, {}}; }
  static Generator spin_y() { return {Kind::Sy, {}}; }
  static Generator spin_z() { return {Kind::Sz, {}}; }
  static Generator spin_axis(BlochAxis a) { return {Kind::Sr, a}; }

  bool acts_on_spin() const { return kind != Kind::X && kind != Kind::N; }
  std::string tag() const;
  static Generator parse(const std::string& tag);
};

/// exp(i angle G) for a generator acting on one tensor factor, applied via
/// the factor's eigendecomposition.
class FactorExponential {
 public:
  FactorExponential(const ModelParams& p, Generator g);

  const Generator& generator() const { return gen_; }
  const Eigen::VectorXd& spectrum() const { return values_; }
  double spectral_radius() const { return values_.cwiseAbs().maxCoeff(); }
  /// Columns: eigenvectors of the factor matrix, aligned with spectrum().
  const Eigen::MatrixXcd& eigenvectors() const { return vectors_; }

  StateVector apply(const StateVector& psi, double angle) const;
  /// G psi.
  StateVector apply_generator(const StateVector& psi) const;
  /// Distribution of G eigenvalues in psi (aligned with spectrum()).
  Eigen::VectorXd distribution(const StateVector& psi) const;
  /// Amplitudes in the G eigenbasis of the active factor, shaped like
  /// StateVector::as_matrix().
  Eigen::MatrixXcd rotated_amplitudes(const StateVector& psi) const;

 private:
  Generator gen_;
  ModelParams params_;
  Eigen::VectorXd values_;
  Eigen::MatrixXcd vectors_;
};

// ---- FOTOCs ----------------------------------------------------------------

struct TimeGrid {
  double t_end = 12.0;
  std::size_t points = 600;
  std::vector<double> times() const;
};

/// Default perturbation strength 1e-2 / N.
double default_dphi(int n_spins);

struct FotocSeries {
  std::vector<double> times;
  double dphi = 0.0;
  Generator generator;
  std::vector<double> fidelity;      // F(t)
  std::vector<double> one_minus_f;   // 1 - F(t), evaluated without cancellation
  std::vector<double> variance;      // var[G(t)]
  double max_tail = 0.0;             // top-two Fock rows, max over t
  bool valid = true;                 // tail stayed below threshold

  /// (1 - F) / dphi^2.
  std::vector<double> scaled() const;
};

/// Echo FOTOC F(t) = |<psi0| U^dagger(t) exp(i dphi G) U(t) |psi0>|^2, evaluated
/// literally as forward evolution, rotation, backward evolution, overlap.
FotocSeries fotoc(const StateVector& psi0, const EigenSystem& es, Generator g, double dphi,
                  std::span<const double> times, double tail_threshold = 1e-8);

/// Same quantity from the forward-evolved state alone,
/// F = |<psi(t)| exp(i dphi G) |psi(t)>|^2, driven by a Chebyshev propagator.
FotocSeries fotoc(const StateVector& psi0, const ChebyshevPropagator& prop, Generator g,
                  double dphi, std::span<const double> times,
                  double tail_threshold = 1e-8);

/// |<psi| exp(i angle G) |psi>|^2 and its complement 1 - F computed
/// cancellation-free from the G distribution.
std::pair<double, double> fidelity_at(const FactorExponential& w, const StateVector& psi,
                                      double angle);

struct VarianceSeries {
  std::vector<double> times;
  Generator generator;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> qfi;  // 4 var, the pure-state quantum Fisher information
};

VarianceSeries variance_series(const StateVector& psi0, const EigenSystem& es, Generator g,
                               std::span<const double> times);

/// lambda_Q from 1 - F on the policy window (rate in 1/ms with 95% CI).
GrowthFit extract_lambda_q(const FotocSeries& s, const FitWindowPolicy& policy = {});

/// t*: first local maximum of 1 - F after the growth window.
FirstMaximum scrambling_time(const FotocSeries& s, const FitWindowPolicy& policy = {});

// ---- Fock cutoff selection -------------------------------------------------

struct CutoffPolicy {
  int start = 32;
  int limit = 4096;
  int granularity = 8;
  double tail_threshold = 1e-8;
  double mean_n_tolerance = 1e-6;
};

struct CutoffChoice {
  int n_max = 0;
  double max_tail = 0.0;
  double mean_n_shift = 0.0;
  std::vector<int> probed;
};

using StateRecipe = std::function<StateVector(const ModelParams&)>;

/// Smallest cutoff whose evolved state keeps the top-two-row tail below the
/// threshold and whose <n>(t) matches the doubling reference to tolerance.
CutoffChoice select_cutoff(const ModelParams& p, const StateRecipe& recipe,
                           std::span<const double> times, const CutoffPolicy& policy = {});

}  // namespace dicke
