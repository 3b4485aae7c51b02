#include "dicke/model.hpp"

#include <bit>
#include <cmath>
#include <sstream>
#include <vector>

namespace dicke {

void ModelParams::validate() const {
  if (n_spins < 1) throw ParameterError("n_spins must be >= 1");
  if (n_max < 1) throw ParameterError("n_max must be >= 1");
  if (!(g_khz >= 0.0)) throw ParameterError("g must be >= 0");
  if (!(delta_khz >= 0.0)) throw ParameterError("delta must be >= 0");
  if (!(b_khz >= 0.0)) throw ParameterError("b_field must be >= 0");
}

double ModelParams::critical_field_khz() const {
  if (!(delta_khz > 0.0))
    throw ParameterError("critical field needs delta > 0");
  return 4.0 * g_khz * g_khz / delta_khz;
}

ModelParams ModelParams::with_field_ratio(double ratio) const {
  ModelParams out = *this;
  out.b_khz = ratio * critical_field_khz();
  return out;
}

ModelParams ModelParams::with_cutoff(int new_n_max) const {
  ModelParams out = *this;
  out.n_max = new_n_max;
  return out;
}

ModelParams ModelParams::enhanced(double factor) const {
  ModelParams out = *this;
  out.g_khz *= factor;
  out.delta_khz *= factor;
  out.b_khz *= factor;
  return out;
}

std::uint64_t ModelParams::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(n_spins));
  mix(std::bit_cast<std::uint64_t>(g_khz));
  mix(std::bit_cast<std::uint64_t>(delta_khz));
  mix(std::bit_cast<std::uint64_t>(b_khz));
  mix(static_cast<std::uint64_t>(n_max));
  return h;
}

std::string ModelParams::describe() const {
  std::ostringstream os;
  os << "N=" << n_spins << " g=" << g_khz << "kHz delta=" << delta_khz
     << "kHz B=" << b_khz << "kHz n_max=" << n_max;
  return os.str();
}

ModelParams reference_params(int n_spins, double field_ratio, int n_max) {
  ModelParams p;
  p.n_spins = n_spins;
  p.g_khz = 0.66;
  p.delta_khz = 0.5;
  p.n_max = n_max;
  p.b_khz = field_ratio * p.critical_field_khz();
  p.validate();
  return p;
}

Eigen::Index flatten(const ModelParams& p, BasisIndex idx) {
  if (idx.n < 0 || idx.n > p.n_max || idx.j < 0 || idx.j > p.n_spins)
    throw std::out_of_range("basis index out of range");
  return static_cast<Eigen::Index>(idx.n) * p.spin_dim() + idx.j;
}

BasisIndex unflatten(const ModelParams& p, Eigen::Index k) {
  if (k < 0 || k >= p.dim()) throw std::out_of_range("flat index out of range");
  return {static_cast<int>(k / p.spin_dim()), static_cast<int>(k % p.spin_dim())};
}

// ---- spin factor -----------------------------------------------------------

namespace spin {

Eigen::VectorXd m_values(int n_spins) {
  Eigen::VectorXd m(n_spins + 1);
  for (int j = 0; j <= n_spins; ++j) m(j) = j - n_spins / 2.0;
  return m;
}

Eigen::MatrixXd sz(int n_spins) { return m_values(n_spins).asDiagonal(); }

Eigen::MatrixXd raising(int n_spins) {
  const double s = n_spins / 2.0;
  Eigen::MatrixXd sp = Eigen::MatrixXd::Zero(n_spins + 1, n_spins + 1);
  // <m+1| S_+ |m> = sqrt(s(s+1) - m(m+1))
  for (int j = 0; j < n_spins; ++j) {
    const double m = j - s;
    sp(j + 1, j) = std::sqrt(s * (s + 1.0) - m * (m + 1.0));
  }
  return sp;
}

Eigen::MatrixXd sx(int n_spins) {
  const Eigen::MatrixXd sp = raising(n_spins);
  return 0.5 * (sp + sp.transpose());
}

Eigen::MatrixXcd sy(int n_spins) {
  const Eigen::MatrixXd sp = raising(n_spins);
  const Eigen::MatrixXd diff = sp - sp.transpose();
  return cplx(0.0, -0.5) * diff.cast<cplx>();
}

Eigen::MatrixXd wigner_d(int n_spins, double beta) {
  // exp(-i beta S_y) = R_z exp(-i beta S_x) R_z^dagger with R_z = exp(-i pi/2 S_z).
  // S_x is real tridiagonal with exactly known eigenvalues m, so its
  // eigenvectors give an accurate spectral exponential.
  const int d = n_spins + 1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sx(n_spins));
  const Eigen::MatrixXd& u = es.eigenvectors();
  const Eigen::VectorXd m = m_values(n_spins);
  Eigen::VectorXcd phases(d);
  for (int k = 0; k < d; ++k) phases(k) = std::polar(1.0, -beta * m(k));
  const Eigen::MatrixXcd ex =
      u.cast<cplx>() * phases.asDiagonal() * u.transpose().cast<cplx>();
  Eigen::MatrixXd out(d, d);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      const cplx za = std::polar(1.0, -M_PI / 2.0 * m(a));
      const cplx zb = std::polar(1.0, M_PI / 2.0 * m(b));
      out(a, b) = (za * ex(a, b) * zb).real();
    }
  }
  return out;
}

Eigen::MatrixXcd rotation(int n_spins, double theta, double phi) {
  const Eigen::MatrixXd d = wigner_d(n_spins, theta);
  const Eigen::VectorXd m = m_values(n_spins);
  Eigen::MatrixXcd r(d.rows(), d.cols());
  for (int a = 0; a < d.rows(); ++a) {
    const cplx za = std::polar(1.0, -phi * m(a));
    for (int b = 0; b < d.cols(); ++b) r(a, b) = za * d(a, b);
  }
  return r;
}

Eigen::MatrixXcd axis_operator(int n_spins, double theta, double phi) {
  return (std::sin(theta) * std::cos(phi)) * sx(n_spins).cast<cplx>() +
         (std::sin(theta) * std::sin(phi)) * sy(n_spins) +
         std::cos(theta) * sz(n_spins).cast<cplx>();
}

}  // namespace spin

// ---- Fock factor -----------------------------------------------------------

namespace fock {

Eigen::MatrixXd annihilation(int n_max) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_max + 1, n_max + 1);
  for (int n = 1; n <= n_max; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

Eigen::VectorXd number_values(int n_max) {
  return Eigen::VectorXd::LinSpaced(n_max + 1, 0.0, n_max);
}

Eigen::MatrixXd quadrature(int n_max) {
  const Eigen::MatrixXd a = annihilation(n_max);
  return 0.5 * (a + a.transpose());
}

}  // namespace fock

// ---- full-space operators --------------------------------------------------

std::string to_string(OperatorTag tag) {
  switch (tag) {
    case OperatorTag::Sx: return "Sx";
    case OperatorTag::Sy: return "Sy";
    case OperatorTag::Sz: return "Sz";
    case OperatorTag::A: return "a";
    case OperatorTag::Adag: return "adag";
    case OperatorTag::N: return "n";
    case OperatorTag::X: return "X";
    case OperatorTag::Identity: return "I";
    case OperatorTag::Hamiltonian: return "H";
    case OperatorTag::Sr: return "Sr";
  }
  return "?";
}

double Operator::hermiticity_defect() const {
  const SparseOp diff = matrix - SparseOp(matrix.adjoint());
  double worst = 0.0;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (SparseOp::InnerIterator it(diff, k); it; ++it)
      worst = std::max(worst, std::abs(it.value()));
  return worst;
}

SparseOp embed_spin(const ModelParams& p, const Eigen::MatrixXcd& s) {
  std::vector<Eigen::Triplet<cplx>> trip;
  const int ds = p.spin_dim();
  for (int n = 0; n <= p.n_max; ++n)
    for (int a = 0; a < ds; ++a)
      for (int b = 0; b < ds; ++b)
        if (s(a, b) != cplx(0.0))
          trip.emplace_back(n * ds + a, n * ds + b, s(a, b));
  SparseOp out(p.dim(), p.dim());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

SparseOp embed_fock(const ModelParams& p, const Eigen::MatrixXcd& f) {
  std::vector<Eigen::Triplet<cplx>> trip;
  const int ds = p.spin_dim();
  for (int n = 0; n <= p.n_max; ++n)
    for (int k = 0; k <= p.n_max; ++k)
      if (f(n, k) != cplx(0.0))
        for (int j = 0; j < ds; ++j) trip.emplace_back(n * ds + j, k * ds + j, f(n, k));
  SparseOp out(p.dim(), p.dim());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

OperatorSet build_operators(const ModelParams& p) {
  p.validate();
  const int N = p.n_spins;
  const Eigen::MatrixXcd a = fock::annihilation(p.n_max).cast<cplx>();
  OperatorSet ops;
  ops.sx = {OperatorTag::Sx, embed_spin(p, spin::sx(N).cast<cplx>())};
  ops.sy = {OperatorTag::Sy, embed_spin(p, spin::sy(N))};
  ops.sz = {OperatorTag::Sz, embed_spin(p, spin::sz(N).cast<cplx>())};
  ops.a = {OperatorTag::A, embed_fock(p, a)};
  ops.adag = {OperatorTag::Adag, embed_fock(p, a.adjoint())};
  ops.n = {OperatorTag::N,
           embed_fock(p, fock::number_values(p.n_max).asDiagonal().toDenseMatrix().cast<cplx>())};
  ops.x = {OperatorTag::X, embed_fock(p, fock::quadrature(p.n_max).cast<cplx>())};
  SparseOp id(p.dim(), p.dim());
  id.setIdentity();
  ops.identity = {OperatorTag::Identity, id};
  return ops;
}

RealSparseOp hamiltonian_real(const ModelParams& p) {
  p.validate();
  const int N = p.n_spins;
  const int ds = p.spin_dim();
  const double coupling = 2.0 * p.omega_g() / std::sqrt(static_cast<double>(N));
  const Eigen::VectorXd m = spin::m_values(N);
  const Eigen::MatrixXd sxm = spin::sx(N);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(p.dim()) * 5);
  for (int n = 0; n <= p.n_max; ++n) {
    for (int j = 0; j < ds; ++j) {
      const Eigen::Index k = static_cast<Eigen::Index>(n) * ds + j;
      trip.emplace_back(k, k, p.omega_delta() * n);
      if (j + 1 < ds) {
        const double v = p.omega_b() * sxm(j + 1, j);
        trip.emplace_back(k, k + 1, v);
        trip.emplace_back(k + 1, k, v);
      }
      if (n + 1 <= p.n_max && m(j) != 0.0) {
        // (a + a^dagger) couples n <-> n+1 with amplitude sqrt(n+1)
        const double v = coupling * std::sqrt(n + 1.0) * m(j);
        trip.emplace_back(k, k + ds, v);
        trip.emplace_back(k + ds, k, v);
      }
    }
  }
  RealSparseOp h(p.dim(), p.dim());
  h.setFromTriplets(trip.begin(), trip.end());
  return h;
}

Operator build_hamiltonian(const ModelParams& p) {
  return {OperatorTag::Hamiltonian, hamiltonian_real(p).cast<cplx>()};
}

Operator rotation_generator(const ModelParams& p, double theta, double phi) {
  p.validate();
  return {OperatorTag::Sr, embed_spin(p, spin::axis_operator(p.n_spins, theta, phi))};
}

Operator boson_phase_generator(const ModelParams& p) {
  return build_operators(p).n;
}

// ---- states ----------------------------------------------------------------

BlochAxis BlochAxis::from_vector(const Eigen::Vector3d& v) {
  const double r = v.norm();
  if (!(r > 0.0)) throw ParameterError("axis vector must be non-zero");
  return {std::acos(std::clamp(v.z() / r, -1.0, 1.0)), std::atan2(v.y(), v.x())};
}

Eigen::Vector3d BlochAxis::vector() const {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
          std::cos(theta)};
}

StateVector::StateVector(int n_spins, int n_max, Eigen::VectorXcd amplitudes,
                         std::string recipe)
    : n_spins_(n_spins), n_max_(n_max), amp_(std::move(amplitudes)),
      recipe_(std::move(recipe)) {
  if (amp_.size() != static_cast<Eigen::Index>(n_spins + 1) * (n_max + 1))
    throw ParameterError("state vector length does not match (N+1)(n_max+1)");
}

cplx StateVector::expectation(const SparseOp& op) const {
  return amp_.dot(op * amp_);
}

double StateVector::fock_tail(int rows) const {
  const auto mat = as_matrix();
  double tail = 0.0;
  for (int n = std::max(0, n_max_ + 1 - rows); n <= n_max_; ++n)
    tail += mat.col(n).squaredNorm();
  return tail;
}

Eigen::VectorXd StateVector::fock_distribution() const {
  return as_matrix().cwiseAbs2().colwise().sum().transpose();
}

Eigen::VectorXd StateVector::spin_distribution() const {
  return as_matrix().cwiseAbs2().rowwise().sum();
}

Eigen::VectorXcd coherent_spin_amplitudes(int n_spins, BlochAxis axis, int sign) {
  if (sign != 1 && sign != -1) throw ParameterError("sign must be +1 or -1");
  const Eigen::MatrixXcd r = spin::rotation(n_spins, axis.theta, axis.phi);
  return r.col(sign > 0 ? n_spins : 0);
}

StateVector product_state(const ModelParams& p, const Eigen::VectorXcd& spin_amp,
                          const Eigen::VectorXcd& fock_amp, std::string recipe) {
  p.validate();
  if (spin_amp.size() != p.spin_dim() || fock_amp.size() != p.fock_dim())
    throw ParameterError("factor amplitudes have the wrong dimension");
  Eigen::VectorXcd amp(p.dim());
  Eigen::Map<Eigen::MatrixXcd>(amp.data(), p.spin_dim(), p.fock_dim()) =
      spin_amp * fock_amp.transpose();
  return {p.n_spins, p.n_max, std::move(amp), std::move(recipe)};
}

StateVector coherent_spin_state(const ModelParams& p, BlochAxis axis, int sign, int n0) {
  p.validate();
  if (n0 < 0 || n0 > p.n_max)
    throw CutoffError("Fock occupation " + std::to_string(n0) + " exceeds n_max");
  Eigen::VectorXcd f = Eigen::VectorXcd::Zero(p.fock_dim());
  f(n0) = 1.0;
  std::ostringstream recipe;
  recipe << "coherent_spin theta=" << axis.theta << " phi=" << axis.phi
         << " sign=" << sign << " fock=" << n0;
  return product_state(p, coherent_spin_amplitudes(p.n_spins, axis, sign), f,
                       recipe.str());
}

StateVector critical_state(const ModelParams& p) {
  return coherent_spin_state(p, BlochAxis::x(), -1, 0);
}

Eigen::MatrixXcd density_matrix(const StateVector& psi) {
  return psi.amplitudes() * psi.amplitudes().adjoint();
}

}  // namespace dicke
