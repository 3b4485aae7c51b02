#include "dicke/propagate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

#include "dicke/linalg.hpp"

namespace dicke {

namespace {

/// Real orthogonal T with T^T S_x T = diag(m): columns are |m_x> in the S_z basis.
Eigen::MatrixXd x_basis(int n_spins) {
  const Eigen::MatrixXd sx = spin::sx(n_spins);
  const Eigen::MatrixXd target = spin::m_values(n_spins).asDiagonal();
  for (double beta : {M_PI / 2.0, -M_PI / 2.0}) {
    Eigen::MatrixXd t = spin::wigner_d(n_spins, beta);
    if ((t.transpose() * sx * t - target).cwiseAbs().maxCoeff() < 1e-10) return t;
  }
  throw ContractViolation("failed to construct the S_x eigenbasis");
}

void sign_fix(Eigen::MatrixXd& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index imax = 0;
    vectors.col(c).cwiseAbs().maxCoeff(&imax);
    if (vectors(imax, c) < 0.0) vectors.col(c) *= -1.0;
  }
}

constexpr std::size_t kChunk = 48;

}  // namespace

Operator parity_operator(const ModelParams& p) {
  p.validate();
  const Eigen::MatrixXd t = x_basis(p.n_spins);
  Eigen::VectorXd signs(p.spin_dim());
  for (int j = 0; j < p.spin_dim(); ++j) signs(j) = (j % 2 == 0) ? 1.0 : -1.0;
  const Eigen::MatrixXd spin_part = t * signs.asDiagonal() * t.transpose();
  Eigen::MatrixXd fock_part = Eigen::MatrixXd::Zero(p.fock_dim(), p.fock_dim());
  for (int n = 0; n <= p.n_max; ++n) fock_part(n, n) = (n % 2 == 0) ? 1.0 : -1.0;
  // product of the two embeddings
  SparseOp s = embed_spin(p, spin_part.cast<cplx>());
  SparseOp f = embed_fock(p, fock_part.cast<cplx>());
  SparseOp prod = f * s;
  prod.prune(cplx(0.0), 1e-14);
  return {OperatorTag::Identity, prod};
}

// ---- EigenSystem -----------------------------------------------------------

EigenSystem::EigenSystem(ModelParams params, Eigen::MatrixXd spin_transform,
                         std::vector<Block> blocks)
    : params_(std::move(params)),
      spin_transform_(std::move(spin_transform)),
      blocks_(std::move(blocks)) {
  std::vector<std::tuple<double, int, Eigen::Index>> all;
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    for (Eigen::Index c = 0; c < blocks_[b].values.size(); ++c)
      all.emplace_back(blocks_[b].values(c), static_cast<int>(b), c);
  std::sort(all.begin(), all.end());
  if (static_cast<Eigen::Index>(all.size()) != params_.dim())
    throw ContractViolation("eigensystem blocks do not cover the Hilbert space");
  energies_.resize(static_cast<Eigen::Index>(all.size()));
  order_.resize(all.size());
  global_of_.resize(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    global_of_[b].resize(static_cast<std::size_t>(blocks_[b].values.size()));
  for (std::size_t k = 0; k < all.size(); ++k) {
    const auto& [e, b, c] = all[k];
    energies_(static_cast<Eigen::Index>(k)) = e;
    order_[k] = {b, c};
    global_of_[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)] =
        static_cast<Eigen::Index>(k);
  }
}

Eigen::MatrixXcd EigenSystem::to_working(const StateVector& psi) const {
  if (psi.n_spins() != params_.n_spins || psi.n_max() != params_.n_max)
    throw ParameterError("state does not live on this eigensystem's space");
  return spin_transform_.transpose() * psi.as_matrix();
}

StateVector EigenSystem::from_working(const Eigen::MatrixXcd& w, std::string recipe) const {
  Eigen::VectorXcd amp(params_.dim());
  Eigen::Map<Eigen::MatrixXcd>(amp.data(), params_.spin_dim(), params_.fock_dim()) =
      spin_transform_ * w;
  return {params_.n_spins, params_.n_max, std::move(amp), std::move(recipe)};
}

Eigen::VectorXd EigenSystem::eigenvector(Eigen::Index k) const {
  const auto [b, c] = order_.at(static_cast<std::size_t>(k));
  const Block& blk = blocks_[static_cast<std::size_t>(b)];
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(params_.spin_dim(), params_.fock_dim());
  for (std::size_t i = 0; i < blk.basis.size(); ++i)
    w.data()[blk.basis[i]] = blk.vectors(static_cast<Eigen::Index>(i), c);
  const Eigen::MatrixXd z = spin_transform_ * w;
  return Eigen::Map<const Eigen::VectorXd>(z.data(), z.size());
}

Eigen::MatrixXd EigenSystem::dense_vectors() const {
  Eigen::MatrixXd v(dim(), dim());
  for (Eigen::Index k = 0; k < dim(); ++k) v.col(k) = eigenvector(k);
  return v;
}

Eigen::VectorXcd EigenSystem::to_eigenbasis(const StateVector& psi) const {
  const Eigen::MatrixXcd w = to_working(psi);
  Eigen::VectorXcd c(dim());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block& blk = blocks_[b];
    Eigen::VectorXcd g(static_cast<Eigen::Index>(blk.basis.size()));
    for (std::size_t i = 0; i < blk.basis.size(); ++i) g(static_cast<Eigen::Index>(i)) = w.data()[blk.basis[i]];
    const Eigen::VectorXcd cb = linalg::real_transpose_times_complex(blk.vectors, g);
    for (Eigen::Index i = 0; i < cb.size(); ++i) c(global_of_[b][static_cast<std::size_t>(i)]) = cb(i);
  }
  return c;
}

StateVector EigenSystem::from_eigenbasis(const Eigen::VectorXcd& c, std::string recipe) const {
  if (c.size() != dim()) throw ParameterError("coefficient vector has wrong length");
  Eigen::MatrixXcd w = Eigen::MatrixXcd::Zero(params_.spin_dim(), params_.fock_dim());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block& blk = blocks_[b];
    Eigen::VectorXcd cb(blk.values.size());
    for (Eigen::Index i = 0; i < cb.size(); ++i) cb(i) = c(global_of_[b][static_cast<std::size_t>(i)]);
    const Eigen::VectorXcd g = linalg::real_times_complex(blk.vectors, cb);
    for (std::size_t i = 0; i < blk.basis.size(); ++i) w.data()[blk.basis[i]] = g(static_cast<Eigen::Index>(i));
  }
  return from_working(w, std::move(recipe));
}

std::vector<StateVector> EigenSystem::evolve_coefficients(const Eigen::VectorXcd& c,
                                                          std::span<const double> times,
                                                          double sign) const {
  std::vector<StateVector> out;
  out.reserve(times.size());
  for (std::size_t t0 = 0; t0 < times.size(); t0 += kChunk) {
    const std::size_t nt = std::min(kChunk, times.size() - t0);
    std::vector<Eigen::MatrixXcd> work(nt, Eigen::MatrixXcd::Zero(params_.spin_dim(), params_.fock_dim()));
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const Block& blk = blocks_[b];
      const Eigen::Index nb = blk.values.size();
      Eigen::MatrixXcd z(nb, static_cast<Eigen::Index>(nt));
      for (std::size_t it = 0; it < nt; ++it) {
        const double t = times[t0 + it];
        for (Eigen::Index i = 0; i < nb; ++i)
          z(i, static_cast<Eigen::Index>(it)) =
              c(global_of_[b][static_cast<std::size_t>(i)]) * std::polar(1.0, -sign * blk.values(i) * t);
      }
      const Eigen::MatrixXcd y = linalg::real_times_complex(blk.vectors, z);
      for (std::size_t it = 0; it < nt; ++it)
        for (std::size_t i = 0; i < blk.basis.size(); ++i)
          work[it].data()[blk.basis[i]] = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(it));
    }
    for (std::size_t it = 0; it < nt; ++it) out.push_back(from_working(work[it], {}));
  }
  return out;
}

StateVector EigenSystem::evolve(const StateVector& psi, double t) const {
  const double ts[] = {std::abs(t)};
  StateVector out = evolve_coefficients(to_eigenbasis(psi), ts, t < 0 ? -1.0 : 1.0).front();
  return {out.n_spins(), out.n_max(), std::move(out.amplitudes()), psi.recipe()};
}

std::vector<StateVector> EigenSystem::evolve_many(const StateVector& psi,
                                                  std::span<const double> times) const {
  return evolve_coefficients(to_eigenbasis(psi), times, 1.0);
}

double EigenSystem::orthogonality_defect() const {
  double worst = 0.0;
  for (const Block& blk : blocks_) {
    const Eigen::MatrixXd g = blk.vectors.transpose() * blk.vectors;
    worst = std::max(worst, (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff());
  }
  return worst;
}

double EigenSystem::reconstruction_residual() const {
  const Eigen::MatrixXd h = Eigen::MatrixXd(hamiltonian_real(params_));
  const Eigen::MatrixXd v = dense_vectors();
  const Eigen::MatrixXd r = v * energies_.asDiagonal() * v.transpose();
  return (r - h).norm() / std::max(h.norm(), 1e-300);
}

EigenSystem diagonalize(const ModelParams& p) {
  p.validate();
  const int N = p.n_spins;
  const int ds = p.spin_dim();
  const Eigen::MatrixXd t = x_basis(N);
  Eigen::MatrixXd zx = t.transpose() * spin::sz(N) * t;
  zx = zx.unaryExpr([](double v) { return std::abs(v) < 1e-12 ? 0.0 : v; });
  const Eigen::VectorXd m = spin::m_values(N);
  const double coupling = 2.0 * p.omega_g() / std::sqrt(static_cast<double>(N));

  std::vector<EigenSystem::Block> blocks(2);
  std::vector<Eigen::Index> local(static_cast<std::size_t>(p.dim()), -1);
  for (int n = 0; n <= p.n_max; ++n)
    for (int j = 0; j < ds; ++j) {
      auto& blk = blocks[static_cast<std::size_t>((n + j) % 2)];
      const Eigen::Index w = static_cast<Eigen::Index>(n) * ds + j;
      local[static_cast<std::size_t>(w)] = static_cast<Eigen::Index>(blk.basis.size());
      blk.basis.push_back(w);
    }
  for (auto& blk : blocks) {
    const auto nb = static_cast<Eigen::Index>(blk.basis.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(nb, nb);
    for (Eigen::Index i = 0; i < nb; ++i) {
      const Eigen::Index w = blk.basis[static_cast<std::size_t>(i)];
      const int n = static_cast<int>(w / ds);
      const int j = static_cast<int>(w % ds);
      h(i, i) = p.omega_delta() * n + p.omega_b() * m(j);
      if (n + 1 > p.n_max) continue;
      for (int jp = 0; jp < ds; ++jp) {
        if (zx(jp, j) == 0.0) continue;
        const Eigen::Index w2 = static_cast<Eigen::Index>(n + 1) * ds + jp;
        const Eigen::Index i2 = local[static_cast<std::size_t>(w2)];
        const double v = coupling * std::sqrt(n + 1.0) * zx(jp, j);
        h(i2, i) = v;
        h(i, i2) = v;
      }
    }
    linalg::SymmetricEigen es = linalg::eigh(std::move(h));
    sign_fix(es.vectors);
    blk.values = std::move(es.values);
    blk.vectors = std::move(es.vectors);
  }
  return {p, t, std::move(blocks)};
}

EigenSystem diagonalize(const ModelParams& p, const Operator& h) {
  p.validate();
  if (h.matrix.rows() != p.dim() || h.matrix.cols() != p.dim())
    throw ParameterError("operator dimension does not match the model");
  const Eigen::MatrixXcd dense = h.dense();
  if (linalg::hermiticity_defect(dense) > 1e-12)
    throw ContractViolation("diagonalize: operator is not Hermitian");
  if (dense.imag().cwiseAbs().maxCoeff() > 1e-14)
    throw ParameterError("diagonalize: complex Hermitian operators are not supported");
  linalg::SymmetricEigen es = linalg::eigh(Eigen::MatrixXd(dense.real()));
  sign_fix(es.vectors);
  EigenSystem::Block blk;
  blk.basis.resize(static_cast<std::size_t>(p.dim()));
  std::iota(blk.basis.begin(), blk.basis.end(), Eigen::Index{0});
  blk.values = std::move(es.values);
  blk.vectors = std::move(es.vectors);
  std::vector<EigenSystem::Block> blocks;
  blocks.push_back(std::move(blk));
  return {p, Eigen::MatrixXd::Identity(p.spin_dim(), p.spin_dim()), std::move(blocks)};
}

// ---- Chebyshev -------------------------------------------------------------

ChebyshevPropagator::ChebyshevPropagator(const ModelParams& p, double tolerance)
    : params_(p), h_(hamiltonian_real(p)), tolerance_(tolerance) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index r = 0; r < h_.outerSize(); ++r) {
    double diag = 0.0, radius = 0.0;
    for (RealSparseOp::InnerIterator it(h_, r); it; ++it) {
      if (it.col() == r) diag = it.value();
      else radius += std::abs(it.value());
    }
    lo = std::min(lo, diag - radius);
    hi = std::max(hi, diag + radius);
  }
  center_ = 0.5 * (hi + lo);
  half_width_ = 0.5 * (hi - lo) * (1.0 + 1e-9) + 1e-12;
}

void ChebyshevPropagator::apply_scaled(const Eigen::VectorXcd& in, Eigen::VectorXcd& out) const {
  const double inv = 1.0 / half_width_;
  const int* outer = h_.outerIndexPtr();
  const int* inner = h_.innerIndexPtr();
  const double* val = h_.valuePtr();
  for (Eigen::Index r = 0; r < h_.rows(); ++r) {
    cplx acc = -center_ * in(r);
    for (int k = outer[r]; k < outer[r + 1]; ++k) acc += val[k] * in(inner[k]);
    out(r) = acc * inv;
  }
}

StateVector ChebyshevPropagator::step(const StateVector& psi, double dt) const {
  if (dt == 0.0) return psi;
  // long intervals are split so the expansion order stays moderate
  constexpr double kMaxArg = 400.0;
  if (half_width_ * std::abs(dt) > kMaxArg) {
    const auto pieces = static_cast<int>(std::ceil(half_width_ * std::abs(dt) / kMaxArg));
    StateVector cur = psi;
    for (int i = 0; i < pieces; ++i) cur = step(cur, dt / pieces);
    return cur;
  }
  const double x = half_width_ * std::abs(dt);
  const double sgn = dt < 0 ? -1.0 : 1.0;
  // e^{-i H dt} = e^{-i c dt} [J0(x) + 2 sum_k (-i sgn)^k J_k(x) T_k(H~)]
  Eigen::VectorXcd prev = psi.amplitudes();
  Eigen::VectorXcd cur(prev.size());
  apply_scaled(prev, cur);
  Eigen::VectorXcd acc = std::cyl_bessel_j(0.0, x) * prev;
  const cplx mi(0.0, -sgn);
  cplx phase = mi;
  acc += 2.0 * std::cyl_bessel_j(1.0, x) * phase * cur;
  Eigen::VectorXcd next(prev.size());
  int small_run = 0;
  for (int k = 2;; ++k) {
    apply_scaled(cur, next);
    next = 2.0 * next - prev;
    phase *= mi;
    const double jk = std::cyl_bessel_j(static_cast<double>(k), x);
    acc += 2.0 * jk * phase * next;
    std::swap(prev, cur);
    std::swap(cur, next);
    if (k > x && std::abs(jk) < tolerance_) {
      if (++small_run >= 2) break;
    } else {
      small_run = 0;
    }
    if (k > 100000) throw std::runtime_error("Chebyshev expansion failed to converge");
  }
  acc *= std::polar(1.0, -center_ * dt);
  return {psi.n_spins(), psi.n_max(), std::move(acc), psi.recipe()};
}

void ChebyshevPropagator::evolve_visit(
    const StateVector& psi, std::span<const double> times,
    const std::function<void(std::size_t, const StateVector&)>& visit) const {
  StateVector cur = psi;
  double t_prev = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t_prev) throw ParameterError("Chebyshev times must be ascending and >= 0");
    cur = step(cur, times[i] - t_prev);
    t_prev = times[i];
    visit(i, cur);
  }
}

std::vector<StateVector> ChebyshevPropagator::evolve_many(const StateVector& psi,
                                                          std::span<const double> times) const {
  std::vector<StateVector> out;
  out.reserve(times.size());
  evolve_visit(psi, times, [&out](std::size_t, const StateVector& s) { out.push_back(s); });
  return out;
}

// ---- generators ------------------------------------------------------------

std::string Generator::tag() const {
  switch (kind) {
    case Kind::X: return "X";
    case Kind::N: return "n";
    case Kind::Sx: return "Sx";
    case Kind::Sy: return "Sy";
    case Kind::Sz: return "Sz";
    case Kind::Sr: {
      std::ostringstream os;
      os << "Sr(" << axis.theta << "," << axis.phi << ")";
      return os.str();
    }
  }
  return "?";
}

Generator Generator::parse(const std::string& tag) {
  if (tag == "X") return quadrature();
  if (tag == "n") return number();
  if (tag == "Sx") return spin_x();
  if (tag == "Sy") return spin_y();
  if (tag == "Sz") return spin_z();
  double th = 0.0, ph = 0.0;
  if (std::sscanf(tag.c_str(), "Sr(%lf,%lf)", &th, &ph) == 2) return spin_axis({th, ph});
  throw ParameterError("unknown generator '" + tag + "'");
}

FactorExponential::FactorExponential(const ModelParams& p, Generator g)
    : gen_(g), params_(p) {
  p.validate();
  using K = Generator::Kind;
  switch (g.kind) {
    case K::X: {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fock::quadrature(p.n_max));
      values_ = es.eigenvalues();
      vectors_ = es.eigenvectors().cast<cplx>();
      break;
    }
    case K::N:
      values_ = fock::number_values(p.n_max);
      vectors_ = Eigen::MatrixXcd::Identity(p.fock_dim(), p.fock_dim());
      break;
    default: {
      BlochAxis axis = g.axis;
      if (g.kind == K::Sx) axis = BlochAxis::x();
      if (g.kind == K::Sy) axis = BlochAxis::y();
      if (g.kind == K::Sz) axis = BlochAxis::z();
      values_ = spin::m_values(p.n_spins);
      vectors_ = spin::rotation(p.n_spins, axis.theta, axis.phi);
      break;
    }
  }
}

Eigen::MatrixXcd FactorExponential::rotated_amplitudes(const StateVector& psi) const {
  if (gen_.acts_on_spin()) return vectors_.adjoint() * psi.as_matrix();
  return psi.as_matrix() * vectors_.conjugate();
}

Eigen::VectorXd FactorExponential::distribution(const StateVector& psi) const {
  const Eigen::MatrixXd p2 = rotated_amplitudes(psi).cwiseAbs2();
  if (gen_.acts_on_spin()) return p2.rowwise().sum();
  return p2.colwise().sum().transpose();
}

StateVector FactorExponential::apply(const StateVector& psi, double angle) const {
  Eigen::VectorXcd ph(values_.size());
  for (Eigen::Index i = 0; i < ph.size(); ++i) ph(i) = std::polar(1.0, angle * values_(i));
  Eigen::VectorXcd amp(psi.dim());
  Eigen::Map<Eigen::MatrixXcd> out(amp.data(), psi.n_spins() + 1, psi.n_max() + 1);
  if (gen_.acts_on_spin())
    out = vectors_ * (ph.asDiagonal() * (vectors_.adjoint() * psi.as_matrix()));
  else
    out = ((psi.as_matrix() * vectors_.conjugate()) * ph.asDiagonal()) * vectors_.transpose();
  return {psi.n_spins(), psi.n_max(), std::move(amp), psi.recipe()};
}

StateVector FactorExponential::apply_generator(const StateVector& psi) const {
  Eigen::VectorXcd amp(psi.dim());
  Eigen::Map<Eigen::MatrixXcd> out(amp.data(), psi.n_spins() + 1, psi.n_max() + 1);
  const Eigen::VectorXcd g = values_.cast<cplx>();
  if (gen_.acts_on_spin())
    out = vectors_ * (g.asDiagonal() * (vectors_.adjoint() * psi.as_matrix()));
  else
    out = ((psi.as_matrix() * vectors_.conjugate()) * g.asDiagonal()) * vectors_.transpose();
  return {psi.n_spins(), psi.n_max(), std::move(amp), psi.recipe()};
}

// ---- FOTOCs ----------------------------------------------------------------

std::vector<double> TimeGrid::times() const {
  if (points < 2) throw ParameterError("time grid needs at least two points");
  std::vector<double> t(points);
  for (std::size_t i = 0; i < points; ++i)
    t[i] = t_end * static_cast<double>(i) / static_cast<double>(points - 1);
  return t;
}

double default_dphi(int n_spins) { return 1e-2 / n_spins; }

std::vector<double> FotocSeries::scaled() const {
  std::vector<double> out(one_minus_f.size());
  const double d2 = dphi * dphi;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d2 > 0 ? one_minus_f[i] / d2 : 0.0;
  return out;
}

std::pair<double, double> fidelity_at(const FactorExponential& w, const StateVector& psi,
                                      double angle) {
  Eigen::VectorXd p = w.distribution(psi);
  p /= p.sum();
  const Eigen::VectorXd& g = w.spectrum();
  cplx z = 0.0;
  double complement = 0.0;
  // 1 - F = sum_{a,b} P_a P_b (1 - cos(angle (g_a - g_b)))
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (p(a) == 0.0) continue;
    z += p(a) * std::polar(1.0, angle * g(a));
    for (Eigen::Index b = a + 1; b < p.size(); ++b) {
      const double s = std::sin(0.5 * angle * (g(a) - g(b)));
      complement += 4.0 * p(a) * p(b) * s * s;
    }
  }
  return {std::norm(z), complement};
}

namespace {

void check_fotoc_inputs(double dphi, const FactorExponential& w) {
  if (!std::isfinite(dphi)) throw ParameterError("dphi must be finite");
  if (std::abs(dphi) * w.spectral_radius() >= M_PI / 2.0)
    throw ContractViolation("perturbation dphi * |G| too large for a small-rotation FOTOC");
}

double variance_of(const Eigen::VectorXd& p, const Eigen::VectorXd& g, double* mean = nullptr) {
  const double m1 = p.dot(g);
  const double m2 = p.dot(g.cwiseAbs2());
  if (mean) *mean = m1;
  return std::max(m2 - m1 * m1, 0.0);
}

}  // namespace

FotocSeries fotoc(const StateVector& psi0, const EigenSystem& es, Generator g, double dphi,
                  std::span<const double> times, double tail_threshold) {
  const FactorExponential w(es.params(), g);
  check_fotoc_inputs(dphi, w);
  FotocSeries s;
  s.times.assign(times.begin(), times.end());
  s.dphi = dphi;
  s.generator = g;
  const Eigen::VectorXcd c0 = es.to_eigenbasis(psi0);
  const Eigen::VectorXd& e = es.energies();
  const std::vector<StateVector> forward = es.evolve_many(psi0, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const StateVector& psi_t = forward[i];
    s.max_tail = std::max(s.max_tail, psi_t.fock_tail(2));
    s.variance.push_back(variance_of(w.distribution(psi_t), w.spectrum()));
    if (dphi == 0.0) {
      s.fidelity.push_back(1.0);
      s.one_minus_f.push_back(0.0);
      continue;
    }
    // rotate, evolve backward by t, overlap with the initial state
    const Eigen::VectorXcd cr = es.to_eigenbasis(w.apply(psi_t, dphi));
    cplx overlap = 0.0;
    for (Eigen::Index k = 0; k < cr.size(); ++k)
      overlap += std::conj(c0(k)) * std::polar(1.0, e(k) * times[i]) * cr(k);
    const double f = std::norm(overlap);
    s.fidelity.push_back(f);
    s.one_minus_f.push_back(1.0 - f);
  }
  s.valid = s.max_tail < tail_threshold;
  return s;
}

FotocSeries fotoc(const StateVector& psi0, const ChebyshevPropagator& prop, Generator g,
                  double dphi, std::span<const double> times, double tail_threshold) {
  const FactorExponential w(prop.params(), g);
  check_fotoc_inputs(dphi, w);
  FotocSeries s;
  s.times.assign(times.begin(), times.end());
  s.dphi = dphi;
  s.generator = g;
  s.fidelity.resize(times.size());
  s.one_minus_f.resize(times.size());
  s.variance.resize(times.size());
  prop.evolve_visit(psi0, times, [&](std::size_t i, const StateVector& psi_t) {
    s.max_tail = std::max(s.max_tail, psi_t.fock_tail(2));
    s.variance[i] = variance_of(w.distribution(psi_t), w.spectrum());
    const auto [f, c] = fidelity_at(w, psi_t, dphi);
    s.fidelity[i] = f;
    s.one_minus_f[i] = c;
  });
  s.valid = s.max_tail < tail_threshold;
  return s;
}

VarianceSeries variance_series(const StateVector& psi0, const EigenSystem& es, Generator g,
                               std::span<const double> times) {
  const FactorExponential w(es.params(), g);
  VarianceSeries out;
  out.times.assign(times.begin(), times.end());
  out.generator = g;
  for (const StateVector& psi : es.evolve_many(psi0, times)) {
    double mean = 0.0;
    const double var = variance_of(w.distribution(psi), w.spectrum(), &mean);
    out.mean.push_back(mean);
    out.variance.push_back(var);
    out.qfi.push_back(4.0 * var);
  }
  return out;
}

GrowthFit extract_lambda_q(const FotocSeries& s, const FitWindowPolicy& policy) {
  return fit_exponential_growth(s.times, s.one_minus_f, policy);
}

FirstMaximum scrambling_time(const FotocSeries& s, const FitWindowPolicy& policy) {
  return first_maximum(s.times, s.one_minus_f, policy);
}

// ---- cutoff selection ------------------------------------------------------

namespace {

struct CutoffProbe {
  double max_tail = 0.0;
  std::vector<double> mean_n;
};

CutoffProbe probe_cutoff(const ModelParams& p, const StateRecipe& recipe,
                         std::span<const double> times) {
  const ChebyshevPropagator prop(p);
  CutoffProbe out;
  out.mean_n.resize(times.size());
  const Eigen::VectorXd nvals = fock::number_values(p.n_max);
  prop.evolve_visit(recipe(p), times, [&](std::size_t i, const StateVector& s) {
    out.max_tail = std::max(out.max_tail, s.fock_tail(2));
    out.mean_n[i] = s.fock_distribution().dot(nvals);
  });
  return out;
}

double mean_n_shift(const CutoffProbe& a, const CutoffProbe& ref) {
  double scale = 1.0, worst = 0.0;
  for (std::size_t i = 0; i < ref.mean_n.size(); ++i) {
    scale = std::max(scale, std::abs(ref.mean_n[i]));
    worst = std::max(worst, std::abs(a.mean_n[i] - ref.mean_n[i]));
  }
  return worst / scale;
}

}  // namespace

CutoffChoice select_cutoff(const ModelParams& p, const StateRecipe& recipe,
                           std::span<const double> times, const CutoffPolicy& policy) {
  CutoffChoice out;
  int c = policy.start;
  CutoffProbe cur = probe_cutoff(p.with_cutoff(c), recipe, times);
  out.probed.push_back(c);
  while (true) {
    if (2 * c > policy.limit)
      throw CutoffError("no Fock cutoff up to " + std::to_string(policy.limit) +
                        " satisfies the tail criterion");
    CutoffProbe next = probe_cutoff(p.with_cutoff(2 * c), recipe, times);
    out.probed.push_back(2 * c);
    if (cur.max_tail < policy.tail_threshold &&
        mean_n_shift(cur, next) < policy.mean_n_tolerance) {
      // c passes against its doubled reference; bisect down to the smallest
      // passing cutoff in (c/2, c].
      int lo = c / 2, hi = c;
      CutoffProbe best = cur;
      while (hi - lo > policy.granularity) {
        const int mid = lo + (hi - lo) / 2;
        CutoffProbe trial = probe_cutoff(p.with_cutoff(mid), recipe, times);
        out.probed.push_back(mid);
        if (trial.max_tail < policy.tail_threshold &&
            mean_n_shift(trial, next) < policy.mean_n_tolerance) {
          hi = mid;
          best = std::move(trial);
        } else {
          lo = mid;
        }
      }
      out.n_max = hi;
      out.max_tail = best.max_tail;
      out.mean_n_shift = mean_n_shift(best, next);
      return out;
    }
    c *= 2;
    cur = std::move(next);
  }
}

}  // namespace dicke
