#include "dicke/mqc.hpp"

#include <cmath>
#include <limits>

namespace dicke {

double MqcSpectrum::at(int m) const {
  if (m < -m_max || m > m_max) return 0.0;
  return intensities[static_cast<std::size_t>(m + m_max)];
}

double MqcSpectrum::total() const {
  double s = 0.0;
  for (double v : intensities) s += v;
  return s;
}

namespace {

constexpr double kSupportFloor = 1e-12;

void require_integer_spectrum(const FactorExponential& w) {
  const Eigen::VectorXd& g = w.spectrum();
  for (Eigen::Index i = 1; i < g.size(); ++i) {
    const double d = g(i) - g(0);
    if (std::abs(d - std::round(d)) > 1e-9)
      throw UnsupportedGenerator("generator " + w.generator().tag() +
                                 " does not have an integer-spaced spectrum");
  }
}

int last_supported(const Eigen::VectorXd& p) {
  int last = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > kSupportFloor) last = static_cast<int>(i);
  return last;
}

/// Rotates the row index of a block of model-space columns into the
/// generator eigenbasis of the active factor.
Eigen::MatrixXcd rotate_rows(const Eigen::MatrixXcd& x, const ModelParams& p,
                             const FactorExponential& w) {
  const Eigen::MatrixXcd& u = w.eigenvectors();
  Eigen::MatrixXcd out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Eigen::Map<const Eigen::MatrixXcd> in(x.col(c).data(), p.spin_dim(), p.fock_dim());
    Eigen::Map<Eigen::MatrixXcd> res(out.col(c).data(), p.spin_dim(), p.fock_dim());
    if (w.generator().acts_on_spin()) res = u.adjoint() * in;
    else res = in * u.conjugate();
  }
  return out;
}

MqcSpectrum from_distribution(const Eigen::VectorXd& prob, int m_max, const std::string& tag,
                              double time) {
  MqcSpectrum s;
  s.generator = tag;
  s.m_max = m_max;
  s.time = time;
  s.intensities.assign(static_cast<std::size_t>(2 * m_max + 1), 0.0);
  const Eigen::Index n = prob.size();
  for (int m = -m_max; m <= m_max; ++m) {
    double acc = 0.0;
    for (Eigen::Index a = 0; a < n; ++a) {
      const Eigen::Index b = a - m;
      if (b >= 0 && b < n) acc += prob(a) * prob(b);
    }
    s.intensities[static_cast<std::size_t>(m + m_max)] = acc;
  }
  return s;
}

}  // namespace

int mqc_order(const StateVector& psi, Generator g) {
  if (g.acts_on_spin()) return psi.n_spins();
  if (g.kind == Generator::Kind::N) return last_supported(psi.fock_distribution());
  throw UnsupportedGenerator("generator " + g.tag() + " does not have an integer-spaced spectrum");
}

MqcSpectrum block_decompose(const StateVector& psi, Generator g, double time) {
  const ModelParams p = ModelParams{psi.n_spins(), 0.0, 0.0, 0.0, psi.n_max()};
  const FactorExponential w(p, g);
  require_integer_spectrum(w);
  const Eigen::VectorXd prob = w.distribution(psi);
  return from_distribution(prob, mqc_order(psi, g), g.tag(), time);
}

MqcSpectrum block_decompose(const Eigen::MatrixXcd& rho, const ModelParams& p, Generator g,
                            double time) {
  if (rho.rows() != p.dim() || rho.cols() != p.dim())
    throw ParameterError("density matrix dimension does not match the model");
  const FactorExponential w(p, g);
  require_integer_spectrum(w);
  const Eigen::MatrixXcd half = rotate_rows(rho, p, w);
  const Eigen::MatrixXcd rt = rotate_rows(half.adjoint(), p, w).adjoint();
  const Eigen::VectorXd& gv = w.spectrum();
  const bool spin = g.acts_on_spin();
  const int ds = p.spin_dim();
  auto label = [&](Eigen::Index k) {
    const Eigen::Index idx = spin ? k % ds : k / ds;
    return static_cast<int>(std::lround(gv(idx) - gv(0)));
  };
  int m_max = p.n_spins;
  if (!spin) {
    Eigen::VectorXd pn = Eigen::VectorXd::Zero(p.fock_dim());
    for (Eigen::Index k = 0; k < p.dim(); ++k) pn(k / ds) += rt(k, k).real();
    m_max = last_supported(pn);
  }
  MqcSpectrum s;
  s.generator = g.tag();
  s.m_max = m_max;
  s.time = time;
  s.intensities.assign(static_cast<std::size_t>(2 * m_max + 1), 0.0);
  for (Eigen::Index b = 0; b < p.dim(); ++b) {
    const int lb = label(b);
    for (Eigen::Index a = 0; a < p.dim(); ++a) {
      const int m = label(a) - lb;
      if (m < -m_max || m > m_max) continue;
      s.intensities[static_cast<std::size_t>(m + m_max)] += std::norm(rt(a, b));
    }
  }
  return s;
}

MqcSpectrum intensities_via_fourier(const StateVector& psi0, const EigenSystem& es, Generator g,
                                    double t, std::size_t angles) {
  const FactorExponential w(es.params(), g);
  require_integer_spectrum(w);
  const StateVector psi_t = es.evolve(psi0, t);
  const int m_max = mqc_order(psi_t, g);
  if (angles < static_cast<std::size_t>(2 * m_max + 1))
    throw ParameterError("angle grid of " + std::to_string(angles) + " points aliases coherence order " +
                         std::to_string(m_max) + "; need at least " + std::to_string(2 * m_max + 1));
  const Eigen::VectorXcd c0 = es.to_eigenbasis(psi0);
  const Eigen::VectorXd& e = es.energies();
  Eigen::VectorXcd back_phase(e.size());
  for (Eigen::Index k = 0; k < e.size(); ++k) back_phase(k) = std::polar(1.0, e(k) * t);
  std::vector<double> f(angles);
  for (std::size_t k = 0; k < angles; ++k) {
    const double phi = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(angles);
    const Eigen::VectorXcd cr = es.to_eigenbasis(w.apply(psi_t, phi));
    const cplx overlap = (c0.conjugate().cwiseProduct(back_phase).cwiseProduct(cr)).sum();
    f[k] = std::norm(overlap);
  }
  MqcSpectrum s;
  s.generator = g.tag();
  s.m_max = m_max;
  s.time = t;
  s.intensities.assign(static_cast<std::size_t>(2 * m_max + 1), 0.0);
  for (int m = -m_max; m <= m_max; ++m) {
    cplx acc = 0.0;
    for (std::size_t k = 0; k < angles; ++k) {
      const double phi = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(angles);
      acc += f[k] * std::polar(1.0, -m * phi);
    }
    acc /= static_cast<double>(angles);
    if (std::abs(acc.imag()) > 1e-10)
      throw ContractViolation("Fourier intensity I_" + std::to_string(m) + " is not real");
    s.intensities[static_cast<std::size_t>(m + m_max)] = acc.real();
  }
  return s;
}

BipartiteTerms bipartite_terms(const Eigen::MatrixXcd& w) {
  const Eigen::MatrixXd a = w.cwiseAbs2();
  BipartiteTerms t;
  t.i0_rows = a.rowwise().sum().squaredNorm();
  t.i0_cols = a.colwise().sum().squaredNorm();
  t.d_diag = a.squaredNorm();
  const Eigen::MatrixXcd gram = w * w.adjoint();
  const Eigen::MatrixXd aa = a * a.transpose();
  t.purity = gram.cwiseAbs2().sum();
  const double gram_off = t.purity - gram.diagonal().cwiseAbs2().sum();
  const double aa_off = aa.sum() - aa.trace();
  t.c_off = gram_off - aa_off;
  return t;
}

namespace {

void require_normalized(const StateVector& psi) {
  if (std::abs(psi.norm() - 1.0) > 1e-10)
    throw ContractViolation("purity identity requires a normalized pure state");
}

double purity_of(const Eigen::MatrixXcd& rho) { return rho.cwiseAbs2().sum(); }

}  // namespace

PurityDecomposition purity_decomposition(const StateVector& psi, BlochAxis axis) {
  require_normalized(psi);
  const Eigen::MatrixXcd u = spin::rotation(psi.n_spins(), axis.theta, axis.phi);
  const BipartiteTerms t = bipartite_terms(u.adjoint() * psi.as_matrix());
  PurityDecomposition out;
  out.i0_spin = t.i0_rows;
  out.i0_boson = t.i0_cols;
  out.d_diag = t.d_diag;
  out.c_off = t.c_off;
  // phonon reduced matrix straight from the S_z-basis amplitudes
  out.purity_ph = purity_of(psi.as_matrix().transpose() * psi.as_matrix().conjugate());
  out.axis = axis;
  return out;
}

Eigen::MatrixXcd reduced_spin_matrix(const StateVector& psi) {
  return psi.as_matrix() * psi.as_matrix().adjoint();
}

double renyi2(double purity) {
  return purity > 0.0 ? -std::log(purity) : std::numeric_limits<double>::infinity();
}

namespace {

double i0_spin_of(const Eigen::MatrixXcd& rho_spin, int n_spins, BlochAxis axis) {
  const Eigen::MatrixXcd u = spin::rotation(n_spins, axis.theta, axis.phi);
  const Eigen::VectorXd prob = (u.adjoint() * rho_spin * u).diagonal().real();
  return prob.squaredNorm();
}

}  // namespace

RenyiEstimates renyi_spin_phonon(const StateVector& psi, BlochAxis axis) {
  const Eigen::MatrixXcd rho_s = reduced_spin_matrix(psi);
  RenyiEstimates r;
  r.axis = axis;
  r.s2 = renyi2(purity_of(rho_s));
  r.i0_spin = i0_spin_of(rho_s, psi.n_spins(), axis);
  r.i0_boson = psi.fock_distribution().squaredNorm();
  r.sf_spin = renyi2(r.i0_spin);
  r.sf_spin_boson = renyi2(r.i0_spin + r.i0_boson);
  return r;
}

Eigen::Matrix3d spin_covariance(const Eigen::MatrixXcd& rho_spin) {
  const int n = static_cast<int>(rho_spin.rows()) - 1;
  const Eigen::MatrixXcd ops[3] = {spin::sx(n).cast<cplx>(), spin::sy(n), spin::sz(n).cast<cplx>()};
  Eigen::Vector3d mean;
  for (int i = 0; i < 3; ++i) mean(i) = (rho_spin * ops[i]).trace().real();
  Eigen::Matrix3d cov;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      cov(i, j) = (rho_spin * ops[i] * ops[j]).trace().real() - mean(i) * mean(j);
  return 0.5 * (cov + cov.transpose());
}

BlochAxis optimize_axis(const StateVector& psi, AxisStrategy strategy, AxisGrid grid) {
  if (grid.theta_points < 2 || grid.phi_points < 1)
    throw ParameterError("axis grid needs at least 2 theta and 1 phi points");
  const Eigen::MatrixXcd rho_s = reduced_spin_matrix(psi);
  const Eigen::Matrix3d cov = spin_covariance(rho_s);
  double s2 = 0.0, i0_boson = 0.0;
  if (strategy == AxisStrategy::MinResidual) {
    s2 = renyi2(purity_of(rho_s));
    i0_boson = psi.fock_distribution().squaredNorm();
  }
  BlochAxis best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.theta_points; ++i) {
    const double theta = M_PI * i / (grid.theta_points - 1);
    for (int j = 0; j < grid.phi_points; ++j) {
      const BlochAxis axis{theta, 2.0 * M_PI * j / grid.phi_points};
      double score = 0.0;
      if (strategy == AxisStrategy::MaxVariance) {
        const Eigen::Vector3d e = axis.vector();
        score = e.dot(cov * e);
      } else {
        score = -std::abs(renyi2(i0_spin_of(rho_s, psi.n_spins(), axis) + i0_boson) - s2);
      }
      const bool first = i == 0 && j == 0;
      if (first || score > best_score + 1e-12 * std::max(1.0, std::abs(best_score))) {
        best_score = score;
        best = axis;
      }
    }
  }
  return best;
}

Eigen::MatrixXd symmetric_cg_table(int n_spins, int l_a) {
  if (l_a < 1 || l_a > n_spins)
    throw ParameterError("subsystem size L_A=" + std::to_string(l_a) + " outside 1.." +
                         std::to_string(n_spins));
  auto log_binom = [](int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  };
  const int l_b = n_spins - l_a;
  Eigen::MatrixXd c(l_a + 1, l_b + 1);
  for (int a = 0; a <= l_a; ++a)
    for (int b = 0; b <= l_b; ++b)
      c(a, b) = std::exp(0.5 * (log_binom(l_a, a) + log_binom(l_b, b) - log_binom(n_spins, a + b)));
  return c;
}

Eigen::MatrixXcd partial_trace_spins(const Eigen::MatrixXcd& rho_spin, int n_spins, int l_a) {
  if (rho_spin.rows() != n_spins + 1 || rho_spin.cols() != n_spins + 1)
    throw ParameterError("spin reduced matrix must be (N+1) x (N+1)");
  const Eigen::MatrixXd c = symmetric_cg_table(n_spins, l_a);
  const int l_b = n_spins - l_a;
  Eigen::MatrixXcd rho_a = Eigen::MatrixXcd::Zero(l_a + 1, l_a + 1);
  for (int a = 0; a <= l_a; ++a)
    for (int ap = 0; ap <= l_a; ++ap) {
      cplx acc = 0.0;
      for (int b = 0; b <= l_b; ++b) acc += c(a, b) * c(ap, b) * rho_spin(a + b, ap + b);
      rho_a(a, ap) = acc;
    }
  return rho_a;
}

Eigen::MatrixXcd partial_trace_spins(const StateVector& psi, int l_a) {
  return partial_trace_spins(reduced_spin_matrix(psi), psi.n_spins(), l_a);
}

SubsystemEstimate subsystem_fotoc_renyi(const StateVector& psi, int l_a, BlochAxis axis) {
  const int n = psi.n_spins();
  const Eigen::MatrixXd c = symmetric_cg_table(n, l_a);
  const int l_b = n - l_a;
  const Eigen::MatrixXcd u = spin::rotation(n, axis.theta, axis.phi);
  const Eigen::MatrixXcd rotated = u.adjoint() * psi.as_matrix();
  const Eigen::Index fock = rotated.cols();
  // W(m_A, (m_B, n)); a collective rotation acts as R_A (x) R_B on the split
  Eigen::MatrixXcd w(l_a + 1, (l_b + 1) * fock);
  for (Eigen::Index k = 0; k < fock; ++k)
    for (int b = 0; b <= l_b; ++b)
      for (int a = 0; a <= l_a; ++a) w(a, b + (l_b + 1) * k) = c(a, b) * rotated(a + b, k);
  SubsystemEstimate out;
  out.l_a = l_a;
  out.axis = axis;
  out.terms = bipartite_terms(w);
  out.s2 = renyi2(purity_of(partial_trace_spins(psi, l_a)));
  out.estimate = renyi2(out.terms.i0_rows + out.terms.i0_cols);
  return out;
}

}  // namespace dicke
