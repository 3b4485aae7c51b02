#include <doctest.h>

#include <algorithm>
#include <random>

#include <Eigen/Eigenvalues>

#include "dicke/spectrum.hpp"

using namespace dicke;

namespace {

// central half of a GOE spectrum, where the semicircle density is smooth
std::vector<double> goe_levels(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a(dim, dim);
  for (auto& x : a.reshaped()) x = nd(rng);
  const Eigen::MatrixXd h = (a + a.transpose()) / 2;
  const Eigen::VectorXd e = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, Eigen::EigenvaluesOnly).eigenvalues();
  return {e.data() + dim / 4, e.data() + 3 * dim / 4};
}

}  // namespace

TEST_CASE("gap ratio oracles: uncorrelated and GOE levels") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> poisson(40000);
  for (auto& x : poisson) x = u(rng);
  std::sort(poisson.begin(), poisson.end());
  CHECK(mean_gap_ratio(poisson) == doctest::Approx(2 * std::log(2.0) - 1).epsilon(0.02));

  double r = 0.0;
  const int reps = 30;
  for (int i = 0; i < reps; ++i) r += mean_gap_ratio(goe_levels(200, rng));
  r /= reps;
  // large-dimension GOE value 0.5307; the Wigner surmise gives 4 - 2 sqrt 3
  CHECK(r == doctest::Approx(0.5307).epsilon(0.02));
}

TEST_CASE("spacing statistics separate GOE from Poisson") {
  std::mt19937_64 rng(8);
  const auto goe = goe_levels(800, rng);
  const SpacingStats g = spacing_stats(goe, EnergyWindow::Above, 0);
  CHECK(g.closer_to_wigner());
  CHECK(g.ks_wigner < 0.06);
  CHECK(g.mean_spacing == doctest::Approx(1.0).epsilon(1e-9));

  std::exponential_distribution<double> ex(1.0);
  std::vector<double> levels{0.0};
  for (int i = 0; i < 400; ++i) levels.push_back(levels.back() + ex(rng));
  const SpacingStats p = spacing_stats(levels, EnergyWindow::Below, 0);
  CHECK_FALSE(p.closer_to_wigner());
  CHECK(p.ks_poisson < 0.08);
  // histogram is a density over [0, histogram_max]
  double mass = 0.0;
  for (std::size_t b = 0; b < p.histogram.size(); ++b) mass += p.histogram[b] * (p.bin_edges[b + 1] - p.bin_edges[b]);
  CHECK(mass <= 1.0 + 1e-12);
  CHECK(mass > 0.95);
}

TEST_CASE("reference distributions") {
  CHECK(wigner_cdf(0.0) == 0.0);
  CHECK(wigner_cdf(50.0) == doctest::Approx(1.0));
  CHECK(poisson_cdf(1.0) == doctest::Approx(1 - std::exp(-1.0)));
  // density pi s/2 exp(-pi s^2/4) integrates to the cdf (trapezoid rule)
  double acc = 0.0, s = 0.0;
  const double h = 1e-4;
  for (; s < 1.5 - h / 2; s += h) {
    auto rho = [](double x) { return M_PI * x / 2 * std::exp(-M_PI * x * x / 4); };
    acc += 0.5 * h * (rho(s) + rho(s + h));
  }
  CHECK(acc == doctest::Approx(wigner_cdf(1.5)).epsilon(1e-8));
}

TEST_CASE("unfolding flattens a known counting function") {
  std::vector<double> levels;
  for (int k = 1; k <= 2000; ++k) levels.push_back(std::sqrt(static_cast<double>(k)));  // N(E) = E^2
  const auto u = unfold(levels, 3);
  for (std::size_t i = 100; i + 100 < u.size(); ++i) CHECK(u[i + 1] - u[i] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("ensembles on a small system") {
  const ModelParams p = reference_params(4, 0.2, 16);
  const EigenSystem es = diagonalize(p);
  const StateVector psi0 = critical_state(p);
  const double e0 = psi0.expectation(build_hamiltonian(p).matrix).real();

  const EnsembleSpec de = diagonal_ensemble(es, psi0);
  CHECK(de.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(de.weights.dot(es.energies()) == doctest::Approx(e0).epsilon(1e-10));

  const EnsembleSpec th = thermal_ensemble(es, psi0);
  CHECK(th.matching_residual < 1e-10);
  CHECK(th.weights.dot(es.energies()) == doctest::Approx(e0).epsilon(1e-9));
  // Boltzmann form: log-weight ratios are linear in energy with slope -beta
  for (Eigen::Index k = 1; k < 6; ++k)
    CHECK(std::log(th.weights(k) / th.weights(0)) ==
          doctest::Approx(-th.beta * (es.energies()(k) - es.energies()(0))).epsilon(1e-8));

  // spin reduced ensemble matrix by brute force from dense eigenvectors
  Eigen::MatrixXd rho = Eigen::MatrixXd::Zero(p.spin_dim(), p.spin_dim());
  for (Eigen::Index k = 0; k < es.dim(); ++k) {
    const Eigen::VectorXd v = es.eigenvector(k);
    const Eigen::Map<const Eigen::MatrixXd> m(v.data(), p.spin_dim(), p.fock_dim());
    rho += de.weights(k) * m * m.transpose();
  }
  CHECK((ensemble_spin_matrix(es, de.weights) - rho).cwiseAbs().maxCoeff() < 1e-12);

  const Distributions d = ensemble_distributions(es, de);
  CHECK(d.p_mz.sum() == doctest::Approx(1.0));
  CHECK(d.p_n.sum() == doctest::Approx(1.0));
  CHECK(total_variation(d.p_mz, d.p_mz) == 0.0);

  // long-time average approaches the diagonal ensemble
  std::vector<double> times;
  for (int i = 0; i < 400; ++i) times.push_back(2.0 + 0.37 * i);
  const Distributions avg = time_averaged_distributions(psi0, es, times);
  CHECK(total_variation(avg.p_n, d.p_n) < 0.05);

  const auto s2 = ensemble_subsystem_renyi(es, th);
  CHECK(s2.size() == 4u);
  CHECK(s2.front() > 0.0);
}

TEST_CASE("thermal ensemble above the infinite-temperature mean flags negative beta") {
  const ModelParams p = reference_params(3, 0.2, 6);
  const EigenSystem es = diagonalize(p);
  const double target = es.energies().mean() + 0.3 * (es.energies().maxCoeff() - es.energies().mean());
  const EnsembleSpec th = thermal_ensemble(es, target);
  CHECK(th.negative_temperature);
  CHECK(th.beta < 0.0);
  CHECK(th.matching_residual < 1e-10);
}
