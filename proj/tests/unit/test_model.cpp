#include <doctest.h>

#include <cmath>

#include "dicke/model.hpp"
#include "dicke/propagate.hpp"

using namespace dicke;

namespace {

double fact(int n) { return std::tgamma(n + 1.0); }

// closed-form sum for <j m'| exp(-i beta J_y) |j m>
double wigner_d_oracle(double j, double mp, double m, double beta) {
  double sum = 0.0;
  const double c = std::cos(beta / 2), s = std::sin(beta / 2);
  for (int k = 0; k <= static_cast<int>(2 * j); ++k) {
    const double a = j + m - k, b = j - k - mp, d = k - m + mp;
    if (a < 0 || b < 0 || d < 0) continue;
    const double num = std::sqrt(fact(int(j + m)) * fact(int(j - m)) * fact(int(j + mp)) * fact(int(j - mp)));
    const double den = fact(int(a)) * fact(k) * fact(int(b)) * fact(int(d));
    sum += std::pow(-1.0, d) * num / den * std::pow(c, 2 * j + m - mp - 2 * k) * std::pow(s, 2 * k - m + mp);
  }
  return sum;
}

}  // namespace

TEST_CASE("wigner small-d matches the factorial sum") {
  for (int n : {1, 4, 7}) {
    const double j = n / 2.0;
    for (double beta : {0.3, 1.1, 2.9}) {
      const Eigen::MatrixXd d = spin::wigner_d(n, beta);
      for (int r = 0; r <= n; ++r)
        for (int c = 0; c <= n; ++c)
          CHECK(d(r, c) == doctest::Approx(wigner_d_oracle(j, r - j, c - j, beta)).epsilon(1e-12));
    }
  }
}

TEST_CASE("spin matrices obey the angular momentum algebra") {
  const int n = 5;
  const Eigen::MatrixXcd sx = spin::sx(n).cast<cplx>(), sy = spin::sy(n), sz = spin::sz(n).cast<cplx>();
  CHECK((sx * sy - sy * sx - cplx(0, 1) * sz).norm() < 1e-12);
  const Eigen::MatrixXcd casimir = sx * sx + sy * sy + sz * sz;
  const double j = n / 2.0;
  CHECK((casimir - j * (j + 1) * Eigen::MatrixXcd::Identity(n + 1, n + 1)).norm() < 1e-12);
}

TEST_CASE("flattened basis index round-trips") {
  const ModelParams p = reference_params(4, 0.2, 6);
  for (Eigen::Index k = 0; k < p.dim(); ++k) CHECK(flatten(p, unflatten(p, k)) == k);
  CHECK(unflatten(p, 7).n == 1);
  CHECK(unflatten(p, 7).j == 2);
}

TEST_CASE("hamiltonian is hermitian and commutes with parity") {
  const ModelParams p = reference_params(6, 0.2, 12);
  const Operator h = build_hamiltonian(p);
  CHECK(h.hermiticity_defect() < 1e-12);
  const Eigen::MatrixXcd hd = h.dense(), pd = parity_operator(p).dense();
  CHECK((hd * pd - pd * hd).norm() < 1e-9);
  CHECK((pd * pd - Eigen::MatrixXcd::Identity(p.dim(), p.dim())).norm() < 1e-9);
}

TEST_CASE("critical field and energy") {
  const ModelParams p = reference_params(40, 0.2, 10);
  CHECK(p.critical_field_khz() == doctest::Approx(3.4848));
  CHECK(p.b_khz == doctest::Approx(0.69696));
  CHECK(p.esqpt_energy() == doctest::Approx(-kTwoPi * p.b_khz * 20));
  // the critical state sits exactly at E_c
  const StateVector psi = critical_state(p);
  const Operator h = build_hamiltonian(p);
  CHECK(psi.expectation(h.matrix).real() == doctest::Approx(p.esqpt_energy()).epsilon(1e-12));
}

TEST_CASE("invalid parameters are rejected") {
  ModelParams p = reference_params(4, 0.2, 6);
  p.n_spins = 0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = reference_params(4, 0.2, 6);
  p.n_max = -1;
  CHECK_THROWS_AS(p.validate(), ParameterError);
}

TEST_CASE("coherent spin state is the extremal S_r eigenvector") {
  const int n = 6;
  const BlochAxis axis{0.7, 1.9};
  const Eigen::VectorXcd v = coherent_spin_amplitudes(n, axis, +1);
  const Eigen::MatrixXcd sr = spin::axis_operator(n, axis.theta, axis.phi);
  CHECK((sr * v - (n / 2.0) * v).norm() < 1e-12);
  CHECK(v.norm() == doctest::Approx(1.0));
}
