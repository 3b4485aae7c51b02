#include "dicke/linalg.hpp"

#include <cblas.h>
#include <lapacke.h>
#include <unistd.h>

#include <cstdlib>
#include <random>

#include <stdexcept>
#include <string>
#include <vector>

#include "dicke/model.hpp"

namespace dicke::linalg {

namespace {

Eigen::MatrixXd split_columns(const Eigen::MatrixXcd& z) {
  Eigen::MatrixXd out(z.rows(), 2 * z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    out.col(2 * c) = z.col(c).real();
    out.col(2 * c + 1) = z.col(c).imag();
  }
  return out;
}

Eigen::MatrixXcd join_columns(const Eigen::MatrixXd& y) {
  Eigen::MatrixXcd out(y.rows(), y.cols() / 2);
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    out.col(c).real() = y.col(2 * c);
    out.col(c).imag() = y.col(2 * c + 1);
  }
  return out;
}

void require_reliable_blas() {
  static const bool ok = blas_is_reliable();
  if (!ok)
    throw std::runtime_error(
        "BLAS self-test failed (wrong matrix products); set OPENBLAS_CORETYPE=Haswell");
}

}  // namespace

bool blas_is_reliable() {
  const int n = 256;
  std::mt19937 rng(7);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(n, n), b(n, n), c(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = normal(rng);
  cblas_dgemm(CblasColMajor, CblasNoTrans, CblasNoTrans, n, n, n, 1.0, a.data(), n, b.data(), n,
              0.0, c.data(), n);
  const Eigen::MatrixXd ref = a.lazyProduct(b);
  return (c - ref).cwiseAbs().maxCoeff() < 1e-9 * n;
}

void ensure_reliable_blas(int argc, char** argv) {
  (void)argc;
  if (blas_is_reliable()) return;
  if (std::getenv("OPENBLAS_CORETYPE") == nullptr) {
    ::setenv("OPENBLAS_CORETYPE", "Haswell", 1);
    ::execv("/proc/self/exe", argv);
  }
  throw std::runtime_error("BLAS self-test failed even with OPENBLAS_CORETYPE set");
}

// The divide-and-conquer drivers (?syevd/?heevd) in the system LAPACK return
// non-orthogonal eigenvectors above n = 25, so the MRRR drivers are used.

SymmetricEigen eigh(Eigen::MatrixXd&& a) {
  if (a.rows() != a.cols()) throw ContractViolation("eigh: matrix not square");
  require_reliable_blas();
  const lapack_int n = static_cast<lapack_int>(a.rows());
  SymmetricEigen out;
  out.values.resize(n);
  if (n == 0) return out;
  out.vectors.resize(n, n);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  const lapack_int info =
      LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'A', 'L', n, a.data(), n, 0.0, 0.0, 0, 0, 0.0,
                     &found, out.values.data(), out.vectors.data(), n, support.data());
  if (info != 0 || found != n)
    throw std::runtime_error("dsyevr failed, info=" + std::to_string(info));
  a.resize(0, 0);
  return out;
}

Eigen::VectorXd eigvalsh(Eigen::MatrixXd&& a) {
  require_reliable_blas();
  const lapack_int n = static_cast<lapack_int>(a.rows());
  Eigen::VectorXd w(n);
  if (n == 0) return w;
  lapack_int found = 0;
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  double dummy = 0.0;
  const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'N', 'A', 'L', n, a.data(), n, 0.0,
                                         0.0, 0, 0, 0.0, &found, w.data(), &dummy, 1,
                                         support.data());
  if (info != 0 || found != n)
    throw std::runtime_error("dsyevr failed, info=" + std::to_string(info));
  return w;
}

double hermiticity_defect(const Eigen::MatrixXcd& a) {
  if (a.rows() != a.cols()) return std::numeric_limits<double>::infinity();
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.adjoint()).cwiseAbs().maxCoeff() / scale;
}

HermitianEigen eigh(const Eigen::MatrixXcd& a) {
  if (hermiticity_defect(a) > 1e-12)
    throw ContractViolation("eigh: input matrix is not Hermitian");
  require_reliable_blas();
  const lapack_int n = static_cast<lapack_int>(a.rows());
  HermitianEigen out;
  out.values.resize(n);
  if (n == 0) return out;
  Eigen::MatrixXcd work = a;
  out.vectors.resize(n, n);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_zheevr(
      LAPACK_COL_MAJOR, 'V', 'A', 'L', n, reinterpret_cast<lapack_complex_double*>(work.data()),
      n, 0.0, 0.0, 0, 0, 0.0, &found, out.values.data(),
      reinterpret_cast<lapack_complex_double*>(out.vectors.data()), n, support.data());
  if (info != 0 || found != n)
    throw std::runtime_error("zheevr failed, info=" + std::to_string(info));
  return out;
}

Eigen::MatrixXcd real_times_complex(const Eigen::MatrixXd& v, const Eigen::MatrixXcd& z) {
  return join_columns(v * split_columns(z));
}

Eigen::MatrixXcd real_transpose_times_complex(const Eigen::MatrixXd& v,
                                              const Eigen::MatrixXcd& z) {
  return join_columns(v.transpose() * split_columns(z));
}

}  // namespace dicke::linalg
