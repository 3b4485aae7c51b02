#pragma once

#include <Eigen/Dense>

namespace dicke::linalg {

/// Checks a 256 x 256 BLAS product against Eigen's own kernel. Some OpenBLAS
/// builds autodetect a kernel that returns wrong products on newer CPUs; the
/// library refuses to diagonalize with such a BLAS.
bool blas_is_reliable();

/// Entry-point helper for executables: if the BLAS probe fails and
/// OPENBLAS_CORETYPE is unset, re-executes the program with a conservative
/// core type. Throws std::runtime_error if the BLAS is still unreliable.
void ensure_reliable_blas(int argc, char** argv);

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

struct HermitianEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;
};

/// LAPACK MRRR eigensolver; the input is consumed.
SymmetricEigen eigh(Eigen::MatrixXd&& a);
/// Eigenvalues only.
Eigen::VectorXd eigvalsh(Eigen::MatrixXd&& a);
/// Complex Hermitian input. Throws ContractViolation on a non-Hermitian matrix.
HermitianEigen eigh(const Eigen::MatrixXcd& a);

/// max |A - A^dagger| relative to max(1, max |A|).
double hermiticity_defect(const Eigen::MatrixXcd& a);

/// Y = V * Z for real V and complex Z, done as one real GEMM.
Eigen::MatrixXcd real_times_complex(const Eigen::MatrixXd& v, const Eigen::MatrixXcd& z);
/// Y = V^T * Z.
Eigen::MatrixXcd real_transpose_times_complex(const Eigen::MatrixXd& v,
                                              const Eigen::MatrixXcd& z);

}  // namespace dicke::linalg
