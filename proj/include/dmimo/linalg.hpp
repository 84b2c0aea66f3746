#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace dmimo {

using cx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

struct NonHermitianError : std::runtime_error {
  explicit NonHermitianError(const std::string& what) : std::runtime_error(what) {}
};

struct NotPsdError : std::runtime_error {
  explicit NotPsdError(const std::string& what) : std::runtime_error(what) {}
};

// log2 det(I + M) for Hermitian PSD M. Eigenvalues in [-tol, 0) are clipped
// to zero; anything below -tol raises NotPsd. tol = 1e-9 at unit scale,
// relative to the largest eigenvalue magnitude for larger matrices.
double logdet_ipm(const CMat& M);

// log2 det(M) for Hermitian PSD M; -inf when M is numerically singular.
double logdet_psd(const CMat& M);

// Eigenvalues of a Hermitian matrix, descending order.
RVec eigvals_hermitian(const CMat& M);

// M = U * diag_rect(s) * Vh with unitary U (m x m) and Vh (n x n),
// singular values descending.
struct SvdResult {
  CMat U;
  RVec s;
  CMat Vh;
};
SvdResult svd(const CMat& M);

}  // namespace dmimo
