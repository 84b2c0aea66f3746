#include "dmimo/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <limits>

#include "dmimo/util.hpp"

namespace dmimo {

namespace {

void require_hermitian(const CMat& M, const char* who) {
  if (M.rows() != M.cols()) throw NonHermitianError(std::string(who) + ": matrix not square");
  double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  double dev = (M - M.adjoint()).cwiseAbs().maxCoeff();
  if (dev > 1e-10 * scale)
    throw NonHermitianError(std::string(who) + ": Hermitian deviation " + std::to_string(dev));
}

}  // namespace

double logdet_ipm(const CMat& M) {
  require_hermitian(M, "logdet_ipm");
  Eigen::SelfAdjointEigenSolver<CMat> es(M, Eigen::EigenvaluesOnly);
  const RVec& ev = es.eigenvalues();
  double tol = 1e-9 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  double sum = 0.0;
  for (int i = 0; i < ev.size(); ++i) {
    double lam = ev[i];
    if (lam < -tol) throw NotPsdError("logdet_ipm: eigenvalue " + std::to_string(lam));
    if (lam < 0.0) lam = 0.0;
    sum += log2_1p(lam);
  }
  return sum;
}

double logdet_psd(const CMat& M) {
  require_hermitian(M, "logdet_psd");
  Eigen::SelfAdjointEigenSolver<CMat> es(M, Eigen::EigenvaluesOnly);
  const RVec& ev = es.eigenvalues();
  double lmax = ev.cwiseAbs().maxCoeff();
  double tol = 1e-9 * std::max(1.0, lmax);
  double cut = 1e-12 * std::max(lmax, 1e-300);  // relative rank cutoff
  double sum = 0.0;
  for (int i = 0; i < ev.size(); ++i) {
    double lam = ev[i];
    if (lam < -tol) throw NotPsdError("logdet_psd: eigenvalue " + std::to_string(lam));
    if (lam <= cut) return -std::numeric_limits<double>::infinity();
    sum += std::log2(lam);
  }
  return sum;
}

RVec eigvals_hermitian(const CMat& M) {
  require_hermitian(M, "eigvals_hermitian");
  Eigen::SelfAdjointEigenSolver<CMat> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

SvdResult svd(const CMat& M) {
  Eigen::JacobiSVD<CMat> s(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {s.matrixU(), s.singularValues(), s.matrixV().adjoint()};
}

}  // namespace dmimo
