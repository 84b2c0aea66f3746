#pragma once

// internal helpers shared by the rate/bound/outage translation units

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "dmimo/channel.hpp"
#include "dmimo/linalg.hpp"
#include "dmimo/util.hpp"

namespace dmimo::detail {

// H diag(p) H*
inline CMat gram_diag(const CMat& H, const std::vector<double>& p) {
  const int rows = static_cast<int>(H.rows());
  CMat G = CMat::Zero(rows, rows);
  for (int j = 0; j < static_cast<int>(p.size()); ++j)
    if (p[j] != 0.0) G.noalias() += p[j] * (H.col(j) * H.col(j).adjoint());
  return G;
}

inline CMat gram_scaled(const CMat& H, double kappa) {
  return kappa * (H * H.adjoint());
}

// log2 det of a Hermitian PD matrix by LDLT; tiny pivots floored
inline double logdet_pd_ldlt(const CMat& M) {
  Eigen::LDLT<CMat> ldlt(M);
  const auto& d = ldlt.vectorD();
  double s = 0.0;
  for (int i = 0; i < d.size(); ++i) s += std::log2(std::max(d[i].real(), 1e-300));
  return s;
}

// log2 det(I_S + D_S^(1/2) G_S D_S^(1/2)) over the index set of `mask`,
// with D = diag(d). Closed forms up to 3x3, LDLT beyond.
inline double subset_logdet(const CMat& G, std::uint32_t mask, const double* d) {
  int idx[32];
  int m = 0;
  for (std::uint32_t rest = mask; rest != 0; rest &= rest - 1) {
    int i = std::countr_zero(rest);
    idx[m++] = i;
  }
  if (m == 0) return 0.0;
  if (m == 1) {
    int i = idx[0];
    return std::log2(1.0 + d[i] * G(i, i).real());
  }
  if (m == 2) {
    int i = idx[0], j = idx[1];
    double gii = G(i, i).real(), gjj = G(j, j).real();
    double c2 = d[i] * d[j] * std::norm(G(i, j));
    double det = (1.0 + d[i] * gii) * (1.0 + d[j] * gjj) - c2;
    return std::log2(std::max(det, 1e-300));
  }
  if (m == 3) {
    int i = idx[0], j = idx[1], k = idx[2];
    double mii = 1.0 + d[i] * G(i, i).real();
    double mjj = 1.0 + d[j] * G(j, j).real();
    double mkk = 1.0 + d[k] * G(k, k).real();
    cx mij = std::sqrt(d[i] * d[j]) * G(i, j);
    cx mik = std::sqrt(d[i] * d[k]) * G(i, k);
    cx mjk = std::sqrt(d[j] * d[k]) * G(j, k);
    double det = mii * mjj * mkk + 2.0 * (mij * mjk * std::conj(mik)).real() -
                 mii * std::norm(mjk) - mjj * std::norm(mik) - mkk * std::norm(mij);
    return std::log2(std::max(det, 1e-300));
  }
  CMat M(m, m);
  for (int a = 0; a < m; ++a) {
    M(a, a) = 1.0 + d[idx[a]] * G(idx[a], idx[a]).real();
    for (int b = a + 1; b < m; ++b) {
      cx v = std::sqrt(d[idx[a]] * d[idx[b]]) * G(idx[a], idx[b]);
      M(a, b) = v;
      M(b, a) = std::conj(v);
    }
  }
  return logdet_pd_ldlt(M);
}

// log2 det(G_S) (no identity), -inf when singular
inline double subset_logdet_noid(const CMat& G, std::uint32_t mask) {
  int idx[32];
  int m = 0;
  for (std::uint32_t rest = mask; rest != 0; rest &= rest - 1) idx[m++] = std::countr_zero(rest);
  if (m == 0) return 0.0;
  if (m == 1) {
    double v = G(idx[0], idx[0]).real();
    return v > 1e-300 ? std::log2(v) : -std::numeric_limits<double>::infinity();
  }
  if (m == 2) {
    double det = G(idx[0], idx[0]).real() * G(idx[1], idx[1]).real() - std::norm(G(idx[0], idx[1]));
    return det > 1e-300 ? std::log2(det) : -std::numeric_limits<double>::infinity();
  }
  CMat M(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) M(a, b) = G(idx[a], idx[b]);
  Eigen::SelfAdjointEigenSolver<CMat> es(M, Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    double lam = es.eigenvalues()[i];
    if (lam <= 1e-300) return -std::numeric_limits<double>::infinity();
    s += std::log2(lam);
  }
  return s;
}

// scales p down onto the simplex {p >= 0, sum p <= P}; optimizer-facing
inline std::vector<double> simplex_clip(const RVec& p, double P) {
  std::vector<double> out(p.size());
  double sum = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    out[i] = std::max(0.0, p[i]);
    sum += out[i];
  }
  if (sum > P && sum > 0.0) {
    double sc = P / sum;
    for (double& v : out) v *= sc;
  }
  return out;
}

inline double one_minus_exp2m(double q) {  // 1 - 2^-q, exact 0 at q = 0
  return -std::expm1(-q * dmimo::kLn2);
}

// m log2(2^{a/m} - 2^{w/m}) computed as a relative correction; a >= w required
inline double epi_combine(double a, double w, int m) {
  if (w == -std::numeric_limits<double>::infinity()) return a;
  double x = std::max(0.0, (a - w) / m);
  double om = one_minus_exp2m(x);
  if (om <= 0.0) return -std::numeric_limits<double>::infinity();
  return a + m * std::log2(om);
}

// Single-realization bound term for one agent block Z (bitmask into G's
// index space): m log2(|I+Lambda_Z|^{1/m} - |W_Z|^{1/m}) in the log2 domain,
// with W_Z the quantization-deflated matrix (tall blocks go through the
// t x t form, which needs the diagonal input powers p).
inline double epi_block_value(const CMat& H, const CMat& G, const double* p, std::uint32_t Z,
                              const double* q, int t) {
  static const double kOnes[32] = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
                                   1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const int msub = std::popcount(Z);
  const int m = msub < t ? msub : t;
  const double a = subset_logdet(G, Z, kOnes);
  double w;
  if (msub <= t) {
    double qs = 0.0;
    for (std::uint32_t rest = Z; rest != 0; rest &= rest - 1) qs += q[std::countr_zero(rest)];
    double ld = subset_logdet_noid(G, Z);
    w = ld == kNegInf ? kNegInf : ld - qs;
  } else {
    double lp = 0.0;
    bool degenerate = false;
    for (int j = 0; j < t; ++j) {
      if (p[j] <= 1e-300) {
        degenerate = true;
        break;
      }
      lp += std::log2(p[j]);
    }
    if (degenerate) {
      w = kNegInf;
    } else {
      CMat M = CMat::Zero(t, t);
      for (std::uint32_t rest = Z; rest != 0; rest &= rest - 1) {
        int i = std::countr_zero(rest);
        M.noalias() += std::exp2(-q[i]) * (H.row(i).adjoint() * H.row(i));
      }
      double ld = subset_logdet_noid(M, (1u << t) - 1);
      w = ld == kNegInf ? kNegInf : ld + lp;
    }
  }
  return epi_combine(a, w, m);
}

}  // namespace dmimo::detail
