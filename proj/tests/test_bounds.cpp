#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <limits>
#include <vector>

#include "dmimo/bounds.hpp"
#include "dmimo/channel.hpp"
#include "dmimo/rates.hpp"
#include "dmimo/solvers.hpp"

using dmimo::CMat;
using dmimo::cx;

namespace {

CMat stack_rows(const CMat& H, std::uint32_t subset) {
  CMat S(std::popcount(subset), H.cols());
  int at = 0;
  for (int i = 0; i < H.rows(); ++i)
    if (subset & (1u << i)) S.row(at++) = H.row(i);
  return S;
}

// direct dense evaluation of the entropy-power subset term
double ref_epi_F(const std::vector<CMat>& Hs, std::uint32_t subset,
                 const std::vector<double>& q, const std::vector<double>& p, int t) {
  const int msub = std::popcount(subset);
  const int m = std::min(msub, t);
  Eigen::VectorXcd pd(t);
  for (int j = 0; j < t; ++j) pd[j] = p[j];
  double a = 0.0, w = 0.0;
  for (const CMat& H : Hs) {
    CMat S = stack_rows(H, subset);
    CMat lam = S * pd.asDiagonal() * S.adjoint();
    a += std::log2((CMat::Identity(msub, msub) + lam).determinant().real());
    if (msub <= t) {
      w += std::log2(lam.determinant().real());
    } else {
      CMat M = CMat::Zero(t, t);
      for (int i = 0; i < H.rows(); ++i)
        if (subset & (1u << i)) M += std::exp2(-q[i]) * (H.row(i).adjoint() * H.row(i));
      double lq = 0.0;
      for (int j = 0; j < t; ++j) lq += std::log2(p[j]);
      w += lq + std::log2(M.determinant().real());
    }
  }
  a /= Hs.size();
  w /= Hs.size();
  if (msub <= t) {
    double qs = 0.0;
    for (int i = 0; i < static_cast<int>(q.size()); ++i)
      if (subset & (1u << i)) qs += q[i];
    w -= qs;
  }
  return m * std::log2(std::exp2(a / m) - std::exp2(w / m));
}

}  // namespace

TEST_CASE("one agent reduces to the deflated log term") {
  auto cfg = dmimo::SystemConfig::symmetric(2, 2, 5.0, 2.0);
  auto ens = dmimo::make_ensemble(cfg, 1, 3);
  std::vector<double> q = {0.8, 1.7};
  for (int agent = 0; agent < 2; ++agent) {
    double g = (cfg.P / cfg.t) * ens.H[0].row(agent).squaredNorm();
    double want = std::log2(1.0 + (1.0 - std::exp2(-q[agent])) * g);
    double F = dmimo::epi_F(cfg, ens, 1u << agent, q);
    CHECK(std::abs(F - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    double G = dmimo::epi_G(cfg, ens.H[0], 1u << agent, q);
    CHECK(std::abs(G - F) <= 1e-12);
  }
}

TEST_CASE("ensemble term dominates the per-sample average") {
  auto cfg = dmimo::SystemConfig::symmetric(2, 2, 10.0, 2.0);
  auto ens = dmimo::make_ensemble(cfg, 200, 11);
  std::vector<double> q = {1.2, 0.6};
  for (int agent = 0; agent < 2; ++agent) {
    double acc = 0.0;
    for (const CMat& H : ens.H) {
      double g = (cfg.P / cfg.t) * H.row(agent).squaredNorm();
      acc += std::log2(1.0 + (1.0 - std::exp2(-q[agent])) * g);
    }
    acc /= ens.size();
    CHECK(dmimo::epi_F(cfg, ens, 1u << agent, q) >= acc - 1e-12);
  }
  // q = 0 forwards nothing: the term stays nonnegative and collapses at n=1
  std::vector<double> q0 = {0.0, 0.0};
  CHECK(dmimo::epi_F(cfg, ens, 1u, q0) >= -1e-12);
  auto one = dmimo::make_ensemble(cfg, 1, 5);
  CHECK(std::abs(dmimo::epi_F(cfg, one, 1u, q0)) <= 1e-12);
  // huge q removes the quantization penalty entirely
  std::vector<double> qbig = {40.0, 40.0};
  double a = 0.0;
  for (const CMat& H : ens.H)
    a += std::log2(1.0 + (cfg.P / cfg.t) * H.row(0).squaredNorm());
  a /= ens.size();
  CHECK(std::abs(dmimo::epi_F(cfg, ens, 1u, qbig) - a) <= 1e-6);
}

TEST_CASE("stacked subset taller than the transmitter") {
  dmimo::SystemConfig cfg;
  cfg.r = 3;
  cfg.t = 2;
  cfg.P = 4.0;
  cfg.capacities = {2.0, 2.0, 2.0};
  auto ens = dmimo::make_ensemble(cfg, 50, 21);
  std::vector<double> q = {0.5, 1.25, 2.0};

  std::vector<double> piso = {cfg.P / 2.0, cfg.P / 2.0};
  double want = ref_epi_F(ens.H, 0b111u, q, piso, cfg.t);
  double got = dmimo::epi_F(cfg, ens, 0b111u, q);
  CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));

  std::vector<double> pskew = {2.4, 1.1};
  want = ref_epi_F(ens.H, 0b111u, q, pskew, cfg.t);
  got = dmimo::epi_F(cfg, ens, 0b111u, q, pskew);
  CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));

  // short subsets against the same oracle
  for (std::uint32_t s : {0b001u, 0b011u, 0b101u}) {
    want = ref_epi_F(ens.H, s, q, pskew, cfg.t);
    got = dmimo::epi_F(cfg, ens, s, q, pskew);
    CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("subset and shape validation") {
  auto cfg = dmimo::SystemConfig::symmetric(2, 2, 4.0, 2.0);
  auto ens = dmimo::make_ensemble(cfg, 4, 1);
  std::vector<double> q = {1.0, 1.0};
  CHECK_THROWS_AS(dmimo::epi_F(cfg, ens, 0u, q), dmimo::EmptySubsetError);
  CHECK_THROWS_AS(dmimo::epi_F(cfg, ens, 4u, q), dmimo::BadConfigError);
  std::vector<double> q1 = {1.0};
  CHECK_THROWS_AS(dmimo::epi_F(cfg, ens, 1u, q1), dmimo::BadConfigError);
  CHECK_THROWS_AS(dmimo::epi_G(cfg, CMat::Zero(3, 2), 1u, q), dmimo::BadConfigError);

  dmimo::SystemConfig big;
  big.r = 17;
  big.t = 1;
  big.P = 1.0;
  big.capacities.assign(17, 1.0);
  auto bens = dmimo::make_ensemble(big, 1, 1);
  CHECK_THROWS_AS(dmimo::cutset_ergodic(big, bens), dmimo::TooManyAgentsError);

  dmimo::SystemConfig asym = cfg;
  asym.capacities = {2.0, 1.0};
  CHECK_THROWS_AS(dmimo::ub_symmetric(asym, ens), dmimo::BadConfigError);
}

TEST_CASE("cutset matches a direct subset scan") {
  dmimo::SystemConfig cfg;
  cfg.r = 2;
  cfg.t = 2;
  cfg.P = 10.0;
  cfg.capacities = {2.0, 1.3};
  auto ens = dmimo::make_ensemble(cfg, 80, 17);

  double best = std::numeric_limits<double>::infinity();
  std::uint32_t arg = 0;
  for (std::uint32_t s = 0; s < 4; ++s) {
    double acc = 0.0;
    if (s != 0) {
      for (const CMat& H : ens.H) {
        CMat S = stack_rows(H, s);
        int m = S.rows();
        CMat lam = (cfg.P / cfg.t) * (S * S.adjoint());
        acc += std::log2((CMat::Identity(m, m) + lam).determinant().real());
      }
      acc /= ens.size();
    }
    for (int i = 0; i < 2; ++i)
      if (!(s & (1u << i))) acc += cfg.capacities[i];
    if (acc < best) {
      best = acc;
      arg = s;
    }
  }

  auto rep = dmimo::cutset_ergodic(cfg, ens);
  CHECK(std::abs(rep.bound_bits - best) <= 1e-12 * std::max(1.0, best));
  CHECK(rep.has_min_subset);
  CHECK(rep.min_subset == arg);
}

TEST_CASE("bounds dominate the joint achievable rate") {
  auto cfg = dmimo::SystemConfig::symmetric(2, 2, 10.0, 2.0);
  auto ens = dmimo::make_ensemble(cfg, 40, 13);

  auto joint = dmimo::ceo_optimize_joint(cfg, ens);
  auto full = dmimo::ub_fast(cfg, ens);
  auto part = dmimo::ub_fast_partitioned(cfg, ens);
  auto sym = dmimo::ub_symmetric(cfg, ens);
  auto cut = dmimo::cutset_ergodic(cfg, ens);

  CHECK(full.bound_bits >= joint.rate_bits - 1e-6);
  CHECK(part.bound_bits >= joint.rate_bits - 1e-6);
  CHECK(sym.bound_bits >= joint.rate_bits - 1e-6);
  CHECK(cut.bound_bits >= joint.rate_bits - 1e-6);
  CHECK(part.bound_bits <= full.bound_bits + 1e-9);

  auto kv = full.to_kv();
  CHECK(kv.find("kind") != std::string::npos);
  CHECK(kv.find("bound_bits") != std::string::npos);
}
