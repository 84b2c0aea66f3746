#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "detail.hpp"
#include "dmimo/bounds.hpp"
#include "dmimo/rates.hpp"
#include "dmimo/solvers.hpp"
#include "dmimo/util.hpp"

namespace dmimo {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const std::array<double, 32> kOnes = [] {
  std::array<double, 32> a{};
  a.fill(1.0);
  return a;
}();

void check_ensemble(const SystemConfig& cfg, const Ensemble& ens, const char* who) {
  cfg.validate();
  if (ens.size() == 0) throw BadConfigError(std::string(who) + ": empty ensemble");
  if (ens.t != cfg.t || ens.rows != cfg.rx_rows())
    throw BadConfigError(std::string(who) + ": ensemble shape does not match the system");
}

void need_single_antenna(const SystemConfig& cfg, const char* who) {
  for (int i = 0; i < cfg.r; ++i)
    if (cfg.antennas_of(i) != 1)
      throw BadConfigError(std::string(who) + ": needs one antenna per agent");
}

// per-sample scratch: subset link sums and per-block bound terms
struct Workspace {
  std::vector<double> lsum;
  std::vector<double> blockterm;
};

// dp over bitmasks: lsum[S] = sum_{i in S} l[i]
void fill_subset_sums(const double* l, int r, std::vector<double>& lsum) {
  const std::uint32_t total = 1u << r;
  if (lsum.size() < total) lsum.resize(total);
  lsum[0] = 0.0;
  for (std::uint32_t m = 1; m < total; ++m)
    lsum[m] = lsum[m & (m - 1)] + l[std::countr_zero(m)];
}

int spike_column(const CMat& H) {
  int best = 0;
  double bv = -1.0;
  for (int j = 0; j < H.cols(); ++j) {
    double s = H.col(j).squaredNorm();
    if (s > bv) {
      bv = s;
      best = j;
    }
  }
  return best;
}

// one coordinate/pair ascent pass over p on the power simplex (clip inside)
RVecX improve_p(const std::function<double(const RVecX&)>& f, const RVecX& p0, int t, double P,
                int cycles) {
  RVecX lo = RVecX::Zero(t), hi = RVecX::Constant(t, P);
  BoxMaxOptions o;
  o.default_starts = 0;
  o.extra_starts = {p0};
  o.pair_directions = true;
  o.max_cycles = cycles;
  o.xtol = std::max(1e-12, 1e-5 * P);
  return maximize_concave_box(f, lo, hi, 1e-7, o).x;
}

RVecX improve_q(const std::function<double(const RVecX&)>& f, const RVecX& q0, const RVecX& qhi,
                int cycles) {
  RVecX lo = RVecX::Zero(q0.size());
  BoxMaxOptions o;
  o.default_starts = 0;
  o.extra_starts = {q0};
  o.pair_directions = true;
  o.max_cycles = cycles;
  o.xtol = std::max(1e-12, 1e-5 * std::max(1.0, qhi.maxCoeff()));
  return maximize_concave_box(f, lo, qhi, 1e-7, o).x;
}

// --- per-sample values at fixed arguments ---

double ec_value(const SystemConfig& cfg, const CMat& G) {
  double d[32];
  for (int i = 0; i < cfg.r; ++i) {
    double em1 = exp2m1(cfg.capacities[i]);
    d[i] = em1 / (em1 + 1.0 + G(i, i).real());
  }
  const std::uint32_t full = cfg.r >= 32 ? 0xFFFFFFFFu : (1u << cfg.r) - 1;
  return detail::subset_logdet(G, full, d);
}

double ceo_value(const SystemConfig& cfg, const CMat& G, const RVecX& q, Workspace& ws) {
  const int r = cfg.r;
  double d[16], l[16];
  for (int i = 0; i < r; ++i) {
    d[i] = detail::one_minus_exp2m(q[i]);
    l[i] = cfg.capacities[i] - q[i];
  }
  fill_subset_sums(l, r, ws.lsum);
  const std::uint32_t total = 1u << r;
  const double lsAll = ws.lsum[total - 1];
  double best = lsAll;  // decode nothing jointly
  for (std::uint32_t S = 1; S < total; ++S) {
    double v = lsAll - ws.lsum[S] + detail::subset_logdet(G, S, d);
    if (v < best) best = v;
  }
  return best;
}

double ub_value(const SystemConfig& cfg, const CMat& H, const CMat& G,
                const std::vector<double>& p, const RVecX& q,
                const std::vector<std::vector<std::uint32_t>>* families, Workspace& ws) {
  const int r = cfg.r;
  double l[16], qa[16];
  for (int i = 0; i < r; ++i) {
    l[i] = cfg.capacities[i] - q[i];
    qa[i] = q[i];
  }
  fill_subset_sums(l, r, ws.lsum);
  const std::uint32_t total = 1u << r;
  const double lsAll = ws.lsum[total - 1];
  if (ws.blockterm.size() < total) ws.blockterm.resize(total);
  for (std::uint32_t Z = 1; Z < total; ++Z)
    ws.blockterm[Z] = detail::epi_block_value(H, G, p.data(), Z, qa, cfg.t);
  double best = lsAll;  // forward everything, decode nothing
  if (families == nullptr) {
    for (std::uint32_t T = 1; T < total; ++T) {
      double v = ws.blockterm[T] + lsAll - ws.lsum[T];
      if (v < best) best = v;
    }
  } else {
    for (const auto& fam : *families) {
      if (fam.empty()) continue;
      std::uint32_t covered = 0;
      double v = 0.0;
      for (std::uint32_t Z : fam) {
        v += ws.blockterm[Z];
        covered |= Z;
      }
      v += lsAll - ws.lsum[covered];
      if (v < best) best = v;
    }
  }
  return best;
}

// --- per-sample maximizations ---

double ec_sample(const SystemConfig& cfg, const CMat& H) {
  const int t = cfg.t;
  const double P = cfg.P;
  auto fp = [&](const RVecX& pp) {
    std::vector<double> pc = detail::simplex_clip(pp, P);
    return ec_value(cfg, detail::gram_diag(H, pc));
  };
  RVecX piso = RVecX::Constant(t, P / t);
  RVecX pspk = RVecX::Zero(t);
  pspk[spike_column(H)] = P;
  double best = kNegInf;
  for (const RVecX& p0 : {piso, pspk}) {
    RVecX p = improve_p(fp, p0, t, P, 3);
    best = std::max(best, fp(p));
  }
  return best;
}

double cutset_sample(const SystemConfig& cfg, const CMat& H, Workspace& ws) {
  const int t = cfg.t, r = cfg.r;
  const double P = cfg.P;
  const bool single = cfg.rx_rows() == r;
  fill_subset_sums(cfg.capacities.data(), r, ws.lsum);
  const std::uint32_t total = 1u << r;
  const double lsAll = ws.lsum[total - 1];
  auto value = [&](const CMat& G) {
    double best = lsAll;
    for (std::uint32_t S = 1; S < total; ++S) {
      double ld;
      if (single) {
        ld = detail::subset_logdet(G, S, kOnes.data());
      } else {
        int rows[64], m = 0;
        for (std::uint32_t rest = S; rest != 0; rest &= rest - 1) {
          int a = std::countr_zero(rest), start, len;
          agent_rows(cfg, a, start, len);
          for (int k = 0; k < len; ++k) rows[m++] = start + k;
        }
        CMat M = CMat::Identity(m, m);
        for (int ii = 0; ii < m; ++ii)
          for (int jj = 0; jj < m; ++jj) M(ii, jj) += G(rows[ii], rows[jj]);
        ld = detail::logdet_pd_ldlt(M);
      }
      double v = lsAll - ws.lsum[S] + ld;
      if (v < best) best = v;
    }
    return best;
  };
  auto fp = [&](const RVecX& pp) {
    std::vector<double> pc = detail::simplex_clip(pp, P);
    return value(detail::gram_diag(H, pc));
  };
  RVecX piso = RVecX::Constant(t, P / t);
  RVecX pspk = RVecX::Zero(t);
  pspk[spike_column(H)] = P;
  double best = kNegInf;
  for (const RVecX& p0 : {piso, pspk}) {
    RVecX p = improve_p(fp, p0, t, P, 3);
    best = std::max(best, fp(p));
  }
  return best;
}

// alternating ascent over (p, q) for the compress-and-decode objectives
template <class ValueAtG>
double pq_sample(const SystemConfig& cfg, const CMat& H, ValueAtG&& value) {
  const int t = cfg.t, r = cfg.r;
  const double P = cfg.P;
  RVecX qhi(r);
  for (int i = 0; i < r; ++i) qhi[i] = cfg.capacities[i];

  RVecX piso = RVecX::Constant(t, P / t);
  RVecX pspk = RVecX::Zero(t);
  pspk[spike_column(H)] = P;
  const std::array<std::pair<RVecX, RVecX>, 3> starts = {
      std::pair<RVecX, RVecX>{piso, qhi},
      std::pair<RVecX, RVecX>{piso, 0.5 * qhi},
      std::pair<RVecX, RVecX>{pspk, qhi},
  };

  double best = kNegInf;
  for (const auto& [p0, q0] : starts) {
    RVecX p = p0, q = q0;
    double cur = kNegInf;
    for (int round = 0; round < 2; ++round) {
      std::vector<double> pc = detail::simplex_clip(p, P);
      CMat G = detail::gram_diag(H, pc);
      auto fq = [&](const RVecX& qq) { return value(G, pc, qq); };
      q = improve_q(fq, q, qhi, 2);
      auto fp = [&](const RVecX& pp) {
        std::vector<double> pc2 = detail::simplex_clip(pp, P);
        return value(detail::gram_diag(H, pc2), pc2, q);
      };
      p = improve_p(fp, p, t, P, 2);
      cur = fp(p);
    }
    best = std::max(best, cur);
  }
  return best;
}

}  // namespace

std::vector<double> ec_outage_values(const SystemConfig& cfg, const Ensemble& ens, int workers) {
  check_ensemble(cfg, ens, "ec_outage");
  need_single_antenna(cfg, "ec_outage");
  if (cfg.r > 32) throw TooManyAgentsError("ec_outage: r > 32");
  std::vector<double> out(ens.size());
  parallel_for(ens.size(), workers,
               [&](int k) { out[k] = ec_sample(cfg, ens.H[static_cast<size_t>(k)]); });
  return out;
}

std::vector<double> ceo_outage_values(const SystemConfig& cfg, const Ensemble& ens, int workers) {
  check_ensemble(cfg, ens, "ceo_outage");
  need_single_antenna(cfg, "ceo_outage");
  if (cfg.r > 16) throw TooManyAgentsError("ceo_outage: r > 16");
  std::vector<double> out(ens.size());
  parallel_for(ens.size(), workers, [&](int k) {
    Workspace ws;
    const CMat& H = ens.H[static_cast<size_t>(k)];
    out[k] = pq_sample(cfg, H, [&](const CMat& G, const std::vector<double>&, const RVecX& q) {
      return ceo_value(cfg, G, q, ws);
    });
  });
  return out;
}

std::vector<double> cutset_outage_values(const SystemConfig& cfg, const Ensemble& ens,
                                         int workers) {
  check_ensemble(cfg, ens, "cutset_outage");
  if (cfg.r > 16) throw TooManyAgentsError("cutset_outage: r > 16");
  if (cfg.rx_rows() > 64) throw TooManyAgentsError("cutset_outage: more than 64 receive rows");
  std::vector<double> out(ens.size());
  parallel_for(ens.size(), workers, [&](int k) {
    Workspace ws;
    out[k] = cutset_sample(cfg, ens.H[static_cast<size_t>(k)], ws);
  });
  return out;
}

std::vector<double> ub_outage_values(const SystemConfig& cfg, const Ensemble& ens, bool partitioned,
                                     int workers) {
  check_ensemble(cfg, ens, "ub_outage");
  need_single_antenna(cfg, "ub_outage");
  if (cfg.r > 8) throw TooManyAgentsError("ub_outage: r > 8");
  std::vector<std::vector<std::uint32_t>> families;
  if (partitioned) families = enumerate_block_families(cfg.r);
  const auto* fam = partitioned ? &families : nullptr;
  std::vector<double> out(ens.size());
  parallel_for(ens.size(), workers, [&](int k) {
    Workspace ws;
    const CMat& H = ens.H[static_cast<size_t>(k)];
    out[k] = pq_sample(cfg, H, [&](const CMat& G, const std::vector<double>& pc, const RVecX& q) {
      return ub_value(cfg, H, G, pc, q, fam, ws);
    });
  });
  return out;
}

double outage_fraction(const std::vector<double>& values, double R) {
  if (values.empty()) throw BadConfigError("outage_fraction: empty values");
  std::int64_t c = std::count_if(values.begin(), values.end(), [R](double v) { return v < R; });
  return static_cast<double>(c) / static_cast<double>(values.size());
}

double supported_rate(const std::vector<double>& values, double epsilon) {
  if (values.empty()) throw BadConfigError("supported_rate: empty values");
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    throw BadConfigError("supported_rate: epsilon must lie in [0, 1)");
  std::vector<double> s = values;
  std::sort(s.begin(), s.end());
  size_t idx = std::min(static_cast<size_t>(epsilon * static_cast<double>(s.size())),
                        s.size() - 1);
  return s[idx];
}

double ec_outage(const SystemConfig& cfg, const Ensemble& ens, double R, int workers) {
  return outage_fraction(ec_outage_values(cfg, ens, workers), R);
}

double ceo_outage(const SystemConfig& cfg, const Ensemble& ens, double R, int workers) {
  return outage_fraction(ceo_outage_values(cfg, ens, workers), R);
}

double cutset_outage(const SystemConfig& cfg, const Ensemble& ens, double R, int workers) {
  return outage_fraction(cutset_outage_values(cfg, ens, workers), R);
}

double ub_outage(const SystemConfig& cfg, const Ensemble& ens, double R, bool partitioned,
                 int workers) {
  return outage_fraction(ub_outage_values(cfg, ens, partitioned, workers), R);
}

}  // namespace dmimo
