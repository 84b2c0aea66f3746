#include "dmimo/bounds.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "detail.hpp"
#include "dmimo/rates.hpp"
#include "dmimo/solvers.hpp"
#include "dmimo/util.hpp"

namespace dmimo {

namespace {

void append_subset(std::ostringstream& os, std::uint32_t mask) {
  os << "{";
  bool first = true;
  for (int i = 0; i < 32; ++i)
    if (mask & (1u << i)) {
      os << (first ? "" : ",") << (i + 1);
      first = false;
    }
  os << "}";
}

}  // namespace

std::string BoundReport::to_kv() const {
  std::ostringstream os;
  os.precision(17);
  os << "kind = " << kind << "\n";
  os << "bound_bits = " << bound_bits << "\n";
  if (has_min_subset) {
    os << "min_subset = ";
    append_subset(os, min_subset);
    os << "\n";
  }
  if (!min_blocks.empty() || kind == "ub_fast_partitioned") {
    os << "min_blocks =";
    for (std::uint32_t b : min_blocks) {
      os << " ";
      append_subset(os, b);
    }
    os << "\n";
  }
  if (!q_star.empty()) {
    os << "q_star =";
    for (double v : q_star) os << " " << v;
    os << "\n";
  }
  os << "Q_diag =";
  for (double v : Q_diag) os << " " << v;
  os << "\n";
  os << "seed = " << seed << "\n";
  os << "n_samples = " << n_samples << "\n";
  os << "version = " << kVersion << "\n";
  return os.str();
}

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

std::vector<double> resolve_power(const SystemConfig& cfg, const std::vector<double>& Q_diag,
                                  const char* who) {
  if (Q_diag.empty()) return std::vector<double>(cfg.t, cfg.P / cfg.t);
  if (static_cast<int>(Q_diag.size()) != cfg.t)
    throw InfeasibleCovarianceError(std::string(who) + ": Q_diag needs one entry per antenna");
  double sum = 0.0;
  for (double v : Q_diag) {
    if (!(v >= 0.0)) throw InfeasibleCovarianceError(std::string(who) + ": negative power");
    sum += v;
  }
  if (sum > cfg.P * (1.0 + 1e-9))
    throw InfeasibleCovarianceError(std::string(who) + ": total power exceeds the budget");
  return Q_diag;
}

// log2(2^u + 2^v) without overflow; either argument may be -inf
double log2_sum_exp2(double u, double v) {
  if (u < v) std::swap(u, v);
  if (u == kNegInf) return kNegInf;
  return u + log2_1p(std::exp2(v - u));
}

// accumulate a mean that becomes -inf as soon as one term is -inf
void acc_sticky(double& acc, double v) {
  if (acc != kNegInf) acc = v == kNegInf ? kNegInf : acc + v;
}

double finish_mean(double acc, int n) { return acc == kNegInf ? kNegInf : acc / n; }

// one ascent pass over the power simplex (clip inside the objective)
RVecX improve_power(const std::function<double(const RVecX&)>& f, const RVecX& p0, int t, double P,
                    int cycles, double xtol) {
  RVecX lo = RVecX::Zero(t), hi = RVecX::Constant(t, P);
  BoxMaxOptions o;
  o.default_starts = 0;
  o.extra_starts = {p0};
  o.pair_directions = true;
  o.max_cycles = cycles;
  o.xtol = xtol;
  return maximize_concave_box(f, lo, hi, 1e-7, o).x;
}

// Ensemble tables that make the bound objective O(1) per (subset, q)
// evaluation: the quantization levels enter the short-subset terms only
// through -sum q_i, and the tall-subset terms only through -t q under a
// shared level.
struct UbTables {
  std::vector<double> A;  // E log2 det(I + G_T)
  std::vector<double> L;  // E log2 det(G_T), short subsets
  std::vector<double> K;  // E log2 det(H_T^* H_T), tall subsets
  double logQ = 0.0;      // log2 det(Q)
  bool any_tall = false;
};

UbTables build_tables(const SystemConfig& cfg, const Ensemble& ens, const std::vector<double>& p) {
  const int r = cfg.r, t = cfg.t, n = ens.size();
  const std::uint32_t total = 1u << r;
  UbTables tb;
  tb.A.assign(total, 0.0);
  tb.L.assign(total, 0.0);
  tb.K.assign(total, 0.0);
  for (int j = 0; j < t; ++j) {
    if (p[j] <= 1e-300) {
      tb.logQ = kNegInf;
      break;
    }
    tb.logQ += std::log2(p[j]);
  }
  CMat M(t, t);
  for (const CMat& H : ens.H) {
    CMat G = detail::gram_diag(H, p);
    for (std::uint32_t T = 1; T < total; ++T) {
      tb.A[T] += detail::subset_logdet(G, T, kOnes.data());
      if (std::popcount(T) <= t) {
        acc_sticky(tb.L[T], detail::subset_logdet_noid(G, T));
      } else {
        tb.any_tall = true;
        M.setZero();
        for (std::uint32_t rest = T; rest != 0; rest &= rest - 1) {
          int i = std::countr_zero(rest);
          M.noalias() += H.row(i).adjoint() * H.row(i);
        }
        acc_sticky(tb.K[T], detail::subset_logdet_noid(M, (1u << t) - 1));
      }
    }
  }
  for (std::uint32_t T = 1; T < total; ++T) {
    tb.A[T] /= n;
    tb.L[T] = finish_mean(tb.L[T], n);
    tb.K[T] = finish_mean(tb.K[T], n);
  }
  return tb;
}

// mean of log2 det(sum_i 2^{-q_i} h_i^* h_i) for a tall subset with
// per-agent levels; the one case the tables cannot cover
double tall_mean_logdet(const Ensemble& ens, std::uint32_t T, const double* q, int t) {
  double w[32];
  for (std::uint32_t rest = T; rest != 0; rest &= rest - 1) {
    int i = std::countr_zero(rest);
    w[i] = std::exp2(-q[i]);
  }
  double acc = 0.0;
  CMat M(t, t);
  for (const CMat& H : ens.H) {
    M.setZero();
    for (std::uint32_t rest = T; rest != 0; rest &= rest - 1) {
      int i = std::countr_zero(rest);
      M.noalias() += w[i] * (H.row(i).adjoint() * H.row(i));
    }
    double ld = detail::subset_logdet_noid(M, (1u << t) - 1);
    if (ld == kNegInf) return kNegInf;
    acc += ld;
  }
  return acc / ens.size();
}

// ensemble bound term for one subset at levels q, via the tables
double table_term(const SystemConfig& cfg, const Ensemble& ens, const UbTables& tb,
                  std::uint32_t T, const RVecX& q, bool equal_q) {
  if (T == 0) return 0.0;
  const int t = cfg.t;
  const int msub = std::popcount(T);
  const int m = std::min(msub, t);
  double w;
  if (msub <= t) {
    double qs = 0.0;
    for (std::uint32_t rest = T; rest != 0; rest &= rest - 1) qs += q[std::countr_zero(rest)];
    w = tb.L[T] == kNegInf ? kNegInf : tb.L[T] - qs;
  } else if (tb.logQ == kNegInf) {
    w = kNegInf;
  } else if (equal_q) {
    w = tb.K[T] == kNegInf ? kNegInf : tb.logQ + tb.K[T] - q[0] * t;
  } else {
    double ld = tall_mean_logdet(ens, T, q.data(), t);
    w = ld == kNegInf ? kNegInf : tb.logQ + ld;
  }
  return detail::epi_combine(tb.A[T], w, m);
}

struct UbEval {
  double value = 0.0;
  std::uint32_t min_subset = 0;
  std::vector<std::uint32_t> min_blocks;
};

// min over subsets (families == nullptr) or block families of the bound terms
UbEval ub_objective(const SystemConfig& cfg, const Ensemble& ens, const UbTables& tb,
                    const RVecX& q, bool equal_q,
                    const std::vector<std::vector<std::uint32_t>>* families) {
  const int r = cfg.r;
  const std::uint32_t total = 1u << r;
  double l[16];
  for (int i = 0; i < r; ++i) l[i] = cfg.capacities[i] - q[i];
  std::vector<double> lsum(total);
  lsum[0] = 0.0;
  for (std::uint32_t m = 1; m < total; ++m)
    lsum[m] = lsum[m & (m - 1)] + l[std::countr_zero(m)];
  const double lsAll = lsum[total - 1];
  std::vector<double> term(total);
  term[0] = 0.0;
  for (std::uint32_t T = 1; T < total; ++T) term[T] = table_term(cfg, ens, tb, T, q, equal_q);

  UbEval out;
  if (families == nullptr) {
    auto f = [&](std::uint32_t T) { return term[T] + lsAll - lsum[T]; };
    auto res = min_over_subsets(r, f);
    out.value = res.value;
    out.min_subset = res.mask;
  } else {
    auto f = [&](const std::vector<std::uint32_t>& fam) {
      std::uint32_t covered = 0;
      double v = 0.0;
      for (std::uint32_t Z : fam) {
        v += term[Z];
        covered |= Z;
      }
      return v + lsAll - lsum[covered];
    };
    auto res = min_over_partitions(r, f);
    out.value = res.value;
    out.min_blocks = res.blocks;
  }
  return out;
}

// inner maximization over the levels at fixed input powers
struct QBest {
  RVecX q;
  double value = kNegInf;
};

QBest optimize_q(const SystemConfig& cfg, const Ensemble& ens, const UbTables& tb,
                 const std::vector<std::vector<std::uint32_t>>* families) {
  const int r = cfg.r;
  RVecX lo = RVecX::Zero(r), hi(r);
  for (int i = 0; i < r; ++i) hi[i] = cfg.capacities[i];
  auto f = [&](const RVecX& q) { return ub_objective(cfg, ens, tb, q, false, families).value; };
  BoxMaxOptions o;
  o.default_starts = 0;
  o.extra_starts = {hi, 0.5 * hi, 0.75 * hi};
  o.pair_directions = true;
  o.max_cycles = 40;
  if (cfg.symmetric_capacity()) {
    // one golden pass along the equal-q line lands on the max-min ridge, but
    // a finite ensemble is never exactly exchangeable: refine per agent too
    const double C = cfg.capacities[0];
    auto val = [&](double s) {
      return ub_objective(cfg, ens, tb, RVecX::Constant(r, s), true, families).value;
    };
    double s = golden_max(val, 0.0, C, std::max(1e-12, 1e-9 * std::max(1.0, C)));
    o.extra_starts.push_back(RVecX::Constant(r, s));
  }
  auto res = maximize_concave_box(f, lo, hi, 1e-9, o);
  QBest best;
  best.q = res.x;
  best.value = res.value;
  return best;
}

BoundReport ub_fast_impl(const SystemConfig& cfg, const Ensemble& ens, bool partitioned,
                         bool fixed_identity_Q) {
  const char* who = partitioned ? "ub_fast_partitioned" : "ub_fast";
  check_ensemble(cfg, ens, who);
  need_single_antenna(cfg, who);
  if (cfg.r > (partitioned ? 8 : 16))
    throw TooManyAgentsError(std::string(who) + ": too many agents");

  std::vector<std::vector<std::uint32_t>> fam_storage;
  const std::vector<std::vector<std::uint32_t>>* families = nullptr;
  if (partitioned) {
    fam_storage = enumerate_block_families(cfg.r);
    families = &fam_storage;
  }

  const int t = cfg.t;
  RVecX piso = RVecX::Constant(t, cfg.P / t);
  std::vector<double> p = detail::simplex_clip(piso, cfg.P);
  if (!fixed_identity_Q) {
    auto fp = [&](const RVecX& pp) {
      std::vector<double> pc = detail::simplex_clip(pp, cfg.P);
      return optimize_q(cfg, ens, build_tables(cfg, ens, pc), families).value;
    };
    RVecX pw = improve_power(fp, piso, t, cfg.P, 2, std::max(1e-12, 1e-3 * cfg.P));
    p = detail::simplex_clip(pw, cfg.P);
  }

  UbTables tb = build_tables(cfg, ens, p);
  QBest qb = optimize_q(cfg, ens, tb, families);
  UbEval ev = ub_objective(cfg, ens, tb, qb.q, false, families);

  BoundReport rep;
  rep.kind = who;
  rep.bound_bits = ev.value;
  if (partitioned) {
    rep.min_blocks = ev.min_blocks;
  } else {
    rep.min_subset = ev.min_subset;
    rep.has_min_subset = true;
  }
  rep.q_star.assign(qb.q.data(), qb.q.data() + cfg.r);
  rep.Q_diag = p;
  rep.seed = ens.seed;
  rep.n_samples = ens.size();
  return rep;
}

}  // namespace

double epi_F(const SystemConfig& cfg, const Ensemble& ens, std::uint32_t subset,
             const std::vector<double>& q, const std::vector<double>& Q_diag) {
  check_ensemble(cfg, ens, "epi_F");
  need_single_antenna(cfg, "epi_F");
  if (cfg.r > 32) throw TooManyAgentsError("epi_F: r > 32");
  if (subset == 0) throw EmptySubsetError("epi_F: empty subset");
  if (cfg.r < 32 && subset >= (1u << cfg.r)) throw BadConfigError("epi_F: subset out of range");
  if (static_cast<int>(q.size()) != cfg.r) throw BadConfigError("epi_F: need one level per agent");
  std::vector<double> p = resolve_power(cfg, Q_diag, "epi_F");

  const int t = cfg.t, n = ens.size();
  const int msub = std::popcount(subset);
  const int m = std::min(msub, t);
  double amean = 0.0, wacc = 0.0;
  double logQ = 0.0;
  const bool tall = msub > t;
  if (tall) {
    for (int j = 0; j < t; ++j) {
      if (p[j] <= 1e-300) {
        logQ = kNegInf;
        break;
      }
      logQ += std::log2(p[j]);
    }
  }
  CMat M(t, t);
  for (const CMat& H : ens.H) {
    CMat G = detail::gram_diag(H, p);
    amean += detail::subset_logdet(G, subset, kOnes.data());
    if (!tall) {
      acc_sticky(wacc, detail::subset_logdet_noid(G, subset));
    } else if (logQ != kNegInf) {
      M.setZero();
      for (std::uint32_t rest = subset; rest != 0; rest &= rest - 1) {
        int i = std::countr_zero(rest);
        M.noalias() += std::exp2(-q[i]) * (H.row(i).adjoint() * H.row(i));
      }
      acc_sticky(wacc, detail::subset_logdet_noid(M, (1u << t) - 1));
    }
  }
  amean /= n;
  double w;
  if (!tall) {
    double qs = 0.0;
    for (std::uint32_t rest = subset; rest != 0; rest &= rest - 1)
      qs += q[std::countr_zero(rest)];
    w = wacc == kNegInf ? kNegInf : wacc / n - qs;
  } else {
    w = (logQ == kNegInf || wacc == kNegInf) ? kNegInf : logQ + wacc / n;
  }
  return detail::epi_combine(amean, w, m);
}

double epi_G(const SystemConfig& cfg, const CMat& H, std::uint32_t subset,
             const std::vector<double>& q, const std::vector<double>& Q_diag) {
  cfg.validate();
  need_single_antenna(cfg, "epi_G");
  if (cfg.r > 32) throw TooManyAgentsError("epi_G: r > 32");
  if (subset == 0) throw EmptySubsetError("epi_G: empty subset");
  if (cfg.r < 32 && subset >= (1u << cfg.r)) throw BadConfigError("epi_G: subset out of range");
  if (static_cast<int>(q.size()) != cfg.r) throw BadConfigError("epi_G: need one level per agent");
  if (H.rows() != cfg.r || H.cols() != cfg.t)
    throw BadConfigError("epi_G: channel shape does not match the system");
  std::vector<double> p = resolve_power(cfg, Q_diag, "epi_G");
  CMat G = detail::gram_diag(H, p);
  return detail::epi_block_value(H, G, p.data(), subset, q.data(), cfg.t);
}

BoundReport cutset_ergodic(const SystemConfig& cfg, const Ensemble& ens,
                           const std::vector<double>& Q_diag) {
  check_ensemble(cfg, ens, "cutset_ergodic");
  if (cfg.r > 16) throw TooManyAgentsError("cutset_ergodic: r > 16");
  if (cfg.rx_rows() > 64) throw TooManyAgentsError("cutset_ergodic: more than 64 receive rows");
  std::vector<double> p = resolve_power(cfg, Q_diag, "cutset_ergodic");

  const int r = cfg.r, n = ens.size();
  const bool single = cfg.rx_rows() == r;
  const std::uint32_t total = 1u << r;
  std::vector<double> meanld(total, 0.0);
  for (const CMat& H : ens.H) {
    CMat G = detail::gram_diag(H, p);
    for (std::uint32_t S = 1; S < total; ++S) {
      if (single) {
        meanld[S] += detail::subset_logdet(G, S, kOnes.data());
      } else {
        int rows[64], m = 0;
        for (std::uint32_t rest = S; rest != 0; rest &= rest - 1) {
          int a = std::countr_zero(rest), start, len;
          agent_rows(cfg, a, start, len);
          for (int k = 0; k < len; ++k) rows[m++] = start + k;
        }
        CMat Msub = CMat::Identity(m, m);
        for (int ii = 0; ii < m; ++ii)
          for (int jj = 0; jj < m; ++jj) Msub(ii, jj) += G(rows[ii], rows[jj]);
        meanld[S] += detail::logdet_pd_ldlt(Msub);
      }
    }
  }
  double linksAll = 0.0;
  for (double c : cfg.capacities) linksAll += c;
  std::vector<double> lsum(total);
  lsum[0] = 0.0;
  for (std::uint32_t m = 1; m < total; ++m)
    lsum[m] = lsum[m & (m - 1)] + cfg.capacities[std::countr_zero(m)];

  auto f = [&](std::uint32_t S) { return meanld[S] / n + linksAll - lsum[S]; };
  auto res = min_over_subsets(r, [&](std::uint32_t S) { return S == 0 ? linksAll : f(S); });

  BoundReport rep;
  rep.kind = "cutset";
  rep.bound_bits = res.value;
  rep.min_subset = res.mask;
  rep.has_min_subset = true;
  rep.Q_diag = p;
  rep.seed = ens.seed;
  rep.n_samples = n;
  return rep;
}

BoundReport ub_fast(const SystemConfig& cfg, const Ensemble& ens, bool fixed_identity_Q) {
  return ub_fast_impl(cfg, ens, false, fixed_identity_Q);
}

BoundReport ub_fast_partitioned(const SystemConfig& cfg, const Ensemble& ens,
                                bool fixed_identity_Q) {
  return ub_fast_impl(cfg, ens, true, fixed_identity_Q);
}

BoundReport ub_symmetric(const SystemConfig& cfg, const Ensemble& ens) {
  check_ensemble(cfg, ens, "ub_symmetric");
  need_single_antenna(cfg, "ub_symmetric");
  if (!cfg.symmetric_capacity())
    throw BadConfigError("ub_symmetric: needs equal link capacities");
  if (cfg.r > 32) throw TooManyAgentsError("ub_symmetric: r > 32");
  const int r = cfg.r, t = cfg.t, n = ens.size();
  const double C = cfg.capacities[0];

  // size classes: any j agents are alike in distribution, so average every
  // size-j subset when that is cheap and fall back to leading-row prefixes
  // (a single unbiased representative) for large r
  std::vector<std::vector<std::uint32_t>> by_size(r + 1);
  if (r <= 8) {
    for (std::uint32_t mask = 1; mask < (1u << r); ++mask)
      by_size[std::popcount(mask)].push_back(mask);
  } else {
    for (int j = 1; j <= r; ++j)
      by_size[j].push_back(j >= 32 ? 0xFFFFFFFFu : (1u << j) - 1);
  }

  auto value_at = [&](const std::vector<double>& p) {
    std::vector<double> aj(r + 1, 0.0), bj(r + 1, 0.0);
    for (const CMat& H : ens.H) {
      CMat G = detail::gram_diag(H, p);
      for (int j = 1; j <= r; ++j)
        for (std::uint32_t mask : by_size[j]) {
          aj[j] += detail::subset_logdet(G, mask, kOnes.data());
          if (j <= t) acc_sticky(bj[j], detail::subset_logdet_noid(G, mask));
        }
    }
    double best = std::numeric_limits<double>::infinity();
    int bestj = 1;
    for (int j = 1; j <= r; ++j) {
      int cnt = static_cast<int>(by_size[j].size()) * n;
      double a = aj[j] / cnt;
      double b = j <= t ? finish_mean(bj[j], cnt) : kNegInf;
      double term = a / j - log2_sum_exp2(C, b == kNegInf ? kNegInf : b / j);
      if (term < best) {
        best = term;
        bestj = j;
      }
    }
    return std::pair<double, int>(best, bestj);
  };

  RVecX piso = RVecX::Constant(t, cfg.P / t);
  std::vector<double> p = detail::simplex_clip(piso, cfg.P);
  if (r * t <= 64) {  // the input search only pays off for small systems
    auto fp = [&](const RVecX& pp) {
      return value_at(detail::simplex_clip(pp, cfg.P)).first;
    };
    RVecX pw = improve_power(fp, piso, t, cfg.P, 2, std::max(1e-12, 1e-3 * cfg.P));
    p = detail::simplex_clip(pw, cfg.P);
  }
  auto [term, bestj] = value_at(p);

  BoundReport rep;
  rep.kind = "ub_symmetric";
  rep.bound_bits = std::max(0.0, r * C + r * term);
  rep.min_subset = bestj >= 32 ? 0xFFFFFFFFu : (1u << bestj) - 1;
  rep.has_min_subset = true;
  rep.Q_diag = p;
  rep.seed = ens.seed;
  rep.n_samples = n;
  return rep;
}

}  // namespace dmimo
