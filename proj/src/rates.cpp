#include "dmimo/rates.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "detail.hpp"
#include "dmimo/solvers.hpp"
#include "dmimo/util.hpp"

namespace dmimo {

using detail::gram_diag;
using detail::gram_scaled;
using detail::one_minus_exp2m;
using detail::simplex_clip;
using detail::subset_logdet;

namespace {

void require_single_antenna(const SystemConfig& cfg, const char* who) {
  if (cfg.rx_rows() != cfg.r)
    throw BadConfigError(std::string(who) + ": needs one antenna per agent");
}

void require_matching(const SystemConfig& cfg, const Ensemble& ens, const char* who) {
  cfg.validate();
  if (ens.rows != cfg.rx_rows() || ens.t != cfg.t)
    throw BadConfigError(std::string(who) + ": ensemble shape does not match config");
  if (ens.size() == 0) throw BadConfigError(std::string(who) + ": empty ensemble");
}

void check_profile(const SystemConfig& cfg, const Ensemble& ens, const CompressionProfile& prof,
                   const char* who) {
  if (prof.q.rows() != cfg.r || (prof.q.cols() != 1 && prof.q.cols() != ens.size()))
    throw BadConfigError(std::string(who) + ": profile shape mismatch");
  if ((prof.q.array() < 0.0).any() || !prof.q.allFinite())
    throw BadConfigError(std::string(who) + ": q levels must be finite and >= 0");
}

void check_power(const SystemConfig& cfg, const std::vector<double>& Q_diag, const char* who) {
  if (static_cast<int>(Q_diag.size()) != cfg.t)
    throw BadConfigError(std::string(who) + ": Q_diag size != t");
  double sum = 0.0;
  for (double p : Q_diag) {
    if (p < 0.0) throw BadConfigError(std::string(who) + ": negative power entry");
    sum += p;
  }
  if (sum > cfg.P * (1.0 + 1e-9) + 1e-12)
    throw BadConfigError(std::string(who) + ": power budget exceeded");
}

// E_H log2((2^q - 1)(g + 1) + 1), the forward-link load of one agent
double ec_link_load(double q, const std::vector<double>& gains) {
  double m = std::expm1(q * kLn2);  // 2^q - 1
  double s = 0.0;
  for (double g : gains) s += std::log1p(m * (g + 1.0)) / kLn2;
  return s / static_cast<double>(gains.size());
}

std::vector<double> mean_q_of(const CompressionProfile& prof, int n) {
  std::vector<double> out(prof.q.rows());
  for (int i = 0; i < prof.q.rows(); ++i) {
    if (prof.q.cols() == 1) {
      out[i] = prof.q(i, 0);
    } else {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += prof.q(i, k);
      out[i] = s / n;
    }
  }
  return out;
}

}  // namespace

CompressionProfile CompressionProfile::constant(const std::vector<double>& q_agents) {
  CompressionProfile p;
  p.q = Eigen::MatrixXd(q_agents.size(), 1);
  for (size_t i = 0; i < q_agents.size(); ++i) p.q(static_cast<int>(i), 0) = q_agents[i];
  return p;
}

double CompressionProfile::noise_power(double q_bits) {
  return 1.0 / exp2m1(q_bits);
}

std::string RateReport::to_kv() const {
  std::ostringstream os;
  os.precision(17);
  os << "scheme = " << scheme << "\n";
  os << "rate_bits = " << rate_bits << "\n";
  if (has_min_subset) {
    os << "min_subset = {";
    bool first = true;
    for (int i = 0; i < 32; ++i)
      if (min_subset & (1u << i)) {
        os << (first ? "" : ",") << (i + 1);
        first = false;
      }
    os << "}\n";
  }
  os << "mean_q =";
  for (double v : mean_q) os << " " << v;
  os << "\n";
  os << "Q_diag =";
  for (double v : Q_diag) os << " " << v;
  os << "\n";
  os << "negative_link_budget = " << (negative_link_budget ? 1 : 0) << "\n";
  os << "seed = " << seed << "\n";
  os << "n_samples = " << n_samples << "\n";
  os << "version = " << kVersion << "\n";
  return os.str();
}

// --- elementary compression ---

RateReport ec_rate(const SystemConfig& cfg, const Ensemble& ens,
                   const std::vector<double>& Q_diag, const CompressionProfile& prof) {
  require_matching(cfg, ens, "ec_rate");
  require_single_antenna(cfg, "ec_rate");
  check_power(cfg, Q_diag, "ec_rate");
  check_profile(cfg, ens, prof, "ec_rate");
  const int n = ens.size(), r = cfg.r;

  std::vector<double> link(r, 0.0);
  double value = 0.0;
  std::vector<double> d(r);
  const std::uint32_t full = (r >= 32) ? 0xFFFFFFFFu : ((1u << r) - 1u);
  for (int k = 0; k < n; ++k) {
    CMat G = gram_diag(ens.H[k], Q_diag);
    for (int i = 0; i < r; ++i) {
      double q = prof.at(i, k);
      link[i] += std::log1p(std::expm1(q * kLn2) * (G(i, i).real() + 1.0)) / kLn2;
      d[i] = one_minus_exp2m(q);
    }
    value += subset_logdet(G, full, d.data());
  }
  value /= n;
  for (int i = 0; i < r; ++i) {
    link[i] /= n;
    if (link[i] > cfg.capacities[i] + 1e-6)
      throw ConstraintViolatedError("ec_rate: agent " + std::to_string(i + 1) + " link load " +
                                    std::to_string(link[i]) + " exceeds capacity " +
                                    std::to_string(cfg.capacities[i]));
  }

  RateReport rep;
  rep.scheme = "ec";
  rep.rate_bits = value;
  rep.mean_q = mean_q_of(prof, n);
  rep.Q_diag = Q_diag;
  rep.seed = ens.seed;
  rep.n_samples = n;
  return rep;
}

namespace {

// largest constant q meeting the average link constraint at the given gains
double ec_pin_q(double capacity, const std::vector<double>& gains) {
  if (capacity <= 0.0) return 0.0;
  auto g = [&](double q) { return ec_link_load(q, gains) - capacity; };
  return bisect_scalar(g, 0.0, capacity, 1e-12);
}

}  // namespace

RateReport ec_optimize(const SystemConfig& cfg, const Ensemble& ens) {
  require_matching(cfg, ens, "ec_optimize");
  require_single_antenna(cfg, "ec_optimize");
  const int n = ens.size(), r = cfg.r, t = cfg.t;

  // |H(i,j)|^2 per sample lets every diagonal-Q gain come from one dot product
  std::vector<Eigen::MatrixXd> absH2(n);
  for (int k = 0; k < n; ++k) absH2[k] = ens.H[k].cwiseAbs2();

  std::vector<double> best_q(r, 0.0);
  auto objective_at = [&](const std::vector<double>& p, std::vector<double>* q_out) {
    std::vector<std::vector<double>> gains(r, std::vector<double>(n));
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < r; ++i) {
        double g = 0.0;
        for (int j = 0; j < t; ++j) g += absH2[k](i, j) * p[j];
        gains[i][k] = g;
      }
    std::vector<double> q(r), d(r);
    for (int i = 0; i < r; ++i) q[i] = ec_pin_q(cfg.capacities[i], gains[i]);
    if (q_out) *q_out = q;
    const std::uint32_t full = (r >= 32) ? 0xFFFFFFFFu : ((1u << r) - 1u);
    double value = 0.0;
    for (int i = 0; i < r; ++i) d[i] = one_minus_exp2m(q[i]);
    for (int k = 0; k < n; ++k) value += subset_logdet(gram_diag(ens.H[k], p), full, d.data());
    return value / n;
  };

  std::vector<double> p_best(t, cfg.P / t);
  int winning_start = -1;
  double val;
  if (cfg.symmetric_capacity() && r * t >= 256) {
    // large symmetric systems: isotropic input; the diagonal search would be
    // an O(t) sweep of full-ensemble evaluations for an O(1/n) correction
    val = objective_at(p_best, &best_q);
  } else {
    auto f = [&](const RVecX& x) { return objective_at(simplex_clip(x, cfg.P), nullptr); };
    RVecX lo = RVecX::Zero(t), hi = RVecX::Constant(t, cfg.P);
    BoxMaxOptions opts;
    opts.default_starts = 2;
    RVecX iso = RVecX::Constant(t, cfg.P / t);
    RVecX spike = RVecX::Zero(t);
    spike[0] = cfg.P;
    RVecX taper(t);
    for (int j = 0; j < t; ++j) taper[j] = cfg.P * 2.0 * (t - j) / (t * (t + 1.0));
    opts.extra_starts = {iso, spike, taper};
    opts.max_cycles = 8;
    BoxMaxResult res = maximize_concave_box(f, lo, hi, 1e-7, opts);
    p_best = simplex_clip(res.x, cfg.P);
    winning_start = res.winning_start;
    val = objective_at(p_best, &best_q);
  }

  RateReport rep;
  rep.scheme = "ec";
  rep.rate_bits = val;
  rep.mean_q = best_q;
  rep.Q_diag = p_best;
  rep.winning_start = winning_start;
  rep.seed = ens.seed;
  rep.n_samples = n;
  return rep;
}

double ec_asymptotic_limit(const SystemConfig& cfg) {
  cfg.validate();
  double ct = std::accumulate(cfg.capacities.begin(), cfg.capacities.end(), 0.0);
  return ct * cfg.P / (1.0 + cfg.P);
}

double ceo_asymptotic_limit(const SystemConfig& cfg) { return ec_asymptotic_limit(cfg); }

// --- Wyner-Ziv / CEO evaluations at Q = (P/t) I ---

namespace {

struct CeoContext {
  const SystemConfig* cfg;
  const Ensemble* ens;
  std::vector<CMat> G;  // (P/t) H H* per sample
  int n = 0, r = 0;

  CeoContext(const SystemConfig& c, const Ensemble& e) : cfg(&c), ens(&e) {
    n = e.size();
    r = c.r;
    G.resize(n);
    for (int k = 0; k < n; ++k) G[k] = gram_scaled(e.H[k], c.P / c.t);
  }

  // min over subsets for a constant q vector
  double constant_q_value(const std::vector<double>& q, std::uint32_t* argmask) const {
    std::vector<double> d(r);
    for (int i = 0; i < r; ++i) d[i] = one_minus_exp2m(q[i]);
    auto f = [&](std::uint32_t mask) {
      double links = 0.0;
      for (int i = 0; i < r; ++i)
        if (!(mask & (1u << i))) links += cfg->capacities[i] - q[i];
      double ld = 0.0;
      for (int k = 0; k < n; ++k) ld += subset_logdet(G[k], mask, d.data());
      return links + ld / n;
    };
    SubsetMinResult res = min_over_subsets(r, f);
    if (argmask) *argmask = res.mask;
    return res.value;
  }
};

}  // namespace

RateReport ceo_rate(const SystemConfig& cfg, const Ensemble& ens, const CompressionProfile& prof) {
  require_matching(cfg, ens, "ceo_rate");
  require_single_antenna(cfg, "ceo_rate");
  check_profile(cfg, ens, prof, "ceo_rate");
  const int n = ens.size(), r = cfg.r;
  const double kappa = cfg.P / cfg.t;

  std::vector<double> mean_q = mean_q_of(prof, n);
  std::vector<CMat> G(n);
  for (int k = 0; k < n; ++k) G[k] = gram_scaled(ens.H[k], kappa);
  std::vector<double> d(r);
  auto f = [&](std::uint32_t mask) {
    double links = 0.0;
    for (int i = 0; i < r; ++i)
      if (!(mask & (1u << i))) links += cfg.capacities[i] - mean_q[i];
    double ld = 0.0;
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < r; ++i) d[i] = one_minus_exp2m(prof.at(i, k));
      ld += subset_logdet(G[k], mask, d.data());
    }
    return links + ld / n;
  };
  SubsetMinResult res = min_over_subsets(r, f);

  RateReport rep;
  rep.scheme = "ceo";
  rep.rate_bits = res.value;
  rep.min_subset = res.mask;
  rep.has_min_subset = true;
  rep.mean_q = mean_q;
  rep.Q_diag.assign(cfg.t, kappa);
  for (int i = 0; i < r; ++i)
    if (mean_q[i] > cfg.capacities[i]) rep.negative_link_budget = true;
  rep.seed = ens.seed;
  rep.n_samples = n;
  return rep;
}

namespace {

// Ensemble-coupled refinement state: cached per-subset log-det sums so a
// single-sample move only touches the subsets containing the moved agent.
struct JointState {
  const CeoContext& ctx;
  double qmax_headroom = 10.0;
  Eigen::MatrixXd q;                        // r x n
  std::vector<std::vector<double>> ld;      // [mask][sample]
  std::vector<double> ldsum;                // [mask]
  std::vector<double> qsum;                 // [agent]
  std::uint32_t nmask;

  explicit JointState(const CeoContext& c, const std::vector<double>& q0) : ctx(c) {
    const int r = c.r, n = c.n;
    nmask = 1u << r;
    q = Eigen::MatrixXd(r, n);
    for (int i = 0; i < r; ++i) q.row(i).setConstant(q0[i]);
    ld.assign(nmask, std::vector<double>(n, 0.0));
    rebuild();
  }

  void rebuild() {
    const int r = ctx.r, n = ctx.n;
    std::vector<double> d(r);
    ldsum.assign(nmask, 0.0);
    qsum.assign(r, 0.0);
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < r; ++i) d[i] = one_minus_exp2m(q(i, k));
      for (std::uint32_t mask = 1; mask < nmask; ++mask) {
        ld[mask][k] = subset_logdet(ctx.G[k], mask, d.data());
        ldsum[mask] += ld[mask][k];
      }
    }
    for (int i = 0; i < r; ++i)
      for (int k = 0; k < n; ++k) qsum[i] += q(i, k);
  }

  double qmax(int i) const { return ctx.cfg->capacities[i] + qmax_headroom; }

  double objective() const {
    const int r = ctx.r, n = ctx.n;
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < nmask; ++mask) {
      double v = ldsum[mask] / n;
      for (int i = 0; i < r; ++i)
        if (!(mask & (1u << i))) v += ctx.cfg->capacities[i] - qsum[i] / n;
      best = std::min(best, v);
    }
    return best;
  }

  // objective if q(agent, k) moved to qn; scratch holds per-mask log-dets
  double probe(int agent, int k, double qn, std::vector<double>& scratch) const {
    const int r = ctx.r, n = ctx.n;
    double dq = qn - q(agent, k);
    std::vector<double> d(r);
    for (int i = 0; i < r; ++i) d[i] = one_minus_exp2m(i == agent ? qn : q(i, k));
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < nmask; ++mask) {
      double v;
      if (mask & (1u << agent)) {
        scratch[mask] = subset_logdet(ctx.G[k], mask, d.data());
        v = (ldsum[mask] - ld[mask][k] + scratch[mask]) / n;
      } else {
        v = ldsum[mask] / n;
      }
      for (int i = 0; i < r; ++i)
        if (!(mask & (1u << i))) v += ctx.cfg->capacities[i] - (qsum[i] + (i == agent ? dq : 0.0)) / n;
      best = std::min(best, v);
    }
    return best;
  }

  void commit(int agent, int k, double qn, const std::vector<double>& scratch) {
    double dq = qn - q(agent, k);
    for (std::uint32_t mask = 1; mask < nmask; ++mask)
      if (mask & (1u << agent)) {
        ldsum[mask] += scratch[mask] - ld[mask][k];
        ld[mask][k] = scratch[mask];
      }
    qsum[agent] += dq;
    q(agent, k) = qn;
  }
};

}  // namespace

RateReport ceo_optimize_joint(const SystemConfig& cfg, const Ensemble& ens) {
  require_matching(cfg, ens, "ceo_optimize_joint");
  require_single_antenna(cfg, "ceo_optimize_joint");
  if (cfg.r > 16) throw TooManyAgentsError("ceo_optimize_joint: r > 16");
  CeoContext ctx(cfg, ens);
  const int r = cfg.r, n = ens.size();

  // stage A: constant q per agent
  auto fconst = [&](const RVecX& x) {
    std::vector<double> q(x.data(), x.data() + r);
    return ctx.constant_q_value(q, nullptr);
  };
  RVecX lo = RVecX::Zero(r), hi(r);
  for (int i = 0; i < r; ++i) hi[i] = cfg.capacities[i] + 10.0;
  // shared-level optimum first: coordinate ascent can stall on the max-min
  // ridge, while the one-dimensional shared search lands right on it
  std::vector<double> qs(r);
  auto fshared = [&](double s) {
    std::fill(qs.begin(), qs.end(), s);
    return ctx.constant_q_value(qs, nullptr);
  };
  double sstar = golden_max(fshared, 0.0, hi.maxCoeff(), 1e-9);
  BoxMaxOptions opts;
  opts.pair_directions = true;
  opts.default_starts = 2;
  RVecX capv(r);
  for (int i = 0; i < r; ++i) capv[i] = cfg.capacities[i];
  opts.extra_starts = {capv, 0.5 * capv, RVecX::Constant(r, sstar)};
  opts.max_cycles = 40;
  BoxMaxResult cres = maximize_concave_box(fconst, lo, hi, 1e-9, opts);
  std::vector<double> q0(cres.x.data(), cres.x.data() + r);

  // stage B: per-sample refinement
  int cycles_used = 0;
  JointState st(ctx, q0);
  if (r <= 8 && r * n <= 120000) {
    // B1: water-level allocation. With the no-forwarding and all-agents terms
    // both active, the optimal per-sample levels maximize ld_full(q) - theta *
    // sum(q) at one shared price theta, and the crossing of the two terms pins
    // theta. Per-sample maximization is smooth and concave: coordinate golden.
    {
      const std::uint32_t full = st.nmask - 1;
      Eigen::MatrixXd qw = st.q;
      std::vector<double> dv(r);
      auto solve_theta = [&](double theta, double& ldm, double& qtot) {
        ldm = 0.0;
        qtot = 0.0;
        for (int k = 0; k < n; ++k) {
          double* qk = qw.data() + static_cast<std::ptrdiff_t>(k) * r;
          auto fval = [&]() {
            double s = 0.0;
            for (int i = 0; i < r; ++i) {
              dv[i] = one_minus_exp2m(qk[i]);
              s += qk[i];
            }
            return subset_logdet(ctx.G[k], full, dv.data()) - theta * s;
          };
          double fcur = fval();
          for (int cycle = 0; cycle < 6; ++cycle) {
            double before = fcur;
            for (int i = 0; i < r; ++i) {
              double save = qk[i];
              auto g = [&](double x) {
                qk[i] = x;
                double v = fval();
                qk[i] = save;
                return v;
              };
              double xb = golden_max(g, 0.0, st.qmax(i), 1e-8);
              double fb = g(xb);
              if (fb > fcur) {
                qk[i] = xb;
                fcur = fb;
              }
            }
            if (fcur - before < 1e-10) break;
          }
          for (int i = 0; i < r; ++i) {
            dv[i] = one_minus_exp2m(qk[i]);
            qtot += qk[i];
          }
          ldm += subset_logdet(ctx.G[k], full, dv.data());
        }
        ldm /= n;
        qtot /= n;
      };
      double csum = 0.0;
      for (int i = 0; i < r; ++i) csum += cfg.capacities[i];
      auto phi = [&](double u) {
        double ldm, qtot;
        solve_theta(std::exp(u), ldm, qtot);
        return ldm - (csum - qtot);
      };
      double ulo = std::log(1e-8), uhi = std::log(1e8);
      if (phi(ulo) > 0.0 && phi(uhi) < 0.0) {
        for (int it = 0; it < 30; ++it) {
          double um = 0.5 * (ulo + uhi);
          (phi(um) > 0.0 ? ulo : uhi) = um;
        }
        phi(0.5 * (ulo + uhi));  // leave qw at the crossing allocation
        double base = st.objective();
        st.q = qw;
        st.rebuild();
        if (st.objective() < base) {  // another subset bites; keep constant start
          for (int i = 0; i < r; ++i) st.q.row(i).setConstant(q0[i]);
          st.rebuild();
        }
      }
    }

    // B2: polish (uniform shifts, single moves, transfers)
    std::vector<double> scratch(st.nmask, 0.0);
    double cur = st.objective();
    const int max_cycles = 80;
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
      double before = cur;

      // per-agent uniform shift: follows the budget/joint-decoding crossing
      for (int i = 0; i < r; ++i) {
        double smin = -st.q.row(i).minCoeff();
        double smax = st.qmax(i) - st.q.row(i).maxCoeff();
        if (smax - smin < 1e-12) continue;
        JointState* stp = &st;
        auto g = [stp, i](double s) {
          // evaluate by temporary full rebuild on a copy is too costly; use
          // link-shift plus per-sample recompute for masks containing i
          const int rr = stp->ctx.r, nn = stp->ctx.n;
          std::vector<double> d(rr);
          std::vector<double> sums(stp->nmask, 0.0);
          for (int k = 0; k < nn; ++k) {
            for (int a = 0; a < rr; ++a)
              d[a] = one_minus_exp2m(a == i ? stp->q(a, k) + s : stp->q(a, k));
            for (std::uint32_t mask = 1; mask < stp->nmask; ++mask)
              if (mask & (1u << i)) sums[mask] += subset_logdet(stp->ctx.G[k], mask, d.data());
          }
          double best = std::numeric_limits<double>::infinity();
          for (std::uint32_t mask = 0; mask < stp->nmask; ++mask) {
            double v = (mask & (1u << i)) ? sums[mask] / nn : stp->ldsum[mask] / nn;
            for (int a = 0; a < rr; ++a)
              if (!(mask & (1u << a)))
                v += stp->ctx.cfg->capacities[a] -
                     (stp->qsum[a] + (a == i ? s * nn : 0.0)) / nn;
            best = std::min(best, v);
          }
          return best;
        };
        double sbest = golden_max(g, smin, smax, 1e-7 * (smax - smin) + 1e-12);
        double fbest = g(sbest);
        if (fbest > cur + 1e-15) {
          for (int k = 0; k < n; ++k)
            st.q(i, k) = std::clamp(st.q(i, k) + sbest, 0.0, st.qmax(i));
          st.rebuild();
          cur = st.objective();
        }
      }

      // single-sample coordinate moves
      for (int i = 0; i < r; ++i) {
        for (int k = 0; k < n; ++k) {
          auto g = [&](double qn) { return st.probe(i, k, qn, scratch); };
          double qn = golden_max(g, 0.0, st.qmax(i), 1e-6);
          double fn = st.probe(i, k, qn, scratch);  // also refreshes scratch at qn
          if (fn > cur + 1e-15) {
            st.commit(i, k, qn, scratch);
            cur = fn;
          }
        }
      }

      // budget-neutral transfers between samples of one agent
      int stride = 1 + (cycle % 7);
      for (int i = 0; i < r; ++i) {
        for (int k = 0; k < n; ++k) {
          int l = (k + stride) % n;
          if (l == k) continue;
          double qk = st.q(i, k), ql = st.q(i, l);
          double smin = std::max(-qk, ql - st.qmax(i));
          double smax = std::min(st.qmax(i) - qk, ql);
          if (smax - smin < 1e-12) continue;
          auto g = [&](double s) {
            // move s from sample l to sample k; links unchanged
            const int rr = st.ctx.r;
            std::vector<double> dk(rr), dl(rr);
            for (int a = 0; a < rr; ++a) {
              dk[a] = one_minus_exp2m(a == i ? qk + s : st.q(a, k));
              dl[a] = one_minus_exp2m(a == i ? ql - s : st.q(a, l));
            }
            double best = std::numeric_limits<double>::infinity();
            for (std::uint32_t mask = 0; mask < st.nmask; ++mask) {
              double v = st.ldsum[mask];
              if (mask & (1u << i)) {
                v += subset_logdet(st.ctx.G[k], mask, dk.data()) - st.ld[mask][k];
                v += subset_logdet(st.ctx.G[l], mask, dl.data()) - st.ld[mask][l];
              }
              v /= st.ctx.n;
              for (int a = 0; a < rr; ++a)
                if (!(mask & (1u << a))) v += st.ctx.cfg->capacities[a] - st.qsum[a] / st.ctx.n;
              best = std::min(best, v);
            }
            return best;
          };
          double sb = golden_max(g, smin, smax, 1e-6);
          double fb = g(sb);
          if (fb > cur + 1e-15) {
            std::vector<double> d(r);
            st.q(i, k) = qk + sb;
            st.q(i, l) = ql - sb;
            for (std::uint32_t mask = 1; mask < st.nmask; ++mask)
              if (mask & (1u << i)) {
                for (int kk : {k, l}) {
                  for (int a = 0; a < r; ++a) d[a] = one_minus_exp2m(st.q(a, kk));
                  double nv = subset_logdet(st.ctx.G[kk], mask, d.data());
                  st.ldsum[mask] += nv - st.ld[mask][kk];
                  st.ld[mask][kk] = nv;
                }
              }
            cur = fb;
          }
        }
      }

      st.rebuild();  // shed accumulated drift
      cur = st.objective();
      ++cycles_used;
      if (cur - before < 1e-8) break;
    }
  }

  // final exact evaluation
  double final_value;
  std::uint32_t argmask = 0;
  {
    const std::uint32_t nmask = 1u << r;
    std::vector<double> d(r);
    std::vector<double> sums(nmask, 0.0);
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < r; ++i) d[i] = one_minus_exp2m(st.q(i, k));
      for (std::uint32_t mask = 1; mask < nmask; ++mask)
        sums[mask] += subset_logdet(ctx.G[k], mask, d.data());
    }
    auto f = [&](std::uint32_t mask) {
      double v = sums[mask] / n;
      for (int i = 0; i < r; ++i)
        if (!(mask & (1u << i))) v += cfg.capacities[i] - st.qsum[i] / n;
      return v;
    };
    SubsetMinResult res = min_over_subsets(r, f);
    final_value = res.value;
    argmask = res.mask;
  }

  RateReport rep;
  rep.scheme = "ceo_joint";
  rep.rate_bits = final_value;
  rep.min_subset = argmask;
  rep.has_min_subset = true;
  rep.mean_q.resize(r);
  for (int i = 0; i < r; ++i) rep.mean_q[i] = st.qsum[i] / n;
  rep.Q_diag.assign(cfg.t, cfg.P / cfg.t);
  rep.winning_start = cres.winning_start;
  rep.iterations = cycles_used;
  for (int i = 0; i < r; ++i)
    if (rep.mean_q[i] > cfg.capacities[i]) rep.negative_link_budget = true;
  rep.seed = ens.seed;
  rep.n_samples = n;
  return rep;
}

namespace {

// inner per-sample max-min over q at fixed gains; coordinate + pair ascent
double per_channel_inner(const SystemConfig& cfg, const CMat& G, std::vector<double>* q_out) {
  const int r = cfg.r;
  const std::uint32_t nmask = 1u << r;
  std::vector<double> d(r);
  auto value = [&](const std::vector<double>& q) {
    for (int i = 0; i < r; ++i) d[i] = one_minus_exp2m(q[i]);
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < nmask; ++mask) {
      double v = subset_logdet(G, mask, d.data());
      for (int i = 0; i < r; ++i)
        if (!(mask & (1u << i))) v += cfg.capacities[i] - q[i];
      best = std::min(best, v);
    }
    return best;
  };

  std::vector<double> qmax(r);
  for (int i = 0; i < r; ++i) qmax[i] = cfg.capacities[i] + 10.0;

  // start at the no-binning pin: per-sample link equality
  std::vector<double> q(r), qbest(r);
  for (int i = 0; i < r; ++i) {
    double g = G(i, i).real();
    q[i] = std::min(qmax[i], std::log2(1.0 + (std::exp2(cfg.capacities[i]) - 1.0) / (1.0 + g)));
  }
  double fbest = -std::numeric_limits<double>::infinity();
  for (int start = 0; start < 2; ++start) {
    if (start == 1)
      for (int i = 0; i < r; ++i) q[i] = cfg.capacities[i];
    double cur = value(q);
    for (int cycle = 0; cycle < 6; ++cycle) {
      double before = cur;
      auto line = [&](auto setter, double smin, double smax) {
        auto g = [&](double s) {
          std::vector<double> qq = q;
          setter(qq, s);
          return value(qq);
        };
        double sb = golden_max(g, smin, smax, 1e-7);
        double fb = g(sb);
        if (fb > cur) {
          setter(q, sb);
          cur = fb;
        }
      };
      for (int i = 0; i < r; ++i)
        line([&, i](std::vector<double>& qq, double s) { qq[i] = std::clamp(qq[i] + s, 0.0, qmax[i]); },
             -q[i], qmax[i] - q[i]);
      for (int i = 0; i < r; ++i)
        for (int j = i + 1; j < r; ++j) {
          line(
              [&, i, j](std::vector<double>& qq, double s) {
                qq[i] = std::clamp(qq[i] + s, 0.0, qmax[i]);
                qq[j] = std::clamp(qq[j] - s, 0.0, qmax[j]);
              },
              std::max(-q[i], q[j] - qmax[j]), std::min(qmax[i] - q[i], q[j]));
          line(
              [&, i, j](std::vector<double>& qq, double s) {
                qq[i] = std::clamp(qq[i] + s, 0.0, qmax[i]);
                qq[j] = std::clamp(qq[j] + s, 0.0, qmax[j]);
              },
              std::max(-q[i], -q[j]), std::min(qmax[i] - q[i], qmax[j] - q[j]));
        }
      if (cur - before < 1e-9) break;
    }
    if (cur > fbest) {
      fbest = cur;
      qbest = q;
    }
  }
  if (q_out) *q_out = qbest;
  return fbest;
}

}  // namespace

RateReport ceo_optimize_per_channel(const SystemConfig& cfg, const Ensemble& ens) {
  require_matching(cfg, ens, "ceo_optimize_per_channel");
  require_single_antenna(cfg, "ceo_optimize_per_channel");
  if (cfg.r > 16) throw TooManyAgentsError("ceo_optimize_per_channel: r > 16");
  const int n = ens.size(), t = cfg.t, r = cfg.r;

  auto value_at = [&](const std::vector<double>& p, std::vector<double>* mean_q) {
    double s = 0.0;
    std::vector<double> mq(r, 0.0), q;
    for (int k = 0; k < n; ++k) {
      s += per_channel_inner(cfg, gram_diag(ens.H[k], p), mean_q ? &q : nullptr);
      if (mean_q)
        for (int i = 0; i < r; ++i) mq[i] += q[i];
    }
    if (mean_q) {
      for (double& v : mq) v /= n;
      *mean_q = mq;
    }
    return s / n;
  };

  auto f = [&](const RVecX& x) { return value_at(simplex_clip(x, cfg.P), nullptr); };
  RVecX lo = RVecX::Zero(t), hi = RVecX::Constant(t, cfg.P);
  BoxMaxOptions opts;
  opts.default_starts = 0;
  RVecX iso = RVecX::Constant(t, cfg.P / t);
  RVecX skew(t);
  for (int j = 0; j < t; ++j) skew[j] = cfg.P * (j + 1) * 2.0 / (t * (t + 1.0));
  opts.extra_starts = {iso, skew};
  opts.max_cycles = 2;
  BoxMaxResult res = maximize_concave_box(f, lo, hi, 1e-6, opts);
  std::vector<double> p = simplex_clip(res.x, cfg.P);

  std::vector<double> mean_q;
  double val = value_at(p, &mean_q);

  RateReport rep;
  rep.scheme = "ceo_per_channel";
  rep.rate_bits = val;
  rep.mean_q = mean_q;
  rep.Q_diag = p;
  rep.winning_start = res.winning_start;
  rep.seed = ens.seed;
  rep.n_samples = n;
  return rep;
}

RateReport ceo_symmetric_constant_q(const SystemConfig& cfg, const Ensemble& ens) {
  require_matching(cfg, ens, "ceo_symmetric_constant_q");
  require_single_antenna(cfg, "ceo_symmetric_constant_q");
  if (!cfg.symmetric_capacity())
    throw BadConfigError("ceo_symmetric_constant_q: capacities must be symmetric");
  const int n = ens.size(), r = cfg.r;
  const double C = cfg.capacities[0];
  const double kappa = cfg.P / cfg.t;

  double qstar = 0.0, val = 0.0;
  if (r <= 16) {
    // exact subset minimum at a shared level
    CeoContext ctx(cfg, ens);
    std::vector<double> qv(r);
    auto value = [&](double q) {
      std::fill(qv.begin(), qv.end(), q);
      return ctx.constant_q_value(qv, nullptr);
    };
    qstar = golden_max(value, 0.0, C + 10.0, 1e-9);
    val = value(qstar);
  } else {
    // large r: one representative subset per size (leading j rows); with
    // symmetric links and i.i.d. rows only the size matters in expectation
    std::vector<std::vector<RVec>> lam(n);
    for (int k = 0; k < n; ++k) {
      lam[k].resize(r + 1);
      for (int j = 1; j <= r; ++j) {
        CMat G = kappa * (ens.H[k].topRows(j) * ens.H[k].topRows(j).adjoint());
        Eigen::SelfAdjointEigenSolver<CMat> es(G, Eigen::EigenvaluesOnly);
        lam[k][j] = es.eigenvalues();
      }
    }
    auto value = [&](double q) {
      double dcoef = one_minus_exp2m(q);
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j <= r; ++j) {
        double v = (r - j) * (C - q);
        if (j > 0) {
          double ld = 0.0;
          for (int k = 0; k < n; ++k)
            for (int e = 0; e < j; ++e) ld += log2_1p(std::max(0.0, lam[k][j][e]) * dcoef);
          v += ld / n;
        }
        best = std::min(best, v);
      }
      return best;
    };
    qstar = golden_max(value, 0.0, C + 10.0, 1e-9);
    val = value(qstar);
  }

  RateReport rep;
  rep.scheme = "ceo_symmetric";
  rep.rate_bits = val;
  rep.mean_q.assign(r, qstar);
  rep.Q_diag.assign(cfg.t, kappa);
  rep.seed = ens.seed;
  rep.n_samples = n;
  return rep;
}

// --- multi-antenna agents ---

RateReport mimo_agents_rate(const SystemConfig& cfg, const Ensemble& ens,
                            const std::vector<std::vector<CMat>>& Lambda) {
  require_matching(cfg, ens, "mimo_agents_rate");
  if (cfg.r > 16) throw TooManyAgentsError("mimo_agents_rate: r > 16");
  const int n = ens.size(), r = cfg.r, t = cfg.t;
  if (static_cast<int>(Lambda.size()) != r)
    throw BadConfigError("mimo_agents_rate: Lambda needs one entry per agent");
  for (const auto& per_agent : Lambda)
    if (per_agent.size() != 1 && static_cast<int>(per_agent.size()) != n)
      throw BadConfigError("mimo_agents_rate: Lambda[i] must hold 1 or n matrices");

  // per sample: effective rows Gamma_i u_i, per-agent forwarded bits, weights
  std::vector<double> fwd(r, 0.0);
  std::vector<std::vector<CMat>> weighted_rows(n);  // per sample, per agent: W^(1/2) Gamma u
  for (int k = 0; k < n; ++k) {
    weighted_rows[k].resize(r);
    for (int i = 0; i < r; ++i) {
      int start, len;
      agent_rows(cfg, i, start, len);
      CMat Hi = ens.H[k].middleRows(start, len);
      SvdResult sv = svd(Hi);
      int m = 0;
      double smax = sv.s.size() ? sv.s[0] : 0.0;
      for (int e = 0; e < sv.s.size(); ++e)
        if (sv.s[e] > 1e-12 * std::max(1.0, smax)) ++m;
      const CMat& L = Lambda[i].size() == 1 ? Lambda[i][0] : Lambda[i][k];
      if (L.rows() != m || L.cols() != m)
        throw BadConfigError("mimo_agents_rate: Lambda[" + std::to_string(i) +
                             "] is " + std::to_string(L.rows()) + "x" + std::to_string(L.cols()) +
                             ", expected " + std::to_string(m));
      Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (L + L.adjoint()));
      double tol = 1e-9 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
      CMat half = CMat::Zero(m, m);  // (I + Lambda)^(-1/2)
      for (int e = 0; e < m; ++e) {
        double mu = es.eigenvalues()[e];
        if (mu < -tol) throw SingularLambdaError("mimo_agents_rate: Lambda not PSD");
        if (mu <= 1e-300)
          throw SingularLambdaError("mimo_agents_rate: singular Lambda needs an infinite link");
        fwd[i] += log2_1p(1.0 / mu) / n;
        half.noalias() += (1.0 / std::sqrt(1.0 + mu)) *
                          (es.eigenvectors().col(e) * es.eigenvectors().col(e).adjoint());
      }
      CMat rows(m, t);
      for (int e = 0; e < m; ++e) rows.row(e) = sv.s[e] * sv.Vh.row(e);
      weighted_rows[k][i] = half * rows;
    }
  }

  const double kappa = cfg.P / t;
  auto f = [&](std::uint32_t mask) {
    double links = 0.0;
    for (int i = 0; i < r; ++i)
      if (!(mask & (1u << i))) links += cfg.capacities[i] - fwd[i];
    double ld = 0.0;
    for (int k = 0; k < n; ++k) {
      int mtot = 0;
      for (int i = 0; i < r; ++i)
        if (mask & (1u << i)) mtot += static_cast<int>(weighted_rows[k][i].rows());
      if (mtot == 0) continue;
      CMat X(mtot, t);
      int at = 0;
      for (int i = 0; i < r; ++i)
        if (mask & (1u << i)) {
          X.middleRows(at, weighted_rows[k][i].rows()) = weighted_rows[k][i];
          at += static_cast<int>(weighted_rows[k][i].rows());
        }
      ld += detail::logdet_pd_ldlt(CMat::Identity(mtot, mtot) + kappa * (X * X.adjoint()));
    }
    return links + ld / n;
  };
  SubsetMinResult res = min_over_subsets(r, f);

  RateReport rep;
  rep.scheme = "ceo_mimo";
  rep.rate_bits = res.value;
  rep.min_subset = res.mask;
  rep.has_min_subset = true;
  rep.mean_q = fwd;
  rep.Q_diag.assign(t, kappa);
  rep.seed = ens.seed;
  rep.n_samples = n;
  return rep;
}

// --- dirty-paper evaluation ---

RateReport dpc_rate_eval(const SystemConfig& cfg, const Ensemble& ens, const DpcParams& p) {
  require_matching(cfg, ens, "dpc_rate_eval");
  require_single_antenna(cfg, "dpc_rate_eval");
  if (cfg.r > 16) throw TooManyAgentsError("dpc_rate_eval: r > 16");
  const int n = ens.size(), r = cfg.r, t = cfg.t;

  std::vector<int> seen(r, 0);
  if (static_cast<int>(p.order.size()) != r) throw BadConfigError("dpc_rate_eval: order size != r");
  for (int i : p.order) {
    if (i < 0 || i >= r || seen[i]) throw BadConfigError("dpc_rate_eval: order is not a permutation");
    seen[i] = 1;
  }
  if (p.Q.size() != 1 && static_cast<int>(p.Q.size()) != n)
    throw BadConfigError("dpc_rate_eval: Q must hold 1 or n matrices");
  if (static_cast<int>(p.B.size()) != r) throw BadConfigError("dpc_rate_eval: B needs r entries");
  if (p.q.rows() != r || (p.q.cols() != 1 && p.q.cols() != n))
    throw BadConfigError("dpc_rate_eval: q shape mismatch");

  auto psd_floor = [](const CMat& M, const char* who, int sample) {
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (M + M.adjoint()), Eigen::EigenvaluesOnly);
    double tol = 1e-8 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -tol)
      throw InfeasibleCovarianceError(std::string(who) + " not PSD at sample " +
                                      std::to_string(sample));
  };

  // feasibility and average power
  double mean_tr = 0.0;
  for (int k = 0; k < n; ++k) {
    const CMat& Qk = p.Q.size() == 1 ? p.Q[0] : p.Q[k];
    if (Qk.rows() != t || Qk.cols() != t) throw BadConfigError("dpc_rate_eval: Q must be t x t");
    psd_floor(Qk, "dpc_rate_eval: Q", k);
    CMat rem = Qk;
    for (int i = 0; i < r; ++i) {
      const CMat& Bik = p.B[i].size() == 1 ? p.B[i][0] : p.B[i][k];
      if (Bik.rows() != t || Bik.cols() != t) throw BadConfigError("dpc_rate_eval: B must be t x t");
      psd_floor(Bik, "dpc_rate_eval: B", k);
      rem -= Bik;
    }
    psd_floor(rem, "dpc_rate_eval: Q - sum B", k);
    mean_tr += Qk.trace().real();
  }
  if (mean_tr / n > cfg.P * (1.0 + 1e-9))
    throw InfeasibleCovarianceError("dpc_rate_eval: average trace exceeds P");

  // position of each agent in the encoding order
  std::vector<int> pos(r);
  for (int idx = 0; idx < r; ++idx) pos[p.order[idx]] = idx;

  std::vector<double> mean_q = [&] {
    std::vector<double> out(r, 0.0);
    for (int i = 0; i < r; ++i)
      for (int k = 0; k < n; ++k) out[i] += (p.q.cols() == 1 ? p.q(i, 0) : p.q(i, k)) / n;
    return out;
  }();

  // per-sample, per-mask contributions accumulated once
  const std::uint32_t nmask = 1u << r;
  std::vector<double> acc(nmask, 0.0);
  std::vector<double> d(r);
  for (int k = 0; k < n; ++k) {
    const CMat& Qk = p.Q.size() == 1 ? p.Q[0] : p.Q[k];
    CMat common = Qk;  // Q - sum_j B_j
    for (int i = 0; i < r; ++i) common -= (p.B[i].size() == 1 ? p.B[i][0] : p.B[i][k]);
    for (int i = 0; i < r; ++i) d[i] = one_minus_exp2m(p.q.cols() == 1 ? p.q(i, 0) : p.q(i, k));

    // private-message terms per agent, independent of the subset
    std::vector<double> priv(r, 0.0);
    std::vector<CMat> pred_removed(r);  // Q - sum over strict predecessors
    {
      CMat run = Qk;
      for (int idx = 0; idx < r; ++idx) {
        int agent = p.order[idx];
        pred_removed[agent] = run;
        run -= (p.B[agent].size() == 1 ? p.B[agent][0] : p.B[agent][k]);
      }
    }
    for (int i = 0; i < r; ++i) {
      const CMat& Bi = p.B[i].size() == 1 ? p.B[i][0] : p.B[i][k];
      auto row = ens.H[k].row(i);
      double num = 1.0 + (row * pred_removed[i] * row.adjoint())(0, 0).real();
      double den = 1.0 + (row * (pred_removed[i] - Bi) * row.adjoint())(0, 0).real();
      priv[i] = std::log2(std::max(num, 1e-300)) - std::log2(std::max(den, 1e-300));
    }

    CMat Gc = ens.H[k] * common * ens.H[k].adjoint();
    for (std::uint32_t mask = 0; mask < nmask; ++mask) {
      // mask = S (agents whose links carry residual compression bits)
      std::uint32_t comp = ~mask & (nmask - 1u);
      double v = subset_logdet(Gc, comp, d.data());
      for (int i = 0; i < r; ++i)
        if (comp & (1u << i)) v += priv[i];
      acc[mask] += v;
    }
  }

  auto f = [&](std::uint32_t mask) {
    double v = acc[mask] / n;
    for (int i = 0; i < r; ++i)
      if (mask & (1u << i)) v += cfg.capacities[i] - mean_q[i];
    return v;
  };
  SubsetMinResult res = min_over_subsets(r, f);

  RateReport rep;
  rep.scheme = "dpc";
  rep.rate_bits = res.value;
  rep.min_subset = res.mask;
  rep.has_min_subset = true;
  rep.mean_q = mean_q;
  rep.seed = ens.seed;
  rep.n_samples = n;
  return rep;
}

}  // namespace dmimo
