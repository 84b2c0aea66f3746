#include <algorithm>
#include <cmath>

#include "detail.hpp"
#include "dmimo/rates.hpp"
#include "dmimo/solvers.hpp"
#include "dmimo/util.hpp"

namespace dmimo {

namespace {

// scalar summary of one 2 x t realization under Q = (P/t) I:
// A = (P/t) H H*, a_i = A_ii, det2 = det A, and the shifted determinants
// d1 = det(I + A), d3 = det2 + a1, d4 = det2 + a2
struct SampleGeom {
  double a1, a2, det2, d1, d3, d4, x;
};

SampleGeom geom_of(const CMat& H, double kappa) {
  CMat A = kappa * (H * H.adjoint());
  SampleGeom g;
  g.a1 = A(0, 0).real();
  g.a2 = A(1, 1).real();
  g.det2 = std::max(0.0, g.a1 * g.a2 - std::norm(A(0, 1)));
  g.d1 = 1.0 + g.a1 + g.a2 + g.det2;
  g.d3 = g.det2 + g.a1;
  g.d4 = g.det2 + g.a2;
  g.x = (g.d3 > 0.0 && g.d4 > 0.0) ? g.d1 * g.det2 / (g.d3 * g.d4) : 0.0;
  return g;
}

// joint-decoding water-filling factor, increasing in theta, in [0, 1)
double crossing_factor(const SampleGeom& g, double theta) {
  double b = 1.0 + 2.0 * theta;
  double disc = b * b - 4.0 * theta * (1.0 + theta) * g.x;
  return (b - std::sqrt(std::max(disc, 0.0))) / (2.0 * (1.0 + theta));
}

void q_at_theta(const SampleGeom& g, double theta, double& q1, double& q2) {
  // water-fill both agents jointly; if the weaker one de-activates, re-solve
  // the remaining agent alone; clamp at zero
  bool joint_ok = false;
  if (g.det2 > 1e-300) {
    double F = crossing_factor(g, theta);
    if (F > 0.0) {
      double c1 = -std::log2(g.d4 / g.det2 * F);
      double c2 = -std::log2(g.d3 / g.det2 * F);
      if (c1 >= 0.0 && c2 >= 0.0) {
        q1 = c1;
        q2 = c2;
        joint_ok = true;
      }
    }
  }
  if (!joint_ok) {
    auto solo = [&](double a) {
      if (a <= 0.0 || theta >= a) return 0.0;
      return std::max(0.0, -std::log2(theta / (1.0 + theta) * (1.0 + a) / a));
    };
    if (g.a1 >= g.a2) {
      q1 = solo(g.a1);
      q2 = 0.0;
    } else {
      q1 = 0.0;
      q2 = solo(g.a2);
    }
  }
}

double joint_logdet(const SampleGeom& g, double q1, double q2) {
  double e1 = detail::one_minus_exp2m(q1);
  double e2 = detail::one_minus_exp2m(q2);
  return std::log2(1.0 + e1 * g.a1 + e2 * g.a2 + e1 * e2 * g.det2);
}

void require_two_agent(const SystemConfig& cfg, const Ensemble& ens) {
  cfg.validate();
  if (cfg.r != 2 || cfg.rx_rows() != 2)
    throw BadConfigError("two_agent: needs exactly two single-antenna agents");
  if (!cfg.symmetric_capacity())
    throw BadConfigError("two_agent: needs symmetric link capacities");
  if (ens.rows != 2 || ens.t != cfg.t || ens.size() == 0)
    throw BadConfigError("two_agent: ensemble shape does not match config");
}

}  // namespace

void two_agent_profile(const SystemConfig& cfg, const Ensemble& ens, double theta,
                       std::vector<double>& q1, std::vector<double>& q2) {
  require_two_agent(cfg, ens);
  const int n = ens.size();
  const double kappa = cfg.P / cfg.t;
  q1.resize(n);
  q2.resize(n);
  for (int k = 0; k < n; ++k) {
    SampleGeom g = geom_of(ens.H[k], kappa);
    q_at_theta(g, theta, q1[k], q2[k]);
  }
}

TwoAgentSolution two_agent_solve(const SystemConfig& cfg, const Ensemble& ens) {
  require_two_agent(cfg, ens);
  const int n = ens.size();
  const double kappa = cfg.P / cfg.t;
  const double C = cfg.capacities[0];

  std::vector<SampleGeom> geo(n);
  for (int k = 0; k < n; ++k) geo[k] = geom_of(ens.H[k], kappa);

  // ensemble joint-decoding value minus remaining total link budget; the
  // root is where no-forwarding-surplus and joint-decoding terms cross
  int iterations = 0;
  auto residual_of = [&](double theta, double& mq1, double& mq2) {
    double ld = 0.0, s1 = 0.0, s2 = 0.0;
    for (const SampleGeom& g : geo) {
      double q1, q2;
      q_at_theta(g, theta, q1, q2);
      ld += joint_logdet(g, q1, q2);
      s1 += q1;
      s2 += q2;
    }
    mq1 = s1 / n;
    mq2 = s2 / n;
    return ld / n - (2.0 * C - mq1 - mq2);
  };
  auto residual = [&](double u) {
    double mq1, mq2;
    ++iterations;
    return residual_of(std::exp(u), mq1, mq2);
  };

  double u = bisect_scalar(residual, std::log(1e-8), std::log(1e8), 1e-13);
  double theta = std::exp(u);

  TwoAgentSolution sol;
  sol.theta = theta;
  sol.iterations = iterations;
  two_agent_profile(cfg, ens, theta, sol.q1, sol.q2);
  double mq1, mq2;
  residual_of(theta, mq1, mq2);
  sol.mean_q1 = mq1;
  sol.mean_q2 = mq2;
  sol.rate_bits = (C - mq1) + (C - mq2);
  return sol;
}

}  // namespace dmimo
