#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmimo/channel.hpp"
#include "dmimo/linalg.hpp"

namespace dmimo {

struct ConstraintViolatedError : std::runtime_error {
  explicit ConstraintViolatedError(const std::string& what) : std::runtime_error(what) {}
};

struct SingularLambdaError : std::runtime_error {
  explicit SingularLambdaError(const std::string& what) : std::runtime_error(what) {}
};

struct InfeasibleCovarianceError : std::runtime_error {
  explicit InfeasibleCovarianceError(const std::string& what) : std::runtime_error(what) {}
};

// Per-agent, per-sample compression levels q >= 0 in bits. One column per
// ensemble sample, or a single column broadcast across the ensemble.
struct CompressionProfile {
  Eigen::MatrixXd q;  // r x n or r x 1

  double at(int agent, int sample) const {
    return q.cols() == 1 ? q(agent, 0) : q(agent, sample);
  }
  static CompressionProfile constant(const std::vector<double>& q_agents);
  // quantization noise power 1/(2^q - 1); +inf at q = 0
  static double noise_power(double q_bits);
};

struct RateReport {
  std::string scheme;
  double rate_bits = 0.0;
  std::uint32_t min_subset = 0;     // bitmask over agents, valid if has_min_subset
  bool has_min_subset = false;
  std::vector<double> mean_q;       // ensemble-average q per agent
  std::vector<double> Q_diag;       // transmit power per antenna
  bool negative_link_budget = false;
  int winning_start = -1;
  int iterations = 0;
  std::uint64_t seed = 0;
  int n_samples = 0;

  std::string to_kv() const;  // flat key = value lines
};

// --- elementary compression (quantize-and-forward without binning) ---

// E_H log2 det(I + diag(1 - 2^-q_i) H Q H*) subject to the per-agent link
// constraint E_H log2((2^q_i - 1)(H_i Q H_i* + 1) + 1) <= C_i (+1e-6 slack).
RateReport ec_rate(const SystemConfig& cfg, const Ensemble& ens,
                   const std::vector<double>& Q_diag, const CompressionProfile& prof);

// Maximizes ec_rate over diagonal Q (trace <= P) and constant-per-agent q
// pinned by the link constraint (which is monotone in q).
RateReport ec_optimize(const SystemConfig& cfg, const Ensemble& ens);

// Large-system limit of both compression schemes: C_total * P / (1 + P).
double ec_asymptotic_limit(const SystemConfig& cfg);
double ceo_asymptotic_limit(const SystemConfig& cfg);

// --- distributed Wyner-Ziv (binning) evaluations, Q = (P/t) I ---

// min over subsets S of sum_{i not in S} (C_i - E q_i)
//                    + E_H log2 det(I + (P/t) diag(1-2^-q_i)_S H_S H_S*)
RateReport ceo_rate(const SystemConfig& cfg, const Ensemble& ens,
                    const CompressionProfile& prof);

// Joint optimization of per-sample q (ensemble-coupled max-min); warm-started
// from the constant-q optimum, then refined with per-sample moves.
RateReport ceo_optimize_joint(const SystemConfig& cfg, const Ensemble& ens);

// One codebook per fading state: per-sample inner max-min over q, averaged,
// with one diagonal Q searched for the whole ensemble.
RateReport ceo_optimize_per_channel(const SystemConfig& cfg, const Ensemble& ens);

// Constant shared q for symmetric capacities with the subset minimum taken
// over row-prefix subsets of each size; usable beyond the 2^r enumeration.
RateReport ceo_symmetric_constant_q(const SystemConfig& cfg, const Ensemble& ens);

// --- two-agent symmetric closed form ---

struct TwoAgentSolution {
  double theta = 0.0;       // water level
  double rate_bits = 0.0;   // (C - E q1) + (C - E q2)
  std::vector<double> q1, q2;
  double mean_q1 = 0.0, mean_q2 = 0.0;
  int iterations = 0;
};

// Per-sample q levels at a given water level theta (r = 2, symmetric C).
void two_agent_profile(const SystemConfig& cfg, const Ensemble& ens, double theta,
                       std::vector<double>& q1, std::vector<double>& q2);

// Solves for the water level where the ensemble-average joint-decoding term
// crosses the total forwarded-rate budget, via log-scale bisection.
TwoAgentSolution two_agent_solve(const SystemConfig& cfg, const Ensemble& ens);

// --- multi-antenna agents ---

// Per-agent quantization covariances Lambda[i] (one matrix, or one per
// sample), each m_i x m_i Hermitian PSD on the nonzero singular directions
// of agent i's channel block.
RateReport mimo_agents_rate(const SystemConfig& cfg, const Ensemble& ens,
                            const std::vector<std::vector<CMat>>& Lambda);

// --- dirty-paper coded broadcast of agent side messages (evaluation only) ---

struct DpcParams {
  std::vector<int> order;          // encoding order over agents, 0-based
  std::vector<CMat> Q;             // t x t PSD, one or one per sample
  std::vector<std::vector<CMat>> B;  // per agent: one t x t PSD, or one per sample
  Eigen::MatrixXd q;               // r x 1 or r x n
};

RateReport dpc_rate_eval(const SystemConfig& cfg, const Ensemble& ens, const DpcParams& p);

// --- block fading ---

// Per-sample achievable value with the per-realization pinned deflation
// factors (2^{C_i} - 1) / (2^{C_i} + g_i), g_i = H_i Q H_i*, maximized over
// the diagonal input covariance.
std::vector<double> ec_outage_values(const SystemConfig& cfg, const Ensemble& ens,
                                     int workers = 0);
double ec_outage(const SystemConfig& cfg, const Ensemble& ens, double R, int workers = 0);

// Per-sample max over (diagonal Q, 0 <= q_i <= C_i) of the min over agent
// subsets of forwarded-link plus joint-decoding terms.
std::vector<double> ceo_outage_values(const SystemConfig& cfg, const Ensemble& ens,
                                      int workers = 0);
double ceo_outage(const SystemConfig& cfg, const Ensemble& ens, double R, int workers = 0);

}  // namespace dmimo
