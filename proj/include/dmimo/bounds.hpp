#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmimo/channel.hpp"
#include "dmimo/linalg.hpp"

namespace dmimo {

struct EmptySubsetError : std::runtime_error {
  explicit EmptySubsetError(const std::string& what) : std::runtime_error(what) {}
};

struct BoundReport {
  std::string kind;
  double bound_bits = 0.0;
  std::uint32_t min_subset = 0;            // minimizing subset (bitmask), if meaningful
  bool has_min_subset = false;
  std::vector<std::uint32_t> min_blocks;   // minimizing block family, if meaningful
  std::vector<double> q_star;              // per-agent q at the maximizer
  std::vector<double> Q_diag;
  int winning_start = -1;
  std::uint64_t seed = 0;
  int n_samples = 0;

  std::string to_kv() const;
};

// Entropy-power style ensemble term for one agent subset: with
// Lambda_S = H_S Q H_S* and W_S the quantization-deflated counterpart,
//   F = m log2( 2^{E log2|I+Lambda_S|/m} - 2^{E log2|W_S|/m} ),  m = min(|S|, t).
// q holds per-agent levels (entries outside the subset ignored); an empty
// Q_diag means (P/t) I. The subset must be nonempty.
double epi_F(const SystemConfig& cfg, const Ensemble& ens, std::uint32_t subset,
             const std::vector<double>& q, const std::vector<double>& Q_diag = {});

// Single-realization version of epi_F.
double epi_G(const SystemConfig& cfg, const CMat& H, std::uint32_t subset,
             const std::vector<double>& q, const std::vector<double>& Q_diag = {});

// min over subsets S of E_H log2 det(I + H_S Q H_S*) + sum_{i not in S} C_i.
BoundReport cutset_ergodic(const SystemConfig& cfg, const Ensemble& ens,
                           const std::vector<double>& Q_diag = {});

// max over (diagonal Q, 0 <= q_i <= C_i) of
//   min_S { F(S^c, q) + sum_{i in S} (C_i - q_i) };
// symmetric capacities restrict to a shared q level.
BoundReport ub_fast(const SystemConfig& cfg, const Ensemble& ens, bool fixed_identity_Q = false);

// Same with the minimum over families of disjoint blocks, sum of per-block F
// terms plus uncovered link terms; never above ub_fast.
BoundReport ub_fast_partitioned(const SystemConfig& cfg, const Ensemble& ens,
                                bool fixed_identity_Q = false);

// Symmetric-capacity closed form: r C + r max_Q min_j { a_j/j - log2(2^C + 2^{b_j/j}) }
// over leading-row prefixes of each size j, with a_j, b_j the ensemble
// log-determinant sums with and without the identity.
BoundReport ub_symmetric(const SystemConfig& cfg, const Ensemble& ens);

// --- block fading ---

// Per-sample maximized cut-set value; outage compares against R.
std::vector<double> cutset_outage_values(const SystemConfig& cfg, const Ensemble& ens,
                                         int workers = 0);
double cutset_outage(const SystemConfig& cfg, const Ensemble& ens, double R, int workers = 0);

// Per-sample max over (Q, q in [0, C]) of the min over subsets (or block
// families) of single-realization bound terms.
std::vector<double> ub_outage_values(const SystemConfig& cfg, const Ensemble& ens,
                                     bool partitioned, int workers = 0);
double ub_outage(const SystemConfig& cfg, const Ensemble& ens, double R, bool partitioned,
                 int workers = 0);

// empirical helpers shared by every block-fading curve
double outage_fraction(const std::vector<double>& values, double R);
double supported_rate(const std::vector<double>& values, double epsilon);

}  // namespace dmimo
