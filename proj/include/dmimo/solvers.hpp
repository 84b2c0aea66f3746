#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dmimo {

struct TooManyAgentsError : std::runtime_error {
  explicit TooManyAgentsError(const std::string& what) : std::runtime_error(what) {}
};

struct NoSignChangeError : std::runtime_error {
  explicit NoSignChangeError(const std::string& what) : std::runtime_error(what) {}
};

using RVecX = Eigen::VectorXd;

// Exhaustive minimum of f over all 2^r subsets of {0..r-1}, subsets given as
// bitmasks. Ties resolved toward smaller cardinality, then lexicographically
// smaller sorted index list. r <= 16.
struct SubsetMinResult {
  double value = 0.0;
  std::uint32_t mask = 0;
};
SubsetMinResult min_over_subsets(int r, const std::function<double(std::uint32_t)>& f);

// Exhaustive minimum over families of pairwise-disjoint nonempty blocks
// (the union need not cover {0..r-1}; the empty family is included). Ties
// resolved toward fewer blocks, then lexicographically by canonical block
// list (blocks sorted by smallest member). r <= 8.
struct PartitionMinResult {
  double value = 0.0;
  std::vector<std::uint32_t> blocks;
};
PartitionMinResult min_over_partitions(
    int r, const std::function<double(const std::vector<std::uint32_t>&)>& f);

// Enumerates the families min_over_partitions visits, canonical order.
std::vector<std::vector<std::uint32_t>> enumerate_block_families(int r);

// Derivative-free maximization over a box by cyclic coordinate ascent with
// golden-section line searches; optional extra search directions let the
// ascent move along max-min ridges that no single coordinate can follow.
struct BoxMaxOptions {
  std::vector<RVecX> extra_starts;       // tried in addition to the default ones
  bool pair_directions = false;          // add e_i - e_j and e_i + e_j sweeps
  bool ones_directions = false;          // add all-ones and one-flipped sweeps
  int random_polish_rounds = 0;          // seeded random polls after the sweeps
                                         // stall; any hit re-runs the sweeps
  int max_cycles = 60;
  int default_starts = 3;                // center + two skewed interior points
  double xtol = 0.0;                     // line-search width; 0 = 1e-8 * span
};
struct BoxMaxResult {
  RVecX x;
  double value = 0.0;
  int winning_start = 0;
  int cycles = 0;
};
BoxMaxResult maximize_concave_box(const std::function<double(const RVecX&)>& f,
                                  const RVecX& lower, const RVecX& upper, double tol,
                                  const BoxMaxOptions& opts = {});

// Golden-section maximization of a unimodal scalar function on [lo, hi].
double golden_max(const std::function<double(double)>& f, double lo, double hi, double xtol);

// Bisection root of g on [lo, hi]; requires a sign change. tol applies to the
// bracket width (and |g| at the midpoint as an early-out).
double bisect_scalar(const std::function<double(double)>& g, double lo, double hi, double tol);

}  // namespace dmimo
