#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dmimo {

struct BadRangeError : std::runtime_error {
  explicit BadRangeError(const std::string& what) : std::runtime_error(what) {}
};

struct ZeroOutageError : std::runtime_error {
  explicit ZeroOutageError(const std::string& what) : std::runtime_error(what) {}
};

// Outage exponents at multiplexing gain m in [0, min(r, t)], with per-agent
// link capacities scaling as (m/r) log2 P plus a constant.

// min of the piecewise-linear curve through (k, (r-k)(t-k)) and t (1 - m/r)
double dmt_upper(int r, int t, double m);

// the compress-and-forward scheme with joint decoding meets the upper curve
double dmt_ceo(int r, int t, double m);

// elementary compression: full multiplexing, but zero diversity at m > 0
// once there is more than one agent
double dmt_ec(int r, int t, double m);

// per-agent link capacity used by the scaling analysis: (m/r) log2 P + 1/2
double link_capacity_for_multiplexing(double m, int r, double P);

// Weighted least-squares slope of -log10(outage) against log10(P), with the
// per-point variance taken from the binomial counting error.
struct DiversityEstimate {
  double slope = 0.0;
  double stderr_slope = 0.0;
  double ci_low = 0.0;   // 95% interval
  double ci_high = 0.0;
  int points = 0;
};
DiversityEstimate estimate_diversity(const std::vector<double>& P_linear,
                                     const std::vector<double>& outage,
                                     const std::vector<int>& n_samples);

}  // namespace dmimo
