#include "dmimo/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "dmimo/util.hpp"

namespace dmimo {

namespace {

void check_rtm(int r, int t, double m, const char* who) {
  if (r < 1 || t < 1) throw BadRangeError(std::string(who) + ": r and t must be positive");
  double mbar = std::min(r, t);
  if (!(m >= 0.0 && m <= mbar))
    throw BadRangeError(std::string(who) + ": m must lie in [0, min(r, t)]");
}

// piecewise-linear curve through (k, (r-k)(t-k)), k = 0..min(r,t)
double piecewise(int r, int t, double m) {
  int kmax = std::min(r, t);
  int k0 = std::min(static_cast<int>(std::floor(m)), kmax - 1);
  if (kmax == 0) return 0.0;
  double v0 = static_cast<double>((r - k0) * (t - k0));
  double v1 = static_cast<double>((r - k0 - 1) * (t - k0 - 1));
  return v0 + (m - k0) * (v1 - v0);
}

}  // namespace

double dmt_upper(int r, int t, double m) {
  check_rtm(r, t, m, "dmt_upper");
  return std::min(piecewise(r, t, m), t * (1.0 - m / r));
}

double dmt_ceo(int r, int t, double m) {
  check_rtm(r, t, m, "dmt_ceo");
  return dmt_upper(r, t, m);
}

double dmt_ec(int r, int t, double m) {
  check_rtm(r, t, m, "dmt_ec");
  if (r == 1) return dmt_upper(r, t, m);
  return m > 0.0 ? 0.0 : static_cast<double>(t);
}

double link_capacity_for_multiplexing(double m, int r, double P) {
  if (r < 1) throw BadRangeError("link_capacity_for_multiplexing: r must be positive");
  if (!(m >= 0.0)) throw BadRangeError("link_capacity_for_multiplexing: m must be nonnegative");
  if (!(P > 0.0)) throw BadRangeError("link_capacity_for_multiplexing: P must be positive");
  return (m / r) * std::log2(P) + 0.5;
}

DiversityEstimate estimate_diversity(const std::vector<double>& P_linear,
                                     const std::vector<double>& outage,
                                     const std::vector<int>& n_samples) {
  const size_t n = P_linear.size();
  if (outage.size() != n || n_samples.size() != n)
    throw BadRangeError("estimate_diversity: input lengths differ");
  if (n < 2) throw BadRangeError("estimate_diversity: need at least two points");
  const double ln10sq = std::log(10.0) * std::log(10.0);
  double S = 0, Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!(P_linear[i] > 0.0)) throw BadRangeError("estimate_diversity: P must be positive");
    if (n_samples[i] < 1) throw BadRangeError("estimate_diversity: need positive sample counts");
    double p = outage[i];
    if (p <= 0.0)
      throw ZeroOutageError("estimate_diversity: a point has zero measured outage");
    if (p > 1.0) throw BadRangeError("estimate_diversity: outage above one");
    double x = std::log10(P_linear[i]);
    double y = -std::log10(p);
    // delta method on the binomial proportion, floored at one count
    double var = std::max(1.0 - p, 1.0 / n_samples[i]) / (p * n_samples[i] * ln10sq);
    double w = 1.0 / var;
    S += w;
    Sx += w * x;
    Sy += w * y;
    Sxx += w * x * x;
    Sxy += w * x * y;
  }
  double delta = S * Sxx - Sx * Sx;
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw BadRangeError("estimate_diversity: need at least two distinct powers");
  DiversityEstimate est;
  est.slope = (S * Sxy - Sx * Sy) / delta;
  est.stderr_slope = std::sqrt(S / delta);
  est.ci_low = est.slope - 1.96 * est.stderr_slope;
  est.ci_high = est.slope + 1.96 * est.stderr_slope;
  est.points = static_cast<int>(n);
  return est;
}

}  // namespace dmimo
