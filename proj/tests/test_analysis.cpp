#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dmimo/analysis.hpp"

TEST_CASE("tradeoff curve hand values") {
  // square 2x2: piecewise through (0,4), (1,1), (2,0) capped by 2(1 - m/2)
  CHECK(dmimo::dmt_upper(2, 2, 0.0) == 2.0);
  CHECK(dmimo::dmt_upper(2, 2, 0.5) == doctest::Approx(1.5));
  CHECK(dmimo::dmt_upper(2, 2, 1.0) == 1.0);
  CHECK(dmimo::dmt_upper(2, 2, 1.5) == doctest::Approx(0.5));
  CHECK(dmimo::dmt_upper(2, 2, 2.0) == 0.0);
  // wide 3x2 at m=0: three-agent array is link-limited at d = t
  CHECK(dmimo::dmt_upper(3, 2, 0.0) == 2.0);
  CHECK(dmimo::dmt_upper(3, 2, 2.0) == 0.0);
  // single agent: classic 4x1 corner values d(0) = rt = 4, d(1) = 0
  CHECK(dmimo::dmt_upper(1, 4, 0.0) == 4.0);
  CHECK(dmimo::dmt_upper(1, 4, 1.0) == 0.0);

  for (int r : {1, 2, 3}) {
    for (int t : {1, 2, 4}) {
      int mm = std::min(r, t);
      for (int j = 0; j <= 20; ++j) {
        double m = mm * j / 20.0;
        CHECK(dmimo::dmt_ceo(r, t, m) == dmimo::dmt_upper(r, t, m));
      }
      CHECK(dmimo::dmt_upper(r, t, 0.0) == static_cast<double>(t));
      CHECK(dmimo::dmt_upper(r, t, static_cast<double>(mm)) == 0.0);
    }
  }

  // elementary compression keeps the slope but loses all diversity
  CHECK(dmimo::dmt_ec(1, 3, 0.5) == dmimo::dmt_upper(1, 3, 0.5));
  CHECK(dmimo::dmt_ec(2, 2, 0.0) == 2.0);
  CHECK(dmimo::dmt_ec(2, 2, 0.25) == 0.0);
  CHECK(dmimo::dmt_ec(3, 2, 1.0) == 0.0);

  CHECK_THROWS_AS(dmimo::dmt_upper(2, 2, -0.1), dmimo::BadRangeError);
  CHECK_THROWS_AS(dmimo::dmt_upper(2, 2, 2.1), dmimo::BadRangeError);
  CHECK_THROWS_AS(dmimo::dmt_ec(0, 2, 0.0), dmimo::BadRangeError);
}

TEST_CASE("link capacity scaling") {
  CHECK(dmimo::link_capacity_for_multiplexing(2.0, 2, 100.0) ==
        doctest::Approx(std::log2(100.0) + 0.5).epsilon(1e-12));
  CHECK(dmimo::link_capacity_for_multiplexing(0.0, 3, 50.0) == 0.5);
  CHECK_THROWS_AS(dmimo::link_capacity_for_multiplexing(1.0, 2, 0.0), dmimo::BadRangeError);
  CHECK_THROWS_AS(dmimo::link_capacity_for_multiplexing(-1.0, 2, 10.0), dmimo::BadRangeError);
}

TEST_CASE("diversity fit recovers an exact power law") {
  // outage = 3 P^-1.7 measured without noise
  std::vector<double> P, out;
  std::vector<int> ns;
  for (int k = 0; k < 6; ++k) {
    double p = std::pow(10.0, 1.0 + 0.4 * k);
    P.push_back(p);
    out.push_back(3.0 * std::pow(p, -1.7));
    ns.push_back(100000);
  }
  auto est = dmimo::estimate_diversity(P, out, ns);
  CHECK(est.slope == doctest::Approx(1.7).epsilon(1e-9));
  CHECK(est.points == 6);
  CHECK(est.ci_low <= 1.7);
  CHECK(est.ci_high >= 1.7);
  CHECK(est.stderr_slope > 0.0);

  // scaling every outage by a constant shifts the intercept, not the slope
  std::vector<double> half = out;
  for (double& v : half) v *= 0.37;
  auto est2 = dmimo::estimate_diversity(P, half, ns);
  CHECK(est2.slope == doctest::Approx(est.slope).epsilon(1e-9));

  std::vector<double> zero = out;
  zero[2] = 0.0;
  CHECK_THROWS_AS(dmimo::estimate_diversity(P, zero, ns), dmimo::ZeroOutageError);
  CHECK_THROWS_AS(dmimo::estimate_diversity({1.0}, {0.1}, {10}), dmimo::BadRangeError);
  CHECK_THROWS_AS(dmimo::estimate_diversity({1.0, 1.0}, {0.1, 0.1}, {10, 10}),
                  dmimo::BadRangeError);
}
