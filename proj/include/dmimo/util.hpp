#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dmimo {

inline constexpr const char* kVersion = "1.0.0";

constexpr double kLn2 = 0.6931471805599453;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

// log2(1 + x), accurate for small x
inline double log2_1p(double x) { return std::log1p(x) / kLn2; }

// 2^q - 1, accurate for small q
inline double exp2m1(double q) { return std::expm1(q * kLn2); }

struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

// Runs fn(i) for i in [0, n). Each call must only touch its own slot of any
// shared output, so results are identical for every worker count.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

inline int default_workers() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Sequential left-to-right mean; reduction order never depends on threading.
inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace dmimo
