#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dmimo/linalg.hpp"

namespace dmimo {

struct BadConfigError : std::runtime_error {
  explicit BadConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct BadFileError : std::runtime_error {
  explicit BadFileError(const std::string& what) : std::runtime_error(what) {}
};

// Transmitter with t antennas, r receive agents, lossless per-agent forward
// links of the given capacities (bits/channel use) to the final decoder.
struct SystemConfig {
  int r = 2;
  int t = 2;
  double P = 1.0;                    // total transmit power, linear
  std::vector<double> capacities;    // size r
  std::vector<int> agent_antennas;   // empty means one antenna per agent

  int antennas_of(int agent) const {
    return agent_antennas.empty() ? 1 : agent_antennas[agent];
  }
  int rx_rows() const;
  bool symmetric_capacity() const;
  void validate() const;

  static SystemConfig symmetric(int r, int t, double P, double C);
};

// Deterministic Gaussian stream: explicit Box-Muller over mt19937_64 draws,
// so the sequence is fixed by the seed alone.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : eng_(seed) {}
  double uniform();          // [0, 1)
  double gauss();            // N(0, 1)
  cx cgauss();               // CN(0, 1): two N(0, 1/2) components

  // Independent substream for one sample index; worker-count independent.
  static RngStream substream(std::uint64_t seed, std::uint64_t index);

 private:
  std::mt19937_64 eng_;
};

struct Ensemble {
  int rows = 0;
  int t = 0;
  std::uint64_t seed = 0;
  std::vector<CMat> H;

  int size() const { return static_cast<int>(H.size()); }
};

// rows x t matrix of iid CN(0,1) entries
CMat sample_channel(int rows, int t, RngStream& stream);

Ensemble make_ensemble(const SystemConfig& cfg, int n, std::uint64_t seed);

// Binary format (little endian): magic "DMEN", u32 version, u32 rows, u32 t,
// u64 n, u64 seed, then n*rows*t complex entries as re,im doubles, row major.
void save_ensemble(const Ensemble& ens, const std::string& path);
Ensemble load_ensemble(const std::string& path);

// Row block [start, start+len) of agent i within a stacked channel matrix.
void agent_rows(const SystemConfig& cfg, int agent, int& start, int& len);

}  // namespace dmimo
