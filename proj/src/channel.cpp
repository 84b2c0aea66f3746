#include "dmimo/channel.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "dmimo/util.hpp"

namespace dmimo {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

int SystemConfig::rx_rows() const {
  if (agent_antennas.empty()) return r;
  return std::accumulate(agent_antennas.begin(), agent_antennas.end(), 0);
}

bool SystemConfig::symmetric_capacity() const {
  for (int i = 1; i < r; ++i)
    if (capacities[i] != capacities[0]) return false;
  return true;
}

void SystemConfig::validate() const {
  if (r < 1) throw BadConfigError("config: r must be >= 1");
  if (t < 1) throw BadConfigError("config: t must be >= 1");
  if (!(P > 0.0) || !std::isfinite(P)) throw BadConfigError("config: P must be positive");
  if (static_cast<int>(capacities.size()) != r)
    throw BadConfigError("config: capacities size != r");
  for (double c : capacities)
    if (c < 0.0 || !std::isfinite(c)) throw BadConfigError("config: capacity must be >= 0");
  if (!agent_antennas.empty()) {
    if (static_cast<int>(agent_antennas.size()) != r)
      throw BadConfigError("config: agent_antennas size != r");
    for (int a : agent_antennas)
      if (a < 1) throw BadConfigError("config: agent antenna count must be >= 1");
  }
}

SystemConfig SystemConfig::symmetric(int r, int t, double P, double C) {
  SystemConfig cfg;
  cfg.r = r;
  cfg.t = t;
  cfg.P = P;
  cfg.capacities.assign(r, C);
  cfg.validate();
  return cfg;
}

double RngStream::uniform() {
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double RngStream::gauss() {
  // one fresh Box-Muller pair per call; the sine twin is dropped to keep the
  // draw count per call fixed
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

cx RngStream::cgauss() {
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double rad = std::sqrt(-std::log(u1));  // Rayleigh with E[rad^2] = 1
  return {rad * std::cos(2.0 * M_PI * u2), rad * std::sin(2.0 * M_PI * u2)};
}

RngStream RngStream::substream(std::uint64_t seed, std::uint64_t index) {
  return RngStream(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x51ED2701ull)));
}

CMat sample_channel(int rows, int t, RngStream& stream) {
  CMat H(rows, t);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < t; ++j) H(i, j) = stream.cgauss();
  return H;
}

Ensemble make_ensemble(const SystemConfig& cfg, int n, std::uint64_t seed) {
  cfg.validate();
  Ensemble ens;
  ens.rows = cfg.rx_rows();
  ens.t = cfg.t;
  ens.seed = seed;
  ens.H.resize(n);
  for (int k = 0; k < n; ++k) {
    RngStream s = RngStream::substream(seed, static_cast<std::uint64_t>(k));
    ens.H[k] = sample_channel(ens.rows, ens.t, s);
  }
  return ens;
}

void save_ensemble(const Ensemble& ens, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw BadFileError("save_ensemble: cannot open " + path);
  const char magic[4] = {'D', 'M', 'E', 'N'};
  std::uint32_t version = 1, rows = ens.rows, t = ens.t;
  std::uint64_t n = ens.H.size(), seed = ens.seed;
  f.write(magic, 4);
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&rows), 4);
  f.write(reinterpret_cast<const char*>(&t), 4);
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(reinterpret_cast<const char*>(&seed), 8);
  for (const CMat& H : ens.H)
    for (int i = 0; i < H.rows(); ++i)
      for (int j = 0; j < H.cols(); ++j) {
        double re = H(i, j).real(), im = H(i, j).imag();
        f.write(reinterpret_cast<const char*>(&re), 8);
        f.write(reinterpret_cast<const char*>(&im), 8);
      }
  if (!f) throw BadFileError("save_ensemble: write failed for " + path);
}

Ensemble load_ensemble(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw BadFileError("load_ensemble: cannot open " + path);
  char magic[4];
  std::uint32_t version, rows, t;
  std::uint64_t n, seed;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&rows), 4);
  f.read(reinterpret_cast<char*>(&t), 4);
  f.read(reinterpret_cast<char*>(&n), 8);
  f.read(reinterpret_cast<char*>(&seed), 8);
  if (!f || std::memcmp(magic, "DMEN", 4) != 0 || version != 1)
    throw BadFileError("load_ensemble: bad header in " + path);
  Ensemble ens;
  ens.rows = static_cast<int>(rows);
  ens.t = static_cast<int>(t);
  ens.seed = seed;
  ens.H.resize(n, CMat(rows, t));
  for (std::uint64_t k = 0; k < n; ++k)
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < t; ++j) {
        double re, im;
        f.read(reinterpret_cast<char*>(&re), 8);
        f.read(reinterpret_cast<char*>(&im), 8);
        ens.H[k](i, j) = {re, im};
      }
  if (!f) throw BadFileError("load_ensemble: truncated file " + path);
  return ens;
}

void agent_rows(const SystemConfig& cfg, int agent, int& start, int& len) {
  start = 0;
  for (int i = 0; i < agent; ++i) start += cfg.antennas_of(i);
  len = cfg.antennas_of(agent);
}

}  // namespace dmimo
