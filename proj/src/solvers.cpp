#include "dmimo/solvers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include "dmimo/util.hpp"

namespace dmimo {

namespace {

// lexicographic order on the sorted index lists of two equal-size masks
bool lex_less(std::uint32_t a, std::uint32_t b) {
  while (a != 0 && b != 0) {
    int ia = std::countr_zero(a);
    int ib = std::countr_zero(b);
    if (ia != ib) return ia < ib;
    a &= a - 1;
    b &= b - 1;
  }
  return a == 0 && b != 0;
}

bool subset_rank_less(std::uint32_t a, std::uint32_t b) {
  int ca = std::popcount(a), cb = std::popcount(b);
  if (ca != cb) return ca < cb;
  return lex_less(a, b);
}

bool family_rank_less(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return lex_less(a[i], b[i]);
  }
  return false;
}

}  // namespace

SubsetMinResult min_over_subsets(int r, const std::function<double(std::uint32_t)>& f) {
  if (r < 0 || r > 16) throw TooManyAgentsError("min_over_subsets: r = " + std::to_string(r));
  SubsetMinResult best{f(0u), 0u};
  if (std::isnan(best.value)) throw NonFiniteError("min_over_subsets: f(empty) is NaN");
  const std::uint32_t total = 1u << r;
  for (std::uint32_t mask = 1; mask < total; ++mask) {
    double v = f(mask);
    if (std::isnan(v)) throw NonFiniteError("min_over_subsets: f is NaN");
    if (v < best.value || (v == best.value && subset_rank_less(mask, best.mask)))
      best = {v, mask};
  }
  return best;
}

std::vector<std::vector<std::uint32_t>> enumerate_block_families(int r) {
  if (r < 0 || r > 8) throw TooManyAgentsError("enumerate_block_families: r = " + std::to_string(r));
  std::vector<std::vector<std::uint32_t>> out;
  out.push_back({});  // empty family
  // families = set partitions of every covered subset U
  const std::uint32_t total = 1u << r;
  std::vector<int> elems;
  for (std::uint32_t U = 1; U < total; ++U) {
    elems.clear();
    for (int i = 0; i < r; ++i)
      if (U & (1u << i)) elems.push_back(i);
    int m = static_cast<int>(elems.size());
    // restricted growth strings enumerate set partitions of elems
    std::vector<int> rgs(m, 0);
    for (;;) {
      int nblocks = *std::max_element(rgs.begin(), rgs.end()) + 1;
      std::vector<std::uint32_t> blocks(nblocks, 0u);
      for (int i = 0; i < m; ++i) blocks[rgs[i]] |= 1u << elems[i];
      // rgs order already sorts blocks by smallest member
      out.push_back(std::move(blocks));
      // next restricted growth string
      int i = m - 1;
      for (; i > 0; --i) {
        int cap = *std::max_element(rgs.begin(), rgs.begin() + i) + 1;
        if (rgs[i] < cap) break;
      }
      if (i == 0) break;
      ++rgs[i];
      std::fill(rgs.begin() + i + 1, rgs.end(), 0);
    }
  }
  return out;
}

PartitionMinResult min_over_partitions(
    int r, const std::function<double(const std::vector<std::uint32_t>&)>& f) {
  auto families = enumerate_block_families(r);
  PartitionMinResult best;
  bool first = true;
  for (const auto& fam : families) {
    double v = f(fam);
    if (std::isnan(v)) throw NonFiniteError("min_over_partitions: f is NaN");
    if (first || v < best.value || (v == best.value && family_rank_less(fam, best.blocks))) {
      best = {v, fam};
      first = false;
    }
  }
  return best;
}

double golden_max(const std::function<double(double)>& f, double lo, double hi, double xtol) {
  const double invphi = 0.6180339887498949;
  const double invphi2 = 0.3819660112501051;
  double a = lo, b = hi, h = b - a;
  if (h <= xtol) return 0.5 * (a + b);
  double c = a + invphi2 * h, d = a + invphi * h;
  double fc = f(c), fd = f(d);
  while (h > xtol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      h = b - a;
      c = a + invphi2 * h;
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      h = b - a;
      d = a + invphi * h;
      fd = f(d);
    }
  }
  return fc > fd ? c : d;
}

namespace {

// line search along dir from x, clipped to the box; returns true on improvement
bool line_improve(const std::function<double(const RVecX&)>& f, RVecX& x, double& fx,
                  const RVecX& dir, const RVecX& lower, const RVecX& upper, double xtol) {
  double smin = -std::numeric_limits<double>::infinity();
  double smax = std::numeric_limits<double>::infinity();
  for (int i = 0; i < x.size(); ++i) {
    if (dir[i] > 0) {
      smin = std::max(smin, (lower[i] - x[i]) / dir[i]);
      smax = std::min(smax, (upper[i] - x[i]) / dir[i]);
    } else if (dir[i] < 0) {
      smin = std::max(smin, (upper[i] - x[i]) / dir[i]);
      smax = std::min(smax, (lower[i] - x[i]) / dir[i]);
    }
  }
  if (!(smax > smin)) return false;
  auto g = [&](double s) { return f(x + s * dir); };
  double sbest = golden_max(g, smin, smax, xtol);
  double fbest = g(sbest);
  if (std::isnan(fbest)) throw NonFiniteError("maximize_concave_box: objective is NaN");
  if (fbest > fx) {
    x += sbest * dir;
    for (int i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
    fx = fbest;
    return true;
  }
  return false;
}

}  // namespace

BoxMaxResult maximize_concave_box(const std::function<double(const RVecX&)>& f,
                                  const RVecX& lower, const RVecX& upper, double tol,
                                  const BoxMaxOptions& opts) {
  const int d = static_cast<int>(lower.size());
  std::vector<RVecX> starts;
  const double fracs[3] = {0.5, 0.2, 0.85};
  for (int s = 0; s < std::min(opts.default_starts, 3); ++s)
    starts.push_back(lower + fracs[s] * (upper - lower));
  for (const auto& e : opts.extra_starts) starts.push_back(e);

  RVecX span = upper - lower;
  double xtol = opts.xtol > 0.0 ? opts.xtol : std::max(1e-12, 1e-8 * span.maxCoeff());

  BoxMaxResult best;
  bool have_best = false;
  for (size_t si = 0; si < starts.size(); ++si) {
    RVecX x = starts[si];
    for (int i = 0; i < d; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
    double fx = f(x);
    if (std::isnan(fx)) throw NonFiniteError("maximize_concave_box: objective is NaN at start");

    auto sweep = [&]() {
      double before = fx;
      for (int i = 0; i < d; ++i) {
        RVecX dir = RVecX::Zero(d);
        dir[i] = 1.0;
        line_improve(f, x, fx, dir, lower, upper, xtol);
      }
      if (opts.pair_directions) {
        for (int i = 0; i < d; ++i)
          for (int j = i + 1; j < d; ++j) {
            RVecX dir = RVecX::Zero(d);
            dir[i] = 1.0;
            dir[j] = -1.0;
            line_improve(f, x, fx, dir, lower, upper, xtol);
            dir[j] = 1.0;
            line_improve(f, x, fx, dir, lower, upper, xtol);
          }
      }
      if (opts.ones_directions && d > 2) {
        RVecX dir = RVecX::Ones(d);
        line_improve(f, x, fx, dir, lower, upper, xtol);
        for (int i = 0; i < d; ++i) {
          dir = RVecX::Ones(d);
          dir[i] = -1.0;
          line_improve(f, x, fx, dir, lower, upper, xtol);
        }
      }
      return fx - before;
    };

    int cycle = 0;
    for (; cycle < opts.max_cycles; ++cycle)
      if (sweep() < tol) break;

    // a min of smooth terms has kinks where no fixed direction improves;
    // random polls escape those, and any hit earns another sweep pass
    if (opts.random_polish_rounds > 0 && d > 1) {
      std::mt19937_64 rng(0x9e3779b97f4a7c15ull + 0x1000ull * si);
      std::normal_distribution<double> gauss;
      int quiet = 0;
      for (int round = 0; round < opts.random_polish_rounds && quiet < 2; ++round) {
        bool hit = false;
        for (int k = 0; k < d; ++k) {
          RVecX dir(d);
          for (int i = 0; i < d; ++i) dir[i] = gauss(rng);
          double nrm = dir.norm();
          if (nrm == 0.0) continue;
          if (line_improve(f, x, fx, dir / nrm, lower, upper, xtol)) hit = true;
        }
        if (hit) {
          for (int c = 0; c < opts.max_cycles; ++c)
            if (sweep() < tol) break;
          quiet = 0;
        } else {
          ++quiet;
        }
      }
    }

    if (!have_best || fx > best.value) {
      best = {x, fx, static_cast<int>(si), cycle};
      have_best = true;
    }
  }
  return best;
}

double bisect_scalar(const std::function<double(double)>& g, double lo, double hi, double tol) {
  double glo = g(lo), ghi = g(hi);
  if (std::isnan(glo) || std::isnan(ghi)) throw NonFiniteError("bisect_scalar: NaN at bracket");
  if (glo == 0.0) return lo;
  if (ghi == 0.0) return hi;
  if ((glo > 0) == (ghi > 0))
    throw NoSignChangeError("bisect_scalar: no sign change on bracket");
  for (int it = 0; it < 200 && (hi - lo) > tol; ++it) {
    double mid = 0.5 * (lo + hi);
    double gm = g(mid);
    if (std::isnan(gm)) throw NonFiniteError("bisect_scalar: NaN inside bracket");
    if (gm == 0.0) return mid;
    if ((gm > 0) == (glo > 0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace dmimo
