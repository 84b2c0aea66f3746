#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dmimo/analysis.hpp"
#include "dmimo/bounds.hpp"
#include "dmimo/channel.hpp"
#include "dmimo/rates.hpp"
#include "dmimo/solvers.hpp"
#include "dmimo/util.hpp"

namespace {

using namespace dmimo;

struct Options {
  int r = 2;
  int t = 2;
  std::vector<double> C = {2.0};  // one value broadcasts to every agent
  std::vector<double> P_dB = {10.0};
  int n_samples = -1;  // -1: command default (1000; fig3 preset 1500)
  std::uint64_t seed = 1;
  std::string out = "dmimo_out.csv";
  std::vector<std::string> scheme;
  std::vector<std::string> bound;
  double epsilon = 1e-2;
  double m_gain = -1.0;  // dmt slope data; -1 means min(r, t)
  std::string preset;
  int workers = 0;
  bool iso_q = false;  // bounds: keep the input covariance at (P/t) I
  bool slope_data = false;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string subset_str(std::uint32_t mask, bool valid) {
  if (!valid) return "";
  std::string s;
  for (int i = 0; i < 32; ++i)
    if (mask & (1u << i)) {
      if (!s.empty()) s += ';';
      s += std::to_string(i + 1);
    }
  return s;
}

std::string join_vals(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += fmt(v[i]);
  }
  return s;
}

SystemConfig make_config(const Options& o, double P_linear) {
  SystemConfig cfg;
  cfg.r = o.r;
  cfg.t = o.t;
  cfg.P = P_linear;
  if (o.C.size() == 1) {
    cfg.capacities.assign(o.r, o.C[0]);
  } else if (static_cast<int>(o.C.size()) == o.r) {
    cfg.capacities = o.C;
  } else {
    throw BadConfigError("--C needs one value, or one per agent");
  }
  cfg.validate();
  return cfg;
}

class CsvWriter {
 public:
  CsvWriter(std::string path, std::string header) : path_(std::move(path)) {
    buf_ = std::move(header);
    buf_ += '\n';
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) buf_ += ',';
      buf_ += cells[i];
    }
    buf_ += '\n';
  }
  void flush() {
    std::ofstream f(path_, std::ios::binary);
    if (!f) throw BadFileError("cannot write " + path_);
    f << buf_;
  }

 private:
  std::string path_;
  std::string buf_;
};

RateReport run_rate_scheme(const std::string& name, const SystemConfig& cfg,
                           const Ensemble& ens) {
  if (name == "ec") return ec_optimize(cfg, ens);
  if (name == "ceo") return ceo_optimize_joint(cfg, ens);
  if (name == "ceo_pc") return ceo_optimize_per_channel(cfg, ens);
  if (name == "ceo_sym") return ceo_symmetric_constant_q(cfg, ens);
  if (name == "two_agent") {
    TwoAgentSolution sol = two_agent_solve(cfg, ens);
    RateReport rep;
    rep.scheme = "two_agent";
    rep.rate_bits = sol.rate_bits;
    rep.mean_q = {sol.mean_q1, sol.mean_q2};
    rep.Q_diag.assign(cfg.t, cfg.P / cfg.t);
    rep.seed = ens.seed;
    rep.n_samples = ens.size();
    return rep;
  }
  throw BadConfigError("unknown scheme: " + name);
}

BoundReport run_bound(const std::string& name, const SystemConfig& cfg, const Ensemble& ens,
                      bool iso_q) {
  if (name == "cutset") return cutset_ergodic(cfg, ens);
  if (name == "ub_fast") return ub_fast(cfg, ens, iso_q);
  if (name == "ub_fast_part") return ub_fast_partitioned(cfg, ens, iso_q);
  if (name == "ub_symmetric") return ub_symmetric(cfg, ens);
  throw BadConfigError("unknown bound: " + name);
}

bool is_bound_name(const std::string& name) {
  return name == "cutset" || name == "ub_fast" || name == "ub_fast_part" ||
         name == "ub_symmetric";
}

std::vector<double> run_outage_values(const std::string& name, const SystemConfig& cfg,
                                      const Ensemble& ens, int workers) {
  if (name == "ec") return ec_outage_values(cfg, ens, workers);
  if (name == "ceo") return ceo_outage_values(cfg, ens, workers);
  if (name == "cutset") return cutset_outage_values(cfg, ens, workers);
  if (name == "ub") return ub_outage_values(cfg, ens, false, workers);
  if (name == "ub_part") return ub_outage_values(cfg, ens, true, workers);
  throw BadConfigError("unknown outage scheme: " + name);
}

int cmd_rates(const Options& o) {
  CsvWriter csv(o.out, "P_dB,scheme,rate_bits,min_subset,seed,n_samples,version");
  std::vector<std::string> schemes = o.scheme.empty()
                                         ? std::vector<std::string>{"ec", "ceo"}
                                         : o.scheme;
  for (double pdb : o.P_dB) {
    SystemConfig cfg = make_config(o, db_to_linear(pdb));
    Ensemble ens = make_ensemble(cfg, o.n_samples, o.seed);
    for (const auto& name : schemes) {
      RateReport rep = run_rate_scheme(name, cfg, ens);
      csv.row({fmt(pdb), name, fmt(rep.rate_bits),
               subset_str(rep.min_subset, rep.has_min_subset), std::to_string(rep.seed),
               std::to_string(rep.n_samples), kVersion});
      std::cout << "P=" << pdb << "dB " << name << " rate=" << rep.rate_bits << "\n";
    }
  }
  csv.flush();
  return 0;
}

int cmd_bounds(const Options& o) {
  CsvWriter csv(o.out, "P_dB,bound_kind,bound_bits,q_star,Q_mode,seed,n_samples,version");
  std::vector<std::string> bounds = o.bound.empty() ? std::vector<std::string>{"cutset"}
                                                    : o.bound;
  const std::string qmode = o.iso_q ? "iso" : "searched";
  for (double pdb : o.P_dB) {
    SystemConfig cfg = make_config(o, db_to_linear(pdb));
    Ensemble ens = make_ensemble(cfg, o.n_samples, o.seed);
    for (const auto& name : bounds) {
      BoundReport rep = run_bound(name, cfg, ens, o.iso_q);
      csv.row({fmt(pdb), name, fmt(rep.bound_bits), join_vals(rep.q_star), qmode,
               std::to_string(rep.seed), std::to_string(rep.n_samples), kVersion});
      std::cout << "P=" << pdb << "dB " << name << " bound=" << rep.bound_bits << "\n";
    }
  }
  csv.flush();
  return 0;
}

int cmd_outage(const Options& o) {
  CsvWriter csv(o.out, "P_dB,scheme,epsilon,supported_rate_bits,seed,n_samples,version");
  std::vector<std::string> schemes = o.scheme.empty()
                                         ? std::vector<std::string>{"ceo", "ub_part"}
                                         : o.scheme;
  for (double pdb : o.P_dB) {
    SystemConfig cfg = make_config(o, db_to_linear(pdb));
    Ensemble ens = make_ensemble(cfg, o.n_samples, o.seed);
    for (const auto& name : schemes) {
      std::vector<double> values = run_outage_values(name, cfg, ens, o.workers);
      double rate = supported_rate(values, o.epsilon);
      csv.row({fmt(pdb), name, fmt(o.epsilon), fmt(rate), std::to_string(ens.seed),
               std::to_string(ens.size()), kVersion});
      std::cout << "P=" << pdb << "dB " << name << " eps=" << o.epsilon
                << " supported=" << rate << "\n";
    }
  }
  csv.flush();
  return 0;
}

int cmd_dmt(const Options& o) {
  if (o.slope_data) {
    CsvWriter csv(o.out, "P_dB,outage,scheme,m,seed,n_samples,version");
    double m = o.m_gain < 0.0 ? std::min(o.r, o.t) : o.m_gain;
    std::vector<std::string> schemes = o.scheme.empty()
                                           ? std::vector<std::string>{"ec", "ceo"}
                                           : o.scheme;
    for (double pdb : o.P_dB) {
      double P = db_to_linear(pdb);
      Options oc = o;
      oc.C = {link_capacity_for_multiplexing(m, o.r, P)};
      SystemConfig cfg = make_config(oc, P);
      Ensemble ens = make_ensemble(cfg, o.n_samples, o.seed);
      double target = m * std::log2(P);
      for (const auto& name : schemes) {
        std::vector<double> values = run_outage_values(name, cfg, ens, o.workers);
        double pout = outage_fraction(values, target);
        csv.row({fmt(pdb), fmt(pout), name, fmt(m), std::to_string(ens.seed),
                 std::to_string(ens.size()), kVersion});
        std::cout << "P=" << pdb << "dB " << name << " m=" << m << " outage=" << pout
                  << "\n";
      }
    }
    csv.flush();
    return 0;
  }
  CsvWriter csv(o.out, "m,d,scheme,version");
  const int mbar = std::min(o.r, o.t);
  std::vector<std::string> schemes = o.scheme.empty()
                                         ? std::vector<std::string>{"upper", "ceo", "ec"}
                                         : o.scheme;
  const int steps = 20 * mbar;
  for (const auto& name : schemes) {
    for (int k = 0; k <= steps; ++k) {
      double m = mbar * static_cast<double>(k) / steps;
      double d;
      if (name == "upper") {
        d = dmt_upper(o.r, o.t, m);
      } else if (name == "ceo") {
        d = dmt_ceo(o.r, o.t, m);
      } else if (name == "ec") {
        d = dmt_ec(o.r, o.t, m);
      } else {
        throw BadConfigError("unknown dmt scheme: " + name);
      }
      csv.row({fmt(m), fmt(d), name, kVersion});
    }
    std::cout << "dmt " << name << " r=" << o.r << " t=" << o.t << "\n";
  }
  csv.flush();
  return 0;
}

int cmd_two_agent(const Options& o) {
  CsvWriter csv(o.out,
                "P_dB,theta,rate_bits,mean_q1,mean_q2,seed,n_samples,version");
  for (double pdb : o.P_dB) {
    SystemConfig cfg = make_config(o, db_to_linear(pdb));
    Ensemble ens = make_ensemble(cfg, o.n_samples, o.seed);
    TwoAgentSolution sol = two_agent_solve(cfg, ens);
    csv.row({fmt(pdb), fmt(sol.theta), fmt(sol.rate_bits), fmt(sol.mean_q1),
             fmt(sol.mean_q2), std::to_string(ens.seed), std::to_string(ens.size()),
             kVersion});
    std::cout << "P=" << pdb << "dB two_agent rate=" << sol.rate_bits
              << " theta=" << sol.theta << "\n";
  }
  csv.flush();
  return 0;
}

int cmd_sweep(const Options& o) {
  CsvWriter csv(o.out, "P_dB,scheme,rate_bits,min_subset,seed,n_samples,version");
  std::vector<std::string> schemes =
      o.scheme.empty() ? std::vector<std::string>{"ec", "ceo", "ub_symmetric", "cutset"}
                       : o.scheme;
  for (double pdb : o.P_dB) {
    SystemConfig cfg = make_config(o, db_to_linear(pdb));
    Ensemble ens = make_ensemble(cfg, o.n_samples, o.seed);
    for (const auto& name : schemes) {
      double value;
      std::string subset;
      if (is_bound_name(name)) {
        BoundReport rep = run_bound(name, cfg, ens, o.iso_q);
        value = rep.bound_bits;
        subset = subset_str(rep.min_subset, rep.has_min_subset);
      } else {
        RateReport rep = run_rate_scheme(name, cfg, ens);
        value = rep.rate_bits;
        subset = subset_str(rep.min_subset, rep.has_min_subset);
      }
      csv.row({fmt(pdb), name, fmt(value), subset, std::to_string(ens.seed),
               std::to_string(ens.size()), kVersion});
      std::cout << "P=" << pdb << "dB " << name << " value=" << value << "\n";
    }
  }
  csv.flush();
  return 0;
}

int run_preset_fig2(const Options& base) {
  Options o = base;  // n_samples, seed, out still apply
  o.r = 2;
  o.t = 2;
  o.C = {2.0};
  o.P_dB = {7.0};
  CsvWriter csv(o.out, "theta,mean_q_hi,mean_q_lo,seed,n_samples,version");
  SystemConfig cfg = make_config(o, db_to_linear(o.P_dB[0]));
  Ensemble ens = make_ensemble(cfg, o.n_samples, o.seed);
  const int npts = 41;
  std::vector<double> q1, q2;
  for (int k = 0; k < npts; ++k) {
    double theta = std::pow(10.0, -2.0 + 3.0 * k / (npts - 1));
    two_agent_profile(cfg, ens, theta, q1, q2);
    // the figure tracks the per-sample larger and smaller level separately
    double hi = 0.0, lo = 0.0;
    for (size_t s = 0; s < q1.size(); ++s) {
      hi += std::max(q1[s], q2[s]);
      lo += std::min(q1[s], q2[s]);
    }
    hi /= q1.size();
    lo /= q1.size();
    csv.row({fmt(theta), fmt(hi), fmt(lo), std::to_string(ens.seed),
             std::to_string(ens.size()), kVersion});
  }
  csv.flush();
  std::cout << "fig2 sweep: " << npts << " theta points at P=" << o.P_dB[0] << "dB\n";
  return 0;
}

int run_preset_fig3(const Options& base) {
  Options o = base;  // n_samples, seed, epsilon, out still apply
  o.r = 2;
  o.t = 2;
  o.C = {2.0};
  o.P_dB.clear();
  for (int p = 0; p <= 20; p += 2) o.P_dB.push_back(p);
  CsvWriter csv(o.out, "P_dB,scheme,fading,epsilon,value_bits,seed,n_samples,version");
  for (double pdb : o.P_dB) {
    SystemConfig cfg = make_config(o, db_to_linear(pdb));
    Ensemble ens = make_ensemble(cfg, o.n_samples, o.seed);
    RateReport ceo = ceo_optimize_joint(cfg, ens);
    BoundReport ub = ub_symmetric(cfg, ens);
    std::vector<double> vc = ceo_outage_values(cfg, ens, o.workers);
    std::vector<double> vu = ub_outage_values(cfg, ens, true, o.workers);
    double rc = supported_rate(vc, o.epsilon);
    double ru = supported_rate(vu, o.epsilon);
    csv.row({fmt(pdb), "ceo", "fast", "0", fmt(ceo.rate_bits), std::to_string(ens.seed),
             std::to_string(ens.size()), kVersion});
    csv.row({fmt(pdb), "ub_symmetric", "fast", "0", fmt(ub.bound_bits),
             std::to_string(ens.seed), std::to_string(ens.size()), kVersion});
    csv.row({fmt(pdb), "ceo", "block", fmt(o.epsilon), fmt(rc), std::to_string(ens.seed),
             std::to_string(ens.size()), kVersion});
    csv.row({fmt(pdb), "ub_part", "block", fmt(o.epsilon), fmt(ru),
             std::to_string(ens.seed), std::to_string(ens.size()), kVersion});
    std::cout << "P=" << pdb << "dB ceo=" << ceo.rate_bits << " ub=" << ub.bound_bits
              << " ceo_out=" << rc << " ub_out=" << ru << "\n";
  }
  csv.flush();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"distributed MIMO reception: rates, bounds, outage, and DMT curves"};
  app.set_config("--config");
  app.add_option("--r", o.r, "number of agents");
  app.add_option("--t", o.t, "transmit antennas");
  app.add_option("--C", o.C, "link capacity in bits (one value, or one per agent)");
  app.add_option("--P-dB", o.P_dB, "transmit power sweep points in dB");
  app.add_option("--n-samples", o.n_samples, "channel samples per sweep point");
  app.add_option("--seed", o.seed, "ensemble seed");
  app.add_option("--out", o.out, "output CSV path");
  app.add_option("--scheme", o.scheme, "scheme selectors (command specific)");
  app.add_option("--bound", o.bound, "bound selectors: cutset ub_fast ub_fast_part ub_symmetric");
  app.add_option("--epsilon", o.epsilon, "outage target");
  app.add_option("--m", o.m_gain, "multiplexing gain for dmt slope data");
  app.add_option("--preset", o.preset, "figure preset: fig2 | fig3");
  app.add_option("--workers", o.workers, "worker threads (0 = hardware)");
  app.add_flag("--iso-q", o.iso_q, "bounds: fix the input covariance at (P/t) I");
  app.add_flag("--slope-data", o.slope_data, "dmt: emit outage-vs-power rows instead of curves");

  auto* c_rates = app.add_subcommand("rates", "fast-fading achievable rates");
  auto* c_bounds = app.add_subcommand("bounds", "fast-fading upper bounds");
  auto* c_outage = app.add_subcommand("outage", "block-fading supported rates");
  auto* c_dmt = app.add_subcommand("dmt", "diversity-multiplexing curves");
  auto* c_two = app.add_subcommand("two-agent", "closed-form two-agent solution");
  auto* c_sweep = app.add_subcommand("sweep", "mixed rate/bound sweep");
  app.require_subcommand(0, 1);
  for (CLI::App* sub : {c_rates, c_bounds, c_outage, c_dmt, c_two, c_sweep})
    sub->fallthrough();  // options may follow the command word

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (!o.preset.empty()) {
      if (o.preset == "fig2") {
        if (o.n_samples < 0) o.n_samples = 1000;
        return run_preset_fig2(o);
      }
      if (o.preset == "fig3") {
        if (o.n_samples < 0) o.n_samples = 1500;
        return run_preset_fig3(o);
      }
      throw BadConfigError("unknown preset: " + o.preset);
    }
    if (o.n_samples < 0) o.n_samples = 1000;
    if (c_rates->parsed()) return cmd_rates(o);
    if (c_bounds->parsed()) return cmd_bounds(o);
    if (c_outage->parsed()) return cmd_outage(o);
    if (c_dmt->parsed()) return cmd_dmt(o);
    if (c_two->parsed()) return cmd_two_agent(o);
    if (c_sweep->parsed()) return cmd_sweep(o);
    std::cerr << "no command given; see --help\n";
    return 2;
  } catch (const BadConfigError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return 2;
  } catch (const BadRangeError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return 2;
  } catch (const InfeasibleCovarianceError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return 2;
  } catch (const TooManyAgentsError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return 2;
  } catch (const EmptySubsetError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return 2;
  } catch (const BadFileError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}
