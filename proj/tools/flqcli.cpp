// Batch front door: ingest model/orbit JSON, dispatch analyses, emit
// machine-readable results and plot-ready data.
//
// Exit codes: 0 success, 2 configuration error (bad flags, unreadable or
// invalid input files), 3 numerical failure; diagnostics go to stderr.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flq/floquet.hpp"
#include "flq/io.hpp"
#include "flq/normalform.hpp"
#include "flq/oracle.hpp"

namespace fs = std::filesystem;
using namespace flq;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string model_path;
  std::string orbit_path;
  bool solve_orbit = false;
  int mesh = 32;        // collocation nodes per segment
  double dt = 0.0;      // step size, <= 0 picks the default
  int tau_mesh = 0;     // cycle sample count, 0 picks the default
  double band = 0.05;   // unit-circle band half-width
  std::string out = ".";

  // command-specific
  std::vector<double> target = {1.0, 0.0};  // multiplier to analyze
  std::string type = "auto";
  int order = 3;
  std::vector<double> xi;       // coordinate point for the H samples
  double periods = 10.0;        // simulate: cycles to run when an orbit is given
  double duration = 0.0;        // simulate: plain time span otherwise
  double sim_time = 260.0;      // --solve-orbit: transient length
  std::vector<double> init = {1.0};  // simulate: constant history
  int samples = 1001;
};

RunConfig& add_common(CLI::App* sub,
                      std::vector<std::shared_ptr<RunConfig>>& store,
                      bool needs_orbit) {
  auto cfg = std::make_shared<RunConfig>();
  store.push_back(cfg);
  sub->add_option("--model", cfg->model_path, "model JSON file")->required();
  sub->add_option("--orbit", cfg->orbit_path, "periodic orbit JSON file");
  sub->add_flag("--solve-orbit", cfg->solve_orbit,
                "solve for the cycle (simulation seed, then collocation)");
  sub->add_option("--mesh", cfg->mesh, "collocation nodes per segment")
      ->check(CLI::Range(4, 512));
  sub->add_option("--dt", cfg->dt, "propagation step size")
      ->check(CLI::PositiveNumber);
  sub->add_option("--tau-mesh", cfg->tau_mesh, "samples along the cycle")
      ->check(CLI::Range(0, 4096));
  sub->add_option("--band", cfg->band, "unit-circle band half-width")
      ->check(CLI::PositiveNumber);
  sub->add_option("--out", cfg->out, "output directory");
  (void)needs_orbit;
  return *cfg;
}

std::string read_file(const std::string& path, const char* kind) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(std::string(kind) + " file not readable: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

DdeModel load_model_checked(const std::string& path) {
  std::string text = read_file(path, "model");
  try {
    return model_from_json_text(text);
  } catch (const std::exception& e) {
    throw ConfigError("invalid model file " + path + ": " + e.what());
  }
}

PeriodicOrbit load_orbit_checked(const std::string& path) {
  std::string text = read_file(path, "orbit");
  try {
    return orbit_from_json_text(text);
  } catch (const std::exception& e) {
    throw ConfigError("invalid orbit file " + path + ": " + e.what());
  }
}

// Cycle search: integrate past the transient, read the period off section
// crossings of the first component, trig-fit the tail, then polish with
// collocation Newton.  A builtin closed-form cycle short-circuits the
// simulation and serves as the seed directly.
PeriodicOrbit solve_orbit(const DdeModel& m, const RunConfig& cfg) {
  if (auto ko = known_orbit(m)) return solve_periodic_orbit(m, *ko);

  double t1 = cfg.sim_time;
  Trajectory traj = simulate(
      m, [&](double t) { return Vec::Ones(m.n) * (1.0 + 0.3 * std::sin(t)); },
      0.0, t1);

  // level for the crossing section: mean of the tail
  double lo = 0.6 * t1, level = 0.0;
  int nprobe = 400;
  for (int k = 0; k < nprobe; ++k)
    level += traj.eval(lo + (t1 - lo) * k / (nprobe - 1))[0];
  level /= nprobe;

  auto cross = section_crossings(traj, 0, level, lo, t1);
  if (int(cross.size()) < 4)
    throw std::runtime_error("cycle search found too few section crossings");
  int use = std::min<int>(8, int(cross.size()) - 1);
  double T = estimate_period(cross, use);

  double tail = cross.back();
  std::vector<double> ts;
  std::vector<Vec> xs;
  int nfit = 240;
  for (int k = 0; k < nfit; ++k) {
    double t = tail - T + T * k / nfit;
    ts.push_back(t);
    xs.push_back(traj.eval(t));
  }
  PeriodicOrbit seed = fit_orbit(ts, xs, T, 24);
  return solve_periodic_orbit(m, seed);
}

PeriodicOrbit get_orbit(const DdeModel& m, const RunConfig& cfg) {
  if (!cfg.orbit_path.empty()) return load_orbit_checked(cfg.orbit_path);
  if (cfg.solve_orbit) return solve_orbit(m, cfg);
  throw ConfigError("need --orbit FILE or --solve-orbit");
}

Discretization make_disc(const RunConfig& cfg) {
  Discretization d;
  d.N = cfg.mesh;
  d.dt = cfg.dt;
  return d;
}

void ensure_out(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw ConfigError("cannot create output directory " + cfg.out);
}

std::string out_path(const RunConfig& cfg, const char* name) {
  return (fs::path(cfg.out) / name).string();
}

void cmd_multipliers(const RunConfig& cfg) {
  DdeModel m = load_model_checked(cfg.model_path);
  PeriodicOrbit o = get_orbit(m, cfg);
  Discretization disc = make_disc(cfg);
  ensure_out(cfg);

  Mat mono = monodromy_matrix(m, o, 0.0, o.T, disc);
  FloquetOptions fopt;
  fopt.band = cfg.band;
  auto ms = floquet_multipliers(mono, o.T, fopt);
  write_text(out_path(cfg, "mult.csv"), multipliers_csv(m, disc, ms));
}

void cmd_eigfun(const RunConfig& cfg, bool adjoint_side) {
  DdeModel m = load_model_checked(cfg.model_path);
  PeriodicOrbit o = get_orbit(m, cfg);
  Discretization disc = make_disc(cfg);
  ensure_out(cfg);

  Mat mono = monodromy_matrix(m, o, 0.0, o.T, disc);
  FloquetOptions fopt;
  fopt.band = cfg.band;
  auto ms = floquet_multipliers(mono, o.T, fopt);
  Cplx target(cfg.target[0], cfg.target.size() > 1 ? cfg.target[1] : 0.0);
  const FloquetMultiplier& mu = nearest_multiplier(ms, target);

  if (adjoint_side) {
    auto adj =
        periodic_adjoint_eigenfunctions(m, o, mu, 0.0, disc, cfg.tau_mesh);
    write_text(out_path(cfg, "adjoint.json"), adjoint_json(m, disc, adj));
  } else {
    JordanChain chain = jordan_chain(m, o, 0.0, mu, disc);
    auto eig = mu.antiperiodic
                   ? antiperiodic_eigenfunctions(m, o, mu, chain, disc,
                                                 cfg.tau_mesh)
                   : periodic_eigenfunctions(m, o, mu, chain, disc,
                                             cfg.tau_mesh);
    write_text(out_path(cfg, "eigfun.json"), eigensystem_json(m, disc, eig));
  }
}

void cmd_normalform(const RunConfig& cfg) {
  DdeModel m = load_model_checked(cfg.model_path);
  PeriodicOrbit o = get_orbit(m, cfg);
  Discretization disc = make_disc(cfg);
  if (cfg.type != "auto" && cfg.type != "fold" && cfg.type != "pd" &&
      cfg.type != "ns")
    throw ConfigError("unknown --type " + cfg.type);
  if (cfg.order < 2 || cfg.order > 3)
    throw ConfigError("--order must be 2 or 3");
  ensure_out(cfg);

  FloquetOptions fopt;
  fopt.band = cfg.band;
  NormalFormReport rep = normal_form_coefficients(m, o, cfg.type, cfg.order,
                                                  disc, fopt, cfg.tau_mesh);

  Vec xi = Vec::Zero(rep.n0);
  for (int i = 0; i < rep.n0; ++i)
    xi[i] = i < int(cfg.xi.size()) ? cfg.xi[i]
                                   : (cfg.xi.empty() ? 0.1 : cfg.xi.back());
  write_text(out_path(cfg, "normalform.json"), normalform_json(m, disc, rep));
  write_text(out_path(cfg, "normalform_h.csv"),
             normalform_h_csv(m, disc, rep, xi));
}

void cmd_simulate(const RunConfig& cfg) {
  DdeModel m = load_model_checked(cfg.model_path);
  Discretization disc = make_disc(cfg);
  ensure_out(cfg);

  std::function<Vec(double)> init;
  double t1 = 0.0;
  if (!cfg.orbit_path.empty() || cfg.solve_orbit) {
    auto o = std::make_shared<PeriodicOrbit>(get_orbit(m, cfg));
    init = [o](double t) { return o->eval(t); };
    t1 = cfg.periods * o->T;
  } else {
    if (cfg.duration <= 0.0)
      throw ConfigError("need --duration (or an orbit with --periods)");
    Vec c = Vec::Ones(m.n) * cfg.init[0];
    for (int i = 0; i < m.n && i < int(cfg.init.size()); ++i) c[i] = cfg.init[i];
    init = [c](double) { return c; };
    t1 = cfg.duration;
  }

  Trajectory traj = simulate(m, init, 0.0, t1);
  write_text(out_path(cfg, "trajectory.csv"),
             trajectory_csv(m, disc, traj, 0.0, t1, cfg.samples));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floquet analysis of limit cycles of delay equations"};
  app.require_subcommand(1);
  std::vector<std::shared_ptr<RunConfig>> store;

  auto* mult = app.add_subcommand("multipliers", "Floquet multipliers (CSV)");
  RunConfig& cm = add_common(mult, store, true);

  auto* eig = app.add_subcommand("eigfun", "(generalized) eigenfunctions");
  RunConfig& ce = add_common(eig, store, true);
  eig->add_option("--target", ce.target, "multiplier to analyze (re [im])")
      ->expected(1, 2);

  auto* adj = app.add_subcommand("adjoint", "adjoint eigenfunctions");
  RunConfig& ca = add_common(adj, store, true);
  adj->add_option("--target", ca.target, "multiplier to analyze (re [im])")
      ->expected(1, 2);

  auto* nf = app.add_subcommand("normalform", "periodic normal form report");
  RunConfig& cn = add_common(nf, store, true);
  nf->add_option("--type", cn.type, "fold | pd | ns | auto");
  nf->add_option("--order", cn.order, "polynomial order (2 or 3)");
  nf->add_option("--xi", cn.xi, "coordinates for the H sample CSV")
      ->expected(1, 4);

  auto* sim = app.add_subcommand("simulate", "reference integration (CSV)");
  RunConfig& cs = add_common(sim, store, false);
  sim->add_option("--periods", cs.periods, "cycles to run (with an orbit)");
  sim->add_option("--duration", cs.duration, "time span (without an orbit)");
  sim->add_option("--samples", cs.samples, "output rows")
      ->check(CLI::Range(2, 2'000'000));
  sim->add_option("--init", cs.init, "constant history values")
      ->expected(1, 8);

  try {
    app.parse(argc, argv);
    if (mult->parsed()) cmd_multipliers(cm);
    if (eig->parsed()) cmd_eigfun(ce, false);
    if (adj->parsed()) cmd_eigfun(ca, true);
    if (nf->parsed()) cmd_normalform(cn);
    if (sim->parsed()) cmd_simulate(cs);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
