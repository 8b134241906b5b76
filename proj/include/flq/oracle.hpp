#pragma once

#include <array>
#include <functional>

#include "flq/model.hpp"
#include "flq/orbit.hpp"

namespace flq {

// ---------------------------------------------------------------------------
// Reference integrator, kept deliberately independent of the collocation
// machinery: explicit RK4 with Richardson step control and quintic Hermite
// dense output.  Step endpoints are aligned with the propagated discontinuity
// ladder of the initial data so the smoothness assumptions of RK4 hold.

struct SimOptions {
  double reltol = 1e-10;
  double abstol = 1e-12;
  double dt_init = 1e-2;
  double dt_max = 0.25;
  long max_steps = 4'000'000;
  int ladder_levels = 3;
};

struct HermitePiece {
  double ta = 0.0, tb = 0.0;
  std::array<double, 6> z{};   // Hermite nodes (each endpoint and midpoint doubled)
  std::array<Vec, 6> c{};      // Newton coefficients
  Vec eval(double t) const;
  Vec deriv(double t) const;
};

struct Trajectory {
  double t0 = 0.0, t1 = 0.0;
  std::function<Vec(double)> init;  // history on [t0 - h, t0]
  std::vector<HermitePiece> pieces;

  Vec eval(double t) const;
  Vec deriv(double t) const;
};

Trajectory simulate(const DdeModel& m, std::function<Vec(double)> init,
                    double t0, double t1, const SimOptions& opt = {});

// ---------------------------------------------------------------------------
// Trajectory probes.

// Times in [tfrom, tto] where component comp crosses `level` with positive
// slope, refined by bisection on the dense output.
std::vector<double> section_crossings(const Trajectory& traj, int comp,
                                      double level, double tfrom, double tto);

// Local maxima (t, value) of a component, separated by at least min_gap.
std::vector<std::pair<double, double>> local_maxima(const Trajectory& traj,
                                                    int comp, double tfrom,
                                                    double tto, double min_gap);

// Mean spacing of the last `use` crossings; requires at least use+1 crossings.
double estimate_period(const std::vector<double>& crossings, int use);

// ---------------------------------------------------------------------------
// Independent linear-stability reference for ODE models (no delays): the
// variational matrix equation integrated with fixed-step RK4.
Mat ode_monodromy_oracle(const DdeModel& m, const PeriodicOrbit& o, int steps);

// ---------------------------------------------------------------------------
// Finite-difference validation of the hand-coded derivative tensors.
// Returns the worst relative error over `draws` random directions.
struct DerivativeCheck {
  double jac = 0.0;  // rhs vs jac
  double d2 = 0.0;   // jac vs d2
  double d3 = 0.0;   // d2 vs d3
};
DerivativeCheck fd_derivative_check(const DdeModel& m, const Mat& base,
                                    int draws, unsigned seed = 12345);

}  // namespace flq
