#pragma once

#include <optional>
#include <string>

#include "flq/model.hpp"
#include "flq/segment.hpp"

namespace flq {

// ---------------------------------------------------------------------------
// A periodic orbit stored as a truncated trigonometric series,
//   gamma(t) = c_0 + sum_{k=1..K} a_k cos(k w t) + b_k sin(k w t),  w = 2 pi/T.
// Column layout of coef: [c_0, a_1, b_1, a_2, b_2, ...], one row per component.

struct PeriodicOrbit {
  double T = 0.0;
  Mat coef;  // n x (2K+1)

  int n() const { return int(coef.rows()); }
  int harmonics() const { return int(coef.cols() - 1) / 2; }
  double omega() const { return 2.0 * M_PI / T; }

  Vec eval(double t) const { return eval_deriv(t, 0); }
  Vec deriv(double t) const { return eval_deriv(t, 1); }
  Vec deriv2(double t) const { return eval_deriv(t, 2); }
  Vec eval_deriv(double t, int order) const;

  // gamma_t and its theta-derivative as history segments on [-h,0].
  Segment segment(double t, int N, double h) const;
  Segment deriv_segment(double t, int N, double h) const;
};

PeriodicOrbit orbit_from_json_text(const std::string& text);
std::string orbit_to_json_text(const PeriodicOrbit& o);
PeriodicOrbit load_orbit(const std::string& path);
void save_orbit(const PeriodicOrbit& o, const std::string& path);

// Exact cycles for the builtin models that have one in closed form.
std::optional<PeriodicOrbit> known_orbit(const DdeModel& m);

// ---------------------------------------------------------------------------
// Linearization along the orbit.

// Values of gamma at the lag times of t: column j is gamma(t - tau_j), tau_0=0.
Mat orbit_lag_values(const DdeModel& m, const PeriodicOrbit& o, double t);

// Step kernel of the linearized equation at time t.
Kernel eval_linearization(const DdeModel& m, const PeriodicOrbit& o, double t);

// Lag-value matrix of a history segment (column j = phi(-tau_j)).
template <class S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> segment_lag_values(
    const DdeModel& m, const SegmentT<S>& phi) {
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> L(phi.n(), m.lags() + 1);
  for (int j = 0; j <= m.lags(); ++j) L.col(j) = phi.eval(-m.lag(j));
  return L;
}

// q-th derivative of the right-hand side at gamma_t, applied to q direction
// segments (q = 2 or 3).  Complex directions are expanded by multilinearity.
Vec eval_multilinear(const DdeModel& m, const PeriodicOrbit& o, double t,
                     const std::vector<Segment>& dirs);
CVec eval_multilinear(const DdeModel& m, const PeriodicOrbit& o, double t,
                      const std::vector<CSegment>& dirs);

// Same forms on precomputed lag-value matrices.
Vec eval_multilinear_lv(const DdeModel& m, const Mat& base,
                        const std::vector<Mat>& dir_lv);
CVec eval_multilinear_lv(const DdeModel& m, const Mat& base,
                         const std::vector<CMat>& dir_lv);

// Max norm of gamma'(t) - F(gamma_t) over a sample of times.
double orbit_residual(const DdeModel& m, const PeriodicOrbit& o, int samples);

// ---------------------------------------------------------------------------
// Orbit solving.

struct OrbitSolveOptions {
  int harmonics = 24;
  int max_iter = 60;
  double tol = 1e-12;      // residual tolerance for Newton
  bool fix_period = false; // keep T at its seed value (autonomous phase fixed)
};

// Least-squares trig fit of sampled trajectory data with known period.
PeriodicOrbit fit_orbit(const std::vector<double>& ts,
                        const std::vector<Vec>& xs, double T, int K);

// Newton iteration on trig collocation with an integral phase anchor.
// Throws std::runtime_error if the iteration stalls above tolerance.
PeriodicOrbit solve_periodic_orbit(const DdeModel& m, const PeriodicOrbit& seed,
                                   const OrbitSolveOptions& opt = {});

}  // namespace flq
