#pragma once

#include <functional>

#include "flq/orbit.hpp"

namespace flq {

// ---------------------------------------------------------------------------
// Discretization parameters for the collocation flow.
//   N   : Chebyshev degree of history segments (state representation)
//   deg : Lobatto collocation degree per integration panel
//   dt  : requested panel width; snapped so panels divide every lag exactly,
//         which keeps propagated derivative discontinuities on boundaries.

struct Discretization {
  int N = 32;
  int deg = 6;
  double dt = 0.0;  // <= 0 means: pick h/24 (or T/40 for lag-free models)
};

// Largest step <= dt_req such that every delay is an integer multiple of it.
double snap_step(const std::vector<double>& delays, double dt_req);

// ---------------------------------------------------------------------------
// Time-dependent step kernel with scalar type S (complex kernels arise from
// characteristic shifts of real problems).

template <class S>
struct StepKernelT {
  using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<double> tau;                      // tau_0 = 0 < tau_1 < ...
  std::function<std::vector<MatS>(double)> A;   // kernel matrices at time t
};

using StepKernel = StepKernelT<double>;
using CStepKernel = StepKernelT<Cplx>;

// Kernel of the linearization along a periodic orbit.
StepKernel orbit_kernel(const DdeModel& m, const PeriodicOrbit& o);
CStepKernel orbit_kernel_complex(const DdeModel& m, const PeriodicOrbit& o);

// ---------------------------------------------------------------------------
// Dense solution of the linear(ized) equation for a batch of initial columns:
//   v'(u) = sum_j A_j(u) v(u - tau_j) - shift * v(u) + forcing(u),  u in [s,e].
// Values are stored at Lobatto nodes of each panel; node storage is one
// (n x batch) block per node so batched evaluation is a weighted block sum.

template <class S>
class LinearFlow {
 public:
  using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  double s = 0.0, e = 0.0, h = 0.0;
  int n = 0, batch = 0, deg = 0, N = 0;
  std::vector<double> bounds;        // panel boundaries, bounds[0] = s
  std::vector<MatS> init_nodes;      // N+1 blocks (n x batch), CGL on [s-h,s]
  std::vector<std::vector<MatS>> panels;  // per panel: deg+1 blocks (n x batch)
  MatS head0;  // optional start value when it differs from the history at s

  // all batch columns at time u in [s-h, e]
  MatS eval(double u) const;
  // left-limit variant: at panel junctions takes the earlier panel's side and
  // never sees the start-value override (the left limit at s is the history).
  MatS eval_left(double u) const;
  // history segment of one column over [t-h, t]
  SegmentT<S> segment(double t, int col) const;
  // nodal state matrix at time t: rows = n*(N+1) (CGL nodes of [t-h,t]), cols = batch
  MatS state_matrix(double t) const;
};

using Flow = LinearFlow<double>;
using CFlow = LinearFlow<Cplx>;

// head0, when given, replaces the history's value at u = s itself: the run
// starts from (head0, init) with a jump at the start time, the natural data
// for backward dual propagation.
template <class S>
LinearFlow<S> propagate_linear(
    const StepKernelT<S>& kernel, double h,
    const std::vector<SegmentT<S>>& init, double s, double e,
    const Discretization& disc, S shift = S(0),
    std::function<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>(double)>
        forcing = nullptr,
    const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>* head0 = nullptr);

// Single-segment convenience: solution segment at time e.
template <class S>
SegmentT<S> propagate(const StepKernelT<S>& kernel, double h,
                      const SegmentT<S>& init, double s, double e,
                      const Discretization& disc);

Segment propagate(const DdeModel& m, const PeriodicOrbit& o,
                  const Segment& init, double s, double e,
                  const Discretization& disc);

// ---------------------------------------------------------------------------
// Monodromy of the linearization over a window w starting at s, as a matrix
// on nodal segment coordinates (dimension n*(N+1)).
Mat monodromy_matrix(const DdeModel& m, const PeriodicOrbit& o, double s,
                     double w, const Discretization& disc);

// Matching dense flow of the full nodal basis (columns in nodal order).
Flow monodromy_flow(const DdeModel& m, const PeriodicOrbit& o, double s,
                    double w, const Discretization& disc);

// Default panel width for a model/orbit pair.
double default_dt(const DdeModel& m, const PeriodicOrbit& o);

extern template class LinearFlow<double>;
extern template class LinearFlow<Cplx>;

}  // namespace flq
