#pragma once

#include "flq/evolution.hpp"

namespace flq {

// Panel breaks on [0,h] sitting on the snapped-step ladder, so every lag
// offset (where dual densities kink) is a panel boundary.
std::vector<double> ladder_breaks(const std::vector<double>& delays, double h,
                                  double dt_req);

// Default dual-element layout for a model: ladder breaks, collocation degree.
DualLayout ladder_layout(const DdeModel& m, const Discretization& disc);

// Time-reversed kernel: B_j(y) = A_j(tau_j - y)^T.  Solutions e(y) of the
// reversed system are transposed head trajectories c(x) = e(-x)^T of duals
// propagated backward along the original kernel.
template <class S>
StepKernelT<S> reversed_kernel(const StepKernelT<S>& kernel);

// Backward dual propagation U_sun(s,t) f for s < t.  One collocation run of
// the reversed kernel produces the head trajectory on [s,t]; the density at s
// is rebuilt from it and from the unconsumed part of the initial density.
template <class S>
DualT<S> adjoint_propagate(const StepKernelT<S>& kernel, double h,
                           const DualT<S>& f, double t, double s,
                           const Discretization& disc);

Dual adjoint_propagate(const DdeModel& m, const PeriodicOrbit& o,
                       const Dual& f, double t, double s,
                       const Discretization& disc);

// u(s) = U_sun(s,t) psi + int_t^s U_sun(s,r) f(r) dr, the variation-of-
// constants representation of the inhomogeneous adjoint equation
// d*u = -A*(.)u + f, by Gauss-Legendre quadrature in r (f continuous).
Dual adjoint_var_const(const DdeModel& m, const PeriodicOrbit& o,
                       const Dual& psi, const std::function<Dual(double)>& f,
                       double t, double s, const Discretization& disc,
                       int quad = 24);

// Re-expresses a dual on another panel mesh by sampling its density (one-sided
// at shared breaks).  Exact when the target breaks contain the source breaks.
template <class S>
DualT<S> resample_dual(const DualT<S>& d, int deg,
                       const std::vector<double>& breaks);

// <f, u_t> with the history of flow column `col` at time t read directly off
// the flow, avoiding the loss from squeezing a kinked history into one global
// segment polynomial.  Full accuracy needs the kink images t - s (mod panel
// ladder) on the dual's break set.
template <class S>
S pair_dual_flow(const DualT<S>& f, const LinearFlow<S>& flow, double t,
                 int col = 0);

extern template StepKernelT<double> reversed_kernel(const StepKernelT<double>&);
extern template StepKernelT<Cplx> reversed_kernel(const StepKernelT<Cplx>&);
extern template DualT<double> adjoint_propagate(const StepKernelT<double>&,
                                                double, const DualT<double>&,
                                                double, double,
                                                const Discretization&);
extern template DualT<Cplx> adjoint_propagate(const StepKernelT<Cplx>&, double,
                                              const DualT<Cplx>&, double,
                                              double, const Discretization&);
extern template DualT<double> resample_dual(const DualT<double>&, int,
                                            const std::vector<double>&);
extern template DualT<Cplx> resample_dual(const DualT<Cplx>&, int,
                                          const std::vector<double>&);
extern template double pair_dual_flow(const DualT<double>&,
                                      const LinearFlow<double>&, double, int);
extern template Cplx pair_dual_flow(const DualT<Cplx>&, const LinearFlow<Cplx>&,
                                    double, int);

}  // namespace flq
