#pragma once

#include <array>
#include <string>

#include "flq/floquet.hpp"

namespace flq {

// ---------------------------------------------------------------------------
// Multi-indices of total degree q over n0 <= 4 coordinates, graded order.

struct Monomials {
  int n0 = 0, q = 0;
  std::vector<std::array<int, 4>> idx;

  static Monomials all(int n0, int q);
  int count() const { return int(idx.size()); }
  // position of an exponent tuple, -1 when absent
  int find(const std::array<int, 4>& a) const;
};

// power xi^alpha of a coordinate vector
Cplx monomial_value(const CVec& xi, const std::array<int, 4>& a, int n0);

// exp(A) for small dense real matrices (scaled Taylor; n0-sized blocks)
Mat expm(const Mat& A);

// ---------------------------------------------------------------------------
// Center basis around a nonhyperbolic cycle: the trivial direction gamma-dot,
// the near-unit-circle eigenfunction columns, their biorthonormalized adjoint
// rows, and the diagonalized coordinates used by the per-order solves.
// Column coordinates: real xi with block matrix M0t, complex eta = V^-1 xi
// with diagonal exponents mu (real parts forced to zero on the center band).

struct CenterBasis {
  double s = 0.0, T = 0.0, window = 0.0;
  int n0 = 0;
  bool star = false;  // trivial multiplier carries a length-2 chain
  Mat M0t;            // real block on the nontrivial center coordinates
  std::vector<bool> anti;  // per real column: T-antiperiodic sample family

  std::vector<double> tau;  // uniform mesh offsets over [0, window)
  std::vector<Segment> gdot;
  std::vector<CDual> Psi0;  // adjoint row paired with gamma-dot

  CMat V;   // xi = V eta
  CVec mu;  // diagonal exponents of the eta coordinates
  std::vector<int> conj_of;                 // conjugate column index (or self)
  std::vector<std::vector<CSegment>> Phi;   // [col][mesh]
  std::vector<std::vector<CSegment>> dPhi;  // tau-derivatives via family ODE
  std::vector<std::vector<CDual>> Psi;      // [col][mesh]

  std::vector<std::vector<Segment>> Q;  // real columns for reporting

  double pairing_defect = 0.0;  // biorthonormality across blocks and tau
  double basis_residual = 0.0;  // worst closure/ODE defect of the blocks

  int mesh() const { return int(tau.size()); }
  // lift a real coordinate vector into the diagonal coordinates
  CVec to_eta(const Vec& xi) const;
};

// A hyperbolic cycle (simple trivial multiplier, empty unit band otherwise)
// yields a phase-only basis with n0 = 0.
CenterBasis center_basis(const DdeModel& m, const PeriodicOrbit& o, double s,
                         const Discretization& disc,
                         const FloquetOptions& fopt = {}, int mesh = 0);

// ---------------------------------------------------------------------------
// Order-q forcing of the homological equation.  Values live in the sun-star
// space: a head atom plus an embedded segment part.

struct SunStarValue {
  CVec atom;     // coefficient of the head atom
  CSegment seg;  // function part
};

struct ForcingTable {
  Monomials mono;
  std::vector<std::vector<SunStarValue>> val;  // [alpha][mesh]
};

// center projections <Psi0, R> and <Psi_l, R> on the mesh
struct CenterProjection {
  Monomials mono;
  CMat r00;               // count(alpha) x mesh
  std::vector<CMat> r0t;  // per alpha: n0 x mesh
};

CenterProjection project_center(const CenterBasis& cb, const ForcingTable& R);

// ---------------------------------------------------------------------------
// Solved coefficients of one polynomial order.

struct MonomialCoefficients {
  int q = 0;
  Monomials mono;

  // center components and the resonant normal-form coefficients
  CMat h00;               // count(alpha) x mesh
  std::vector<CMat> h0t;  // per alpha: n0 x mesh
  CVec p_hat;             // tau-reparametrization coefficient per alpha
  std::vector<int> p_mode;  // resonant Fourier mode (INT_MIN when none)
  CMat P_hat;               // n0 x count(alpha)
  Eigen::MatrixXi P_mode;

  // complement part, assembled full coefficient, and its tau-derivative
  std::vector<std::vector<CSegment>> hh, h, dh;  // [alpha][mesh]

  std::vector<double> residual;  // order-q equation defect per alpha, relative
  double parity_defect = 0.0;    // wrong-parity mode leakage on 2T windows

  // polynomial samples p_alpha(tau_k), P_alpha(tau_k) of the resonant parts
  Cplx p_sample(const CenterBasis& cb, int a, double tau) const;
  CVec P_sample(const CenterBasis& cb, int a, double tau) const;
};

// Order-q forcing from the model derivatives and already-solved lower orders
// (lower[0] is order 2, and so on).
ForcingTable assemble_forcing(const DdeModel& m, const PeriodicOrbit& o,
                              const CenterBasis& cb,
                              const std::vector<MonomialCoefficients>& lower,
                              int q);

// Scalar center equations per monomial via Fourier diagonalization; divisors
// within resonance_tol of zero move their mode into p/P instead of H.
void solve_homological_center(const CenterBasis& cb, const CenterProjection& pr,
                              MonomialCoefficients& out,
                              double resonance_tol = 1e-6);

struct HyperbolicOptions {
  double deflate_rel = 1e-5;  // singular-value cut of the periodic solve
  int gl_points = 12;         // Gauss-Legendre points per quadrature chunk
  double quad_waves = 4.0;    // chunks per oscillation of the kernel weight
};

// Complement part: per monomial the head trajectory solves a lag-scaled
// linear DDE closed periodically (center directions deflated), and the
// segment profile is reconstructed along characteristics.
void solve_homological_hyperbolic(const DdeModel& m, const PeriodicOrbit& o,
                                  const CenterBasis& cb, const ForcingTable& R,
                                  const CenterProjection& pr,
                                  MonomialCoefficients& out,
                                  const Discretization& disc,
                                  const HyperbolicOptions& hopt = {});

// Cross-check of the periodic complement solve: the same equation integrated
// forward from zero data `periods` windows back (truncated particular
// solution; converges for strongly stable cycles).
std::vector<CSegment> hyperbolic_truncated(
    const DdeModel& m, const PeriodicOrbit& o, const CenterBasis& cb,
    const ForcingTable& R, const CenterProjection& pr, int alpha_index,
    int periods, const Discretization& disc, const HyperbolicOptions& hopt = {});

// Single characteristic equation with explicit exponent nu and mesh-sampled
// forcing (no center deflation of the input; the returned samples are
// projected onto the complement).  `periods <= 0` selects the periodic
// closure, otherwise the truncated forward integral over that many windows.
std::vector<CSegment> hyperbolic_raw(const DdeModel& m, const PeriodicOrbit& o,
                                     const CenterBasis& cb,
                                     const std::vector<SunStarValue>& values,
                                     Cplx nu, int periods,
                                     const Discretization& disc,
                                     const HyperbolicOptions& hopt = {});

// Assembles h = h00 gdot + Phi h0t + hh and the spectral tau-derivative dh,
// then measures the order-q equation residual (head and function parts).
void finalize_order(const DdeModel& m, const PeriodicOrbit& o,
                    const CenterBasis& cb, const ForcingTable& R,
                    MonomialCoefficients& out);

// ---------------------------------------------------------------------------
// Assembled report.

struct NormalFormCoefficient {
  std::string name;
  Cplx value{0.0, 0.0};
  std::array<int, 4> alpha{};
  int component = -1;  // -1: tau-equation coefficient, k >= 0: P component
  double residual = 0.0;
};

struct NormalFormReport {
  std::string label;  // fold | period_doubling | neimark_sacker | generic
  double s = 0.0, T = 0.0, window = 0.0;
  int n0 = 0, order = 0;
  CenterBasis basis;
  std::vector<MonomialCoefficients> orders;   // q = 2 .. order
  std::vector<NormalFormCoefficient> coeffs;  // named resonant coefficients

  double invariance_defect = 0.0;  // rotating-frame constancy of p and P
  double symmetry_defect = 0.0;    // H(tau+T,xi) vs H(tau, S0 xi), 2T windows
  double reality_defect = 0.0;     // imaginary leakage at real xi
  double max_residual = 0.0;       // worst per-monomial equation defect

  // polynomial evaluations at real coordinates
  double p_eval(double tau, const Vec& xi) const;
  Vec P_eval(double tau, const Vec& xi) const;
  // full coefficient field at mesh point k (orders 2..order summed)
  CSegment H_eval_mesh(int k, const Vec& xi) const;
  // flip of the antiperiodic coordinates
  Vec S0_flip(const Vec& xi) const;
};

// End-to-end pipeline.  type: fold | pd | ns | auto; order in {2, 3}.
// Throws std::runtime_error when the detected center structure does not
// match the requested type (pd guard message: "no multiplier in unit band
// near -1").
NormalFormReport normal_form_coefficients(const DdeModel& m,
                                          const PeriodicOrbit& o,
                                          const std::string& type, int order,
                                          const Discretization& disc,
                                          const FloquetOptions& fopt = {},
                                          int mesh = 0);

}  // namespace flq
