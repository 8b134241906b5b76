#pragma once

#include "flq/adjoint.hpp"

namespace flq {

// ---------------------------------------------------------------------------
// Multipliers of the monodromy operator over one period.

struct FloquetOptions {
  double band = 0.05;        // flag |.|lambda|-1.| <= band as near-critical
  double cluster_rel = 1e-4; // relative gap for clustering repeated multipliers
  double sv_gap = 1e-4;      // singular values below sv_gap*sigma_1 count as null
  double zero_floor = 1e-8;  // moduli below this are lumped into one cluster at 0
};

struct FloquetMultiplier {
  Cplx lambda{0.0, 0.0};
  // exponent: lambda = exp(sigma T); for real negative lambda, sigma is real
  // with exp(sigma T) = |lambda| and the antiperiodic flag is set
  Cplx sigma{0.0, 0.0};
  int alg = 1;    // algebraic multiplicity (cluster size)
  int geo = 1;    // geometric multiplicity (nullity estimate)
  int chain = 1;  // longest-chain / pole-order estimate
  bool conj_pair = false;    // stored once for a conjugate pair (Im > 0 kept)
  bool antiperiodic = false; // real negative: analysis window doubles to 2T
  bool unit_band = false;
  double residual = 0.0;  // min singular value of (lambda I - M), norm-relative
};

// Dense spectrum of the nodal monodromy matrix, clustered into multipliers.
// The window generating `mono` must cover the horizon (T >= h).
std::vector<FloquetMultiplier> floquet_multipliers(
    const Mat& mono, double T, const FloquetOptions& opt = {});

const FloquetMultiplier& nearest_multiplier(
    const std::vector<FloquetMultiplier>& ms, Cplx target);

// ---------------------------------------------------------------------------
// Jordan chains of the monodromy at one multiplier:
//   (M - lambda) v_0 = 0,  (M - lambda) v_i = v_{i-1},  i = 1..m-1.
// Only clusters forming a single chain (chain == alg) are supported; for a
// simple multiplier the chain is the eigenvector.

struct JordanChain {
  Cplx lambda;
  double s = 0.0;             // base time of the monodromy window
  CMat V;                     // packed nodal columns v_0..v_{m-1}
  std::vector<CSegment> phi;  // the same chain as history segments
  double gram_cond = 1.0;     // conditioning of the chain basis
  double residual = 0.0;      // max chain-relation defect, norm-relative
};

JordanChain nodal_jordan_chain(const Mat& mono, const FloquetMultiplier& mu,
                               int n, int N, double h, double s);

JordanChain jordan_chain(const DdeModel& m, const PeriodicOrbit& o, double s,
                         const FloquetMultiplier& mu,
                         const Discretization& disc);

// ---------------------------------------------------------------------------
// Eigenfunction families phi_i(t), i = 0..m-1, built over one closure window
// W (= T, or 2T for the antiperiodic route) from a chain at base time s:
//   d/dt phi_i = d/dtheta phi_i - sigma phi_i - phi_{i-1},   phi_{-1} = 0,
//   phi_i(t + W) = phi_i(t), and phi_i(t + T) = -phi_i(t) when antiperiodic.

struct PeriodicEigensystem {
  Cplx lambda{0.0, 0.0}, sigma{0.0, 0.0};
  bool antiperiodic = false, conj_pair = false;
  double s = 0.0, T = 0.0, window = 0.0;
  int m = 0;
  CMat alpha;  // row i: chain coordinates of the corrected base vector c_i
  CFlow flow;  // trajectories of c_0..c_{m-1} over [s, s+window]
  std::vector<double> tau;                 // sample mesh over [s, s+window)
  std::vector<std::vector<CSegment>> phi;  // phi[i][k] = phi_i(tau[k])
  double closure = 0.0;        // (anti)periodic closure defect, relative
  double ode_residual = 0.0;   // family ODE defect on the mesh, relative
  double transport_residual = 0.0;  // pure-transport defect of phi_0
  double domain_defect = 0.0;  // boundary-condition defect of the samples

  // family member at any time (wraps modulo the window)
  CSegment eval_phi(int i, double t) const;
};

PeriodicEigensystem periodic_eigenfunctions(const DdeModel& m,
                                            const PeriodicOrbit& o,
                                            const FloquetMultiplier& mu,
                                            const JordanChain& chain,
                                            const Discretization& disc,
                                            int mesh = 0);

// Real negative multipliers: same family equations run over W = 2T with the
// real exponent exp(sigma T) = |lambda|, giving T-antiperiodic members.
PeriodicEigensystem antiperiodic_eigenfunctions(const DdeModel& m,
                                                const PeriodicOrbit& o,
                                                const FloquetMultiplier& mu,
                                                const JordanChain& chain,
                                                const Discretization& disc,
                                                int mesh = 0);

// ---------------------------------------------------------------------------
// Adjoint side.  Chains shift the other way and run one period backward:
//   (U_sun(s-T, s) - lambda) psi_i = psi_{i+1},  psi_m = 0,
// so psi_{m-1} is the adjoint eigenvector.

struct AdjointChain {
  Cplx lambda;
  double s = 0.0;
  std::vector<CDual> psi;
  double gram_cond = 1.0;
  double residual = 0.0;  // chain defect measured through adjoint_propagate
};

AdjointChain adjoint_jordan_chain(const DdeModel& m, const PeriodicOrbit& o,
                                  double s, const FloquetMultiplier& mu,
                                  const Discretization& disc);

// Adjoint families psi_i(t) (duals), closing over the same window, with
//   d/dt psi_i = -Astar(t) psi_i + sigma psi_i + psi_{i+1}   (weakly),
// biorthogonal to the forward family after normalization.

struct AdjointEigensystem {
  Cplx lambda{0.0, 0.0}, sigma{0.0, 0.0};
  bool antiperiodic = false, conj_pair = false;
  double s = 0.0, T = 0.0, window = 0.0;
  int m = 0;
  CMat alpha;      // correction coefficients of the reversed-time family
  CFlow rflow;     // reversed-kernel trajectories over [-(s+window), -s]
  CStepKernel fwd; // forward kernel, for density assembly
  CMat post;       // output transform (normalization composes into this)
  DualLayout layout;
  std::vector<double> tau;
  std::vector<std::vector<CDual>> psi;  // psi[i][k] = psi_i(tau[k]), transformed
  double closure = 0.0;
  double ode_residual = 0.0;

  CDual eval_psi(int i, double t) const;  // wraps modulo the window
};

AdjointEigensystem periodic_adjoint_eigenfunctions(const DdeModel& m,
                                                   const PeriodicOrbit& o,
                                                   const FloquetMultiplier& mu,
                                                   double s,
                                                   const Discretization& disc,
                                                   int mesh = 0);

// Pairing matrix P(t)_{ji} = <psi_j(t), phi_i(t)>.
CMat pairing_matrix(const AdjointEigensystem& adj,
                    const PeriodicEigensystem& eig, double t);

// Rescales the adjoint family by P(tau0)^{-1} so the pairing becomes the
// identity; returns P(tau0) as it was before normalization.
CMat normalize_biorthogonal(const PeriodicEigensystem& eig,
                            AdjointEigensystem& adj, double tau0);

// ---------------------------------------------------------------------------
// Real-form operators.  A conjugate pair sigma = a+ib contributes the block
// [[a,-b],[b,a]] and column pairs (Re phi_i, -Im phi_i); chains add identity
// blocks on the superdiagonal.

Mat jordan_matrix(const FloquetMultiplier& mu);

// Coordinate map Q_lambda(t) xi = sum_i xi_i (column i), xi real.
Segment floquet_operator(const PeriodicEigensystem& eig, double t,
                         const Vec& xi);

}  // namespace flq
