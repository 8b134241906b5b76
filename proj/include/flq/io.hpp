#pragma once

#include <string>
#include <vector>

#include "flq/evolution.hpp"
#include "flq/floquet.hpp"
#include "flq/model.hpp"
#include "flq/normalform.hpp"
#include "flq/oracle.hpp"

namespace flq {

// ---------------------------------------------------------------------------
// Artifact serialization.  Every artifact starts with a provenance header
// (tool version, model hash, discretization); numbers are rendered with
// %.17g so identical runs produce identical bytes.

inline constexpr const char* kToolVersion = "flq 0.1.0";

std::string format_double(double x);

// '#'-prefixed header lines for CSV artifacts.
std::string metadata_header(const DdeModel& m, const Discretization& disc);

// Header lines, one column-name row, then %.17g cells.
std::string csv_text(const std::string& meta,
                     const std::vector<std::string>& columns,
                     const std::vector<std::vector<double>>& rows);

void write_text(const std::string& path, const std::string& text);

// ---------------------------------------------------------------------------
// Artifact bodies.

// Columns: re, im, modulus, sigma_re, sigma_im, alg_mult, residual, center.
std::string multipliers_csv(const DdeModel& m, const Discretization& disc,
                            const std::vector<FloquetMultiplier>& ms);

// Columns: t, x0..x{n-1} on a uniform grid of `samples` points.
std::string trajectory_csv(const DdeModel& m, const Discretization& disc,
                           const Trajectory& tr, double t0, double t1,
                           int samples);

// Full eigenfunction family dump: diagnostics plus nodal samples of each
// chain member on the tau mesh.
std::string eigensystem_json(const DdeModel& m, const Discretization& disc,
                             const PeriodicEigensystem& eig);

// Adjoint family dump: head rows and density panels on the tau mesh.
std::string adjoint_json(const DdeModel& m, const Discretization& disc,
                         const AdjointEigensystem& adj);

// Coefficient tables, residuals, and the invariance diagnostics.
std::string normalform_json(const DdeModel& m, const Discretization& disc,
                            const NormalFormReport& rep);

// Plot-ready samples of the coefficient field H(tau, xi) at one coordinate
// vector xi.  Columns: tau, theta, h0..h{n-1} (real parts).
std::string normalform_h_csv(const DdeModel& m, const Discretization& disc,
                             const NormalFormReport& rep, const Vec& xi);

}  // namespace flq
