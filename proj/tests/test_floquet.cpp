#include <cmath>

#include "doctest.h"
#include "flq/floquet.hpp"
#include "flq/oracle.hpp"

using namespace flq;

namespace {

PeriodicOrbit simulate_and_solve(const DdeModel& m,
                                 std::function<Vec(double)> hist, double t1,
                                 int comp, double level, int harmonics) {
  Trajectory tr = simulate(m, hist, 0.0, t1);
  auto cross = section_crossings(tr, comp, level, 0.75 * t1, t1);
  REQUIRE(int(cross.size()) >= 4);
  double T = estimate_period(cross, std::min<int>(8, int(cross.size()) - 1));
  int S = 400;
  std::vector<double> ts(S);
  std::vector<Vec> xs(S);
  for (int i = 0; i < S; ++i) {
    ts[i] = t1 - T + T * i / S;
    xs[i] = tr.eval(ts[i]);
  }
  return solve_periodic_orbit(m, fit_orbit(ts, xs, T, harmonics));
}

}  // namespace

TEST_CASE("manufactured model: spectrum, trivial family, transport split") {
  DdeModel m = make_builtin("mstar", {{"kappa", 1.0}});
  PeriodicOrbit o = *known_orbit(m);
  Discretization disc;
  disc.dt = m.h / 24.0;
  double s = 0.0;

  Mat mono = monodromy_matrix(m, o, s, o.T, disc);
  auto ms = floquet_multipliers(mono, o.T);
  REQUIRE(!ms.empty());

  const FloquetMultiplier& triv = nearest_multiplier(ms, Cplx(1.0, 0.0));
  CHECK(std::abs(triv.lambda - Cplx(1.0, 0.0)) <= 1e-6);
  CHECK(triv.unit_band);
  CHECK(triv.residual <= 1e-6);

  const FloquetMultiplier& lam2 = nearest_multiplier(ms, Cplx(52.0, 0.0));
  CHECK(lam2.lambda.real() == doctest::Approx(52.2671827478).epsilon(1e-6));
  CHECK(std::abs(lam2.lambda.imag()) < 1e-8);
  CHECK(!lam2.unit_band);
  CHECK(std::exp(lam2.sigma.real() * o.T) ==
        doctest::Approx(std::abs(lam2.lambda)).epsilon(1e-12));

  // trivial eigenfunction is the cycle derivative
  JordanChain jc = jordan_chain(m, o, s, triv, disc);
  CHECK(jc.phi.size() == 1);
  CHECK(jc.residual <= 1e-6);
  {
    CVec v = pack_segment(jc.phi[0]);
    Vec w = pack_segment(o.deriv_segment(s, disc.N, m.h));
    Cplx ratio = v.dot(w.cast<Cplx>()) / Cplx(w.squaredNorm());
    CHECK((v / ratio - w.cast<Cplx>()).norm() / w.norm() <= 1e-6);
  }

  PeriodicEigensystem e1 = periodic_eigenfunctions(m, o, triv, jc, disc);
  CHECK(e1.closure <= 1e-8);
  CHECK(e1.ode_residual <= 1e-6);
  CHECK(e1.transport_residual <= 1e-6);

  // the nontrivial family obeys the ODE but not pure transport
  JordanChain jc2 = jordan_chain(m, o, s, lam2, disc);
  PeriodicEigensystem e2 = periodic_eigenfunctions(m, o, lam2, jc2, disc);
  CHECK(e2.closure <= 1e-8);
  CHECK(e2.ode_residual <= 1e-6);
  CHECK(e2.transport_residual >= 10.0 * e1.transport_residual);

  // eval wraps the window
  CSegment p0 = e1.eval_phi(0, s + 0.4);
  CSegment p1 = e1.eval_phi(0, s + 0.4 + e1.window);
  CHECK((p0.values - p1.values).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("manufactured model: adjoint family and biorthogonality") {
  DdeModel m = make_builtin("mstar", {{"kappa", 1.0}});
  PeriodicOrbit o = *known_orbit(m);
  Discretization disc;
  disc.dt = m.h / 24.0;
  double s = 0.0;

  Mat mono = monodromy_matrix(m, o, s, o.T, disc);
  auto ms = floquet_multipliers(mono, o.T);
  const FloquetMultiplier& triv = nearest_multiplier(ms, Cplx(1.0, 0.0));

  AdjointChain ac = adjoint_jordan_chain(m, o, s, triv, disc);
  CHECK(ac.residual <= 1e-6);

  AdjointEigensystem a1 = periodic_adjoint_eigenfunctions(m, o, triv, s, disc);
  CHECK(a1.closure <= 1e-8);
  CHECK(a1.ode_residual <= 1e-6);

  // <psi(t), cycle derivative segment> is constant for the trivial multiplier
  Cplx p0;
  double drift = 0.0;
  for (int k = 0; k < 8; ++k) {
    double t = s + o.T * k / 8.0;
    Cplx v = pair_dual(a1.eval_psi(0, t), o.deriv_segment(t, disc.N, m.h));
    if (k == 0)
      p0 = v;
    else
      drift = std::max(drift, std::abs(v - p0));
  }
  CHECK(drift / std::abs(p0) <= 1e-6);

  JordanChain jc = jordan_chain(m, o, s, triv, disc);
  PeriodicEigensystem e1 = periodic_eigenfunctions(m, o, triv, jc, disc);
  normalize_biorthogonal(e1, a1, s + 0.7);
  CHECK(std::abs(pairing_matrix(a1, e1, s + 0.7)(0, 0) - 1.0) <= 1e-8);
  CHECK(std::abs(pairing_matrix(a1, e1, s + 3.1)(0, 0) - 1.0) <= 1e-6);
}

TEST_CASE("defective double multiplier: jordan chain and pairing") {
  DdeModel m = make_builtin("ode_fold");
  PeriodicOrbit o = *known_orbit(m);
  const double T = o.T, b = m.param("b", 0.4), s = 0.3;
  Discretization disc;

  Mat mono = monodromy_matrix(m, o, s, T, disc);
  auto ms = floquet_multipliers(mono, T);
  const FloquetMultiplier& mu = nearest_multiplier(ms, Cplx(1.0, 0.0));
  CHECK(std::abs(mu.lambda - Cplx(1.0, 0.0)) <= 1e-7);
  CHECK(mu.alg == 2);
  CHECK(mu.geo == 1);
  CHECK(mu.chain == 2);

  JordanChain ch = jordan_chain(m, o, s, mu, disc);
  REQUIRE(ch.phi.size() == 2);
  CHECK(ch.residual <= 1e-6);

  // nodal chain identities against the monodromy
  CVec v0 = ch.V.col(0), v1 = ch.V.col(1);
  Mat B = mono - Mat::Identity(mono.rows(), mono.cols());
  CHECK((B * v1 - v0).norm() / v0.norm() <= 1e-6);
  CHECK((B * B * v1).norm() / v1.norm() <= 1e-6);

  // v1 matches the analytic generalized direction modulo the v0 freedom:
  // y(t) = n(t) + b t gamma'(t) scaled by 1/(bT)
  Vec gd = pack_segment(o.deriv_segment(s, disc.N, m.h));
  Cplx c0 = v0.dot(gd.cast<Cplx>()) / gd.squaredNorm();
  CHECK((v0 - c0 * gd.cast<Cplx>()).norm() / v0.norm() <= 1e-6);
  Segment ex = segment_from_function<double>(m.n, disc.N, m.h, [&](double th) {
    double t = s + th;
    Vec v(2);
    v << (std::cos(t) - b * t * std::sin(t)) / (b * T),
        (std::sin(t) + b * t * std::cos(t)) / (b * T);
    return v;
  });
  CVec exv = c0 * pack_segment(ex).cast<Cplx>();
  CVec pv1 = v1 - v0 * (v0.dot(v1) / v0.squaredNorm());
  CVec pex = exv - v0 * (v0.dot(exv) / v0.squaredNorm());
  CHECK((pv1 - pex).norm() / pex.norm() <= 1e-5);

  PeriodicEigensystem eig = periodic_eigenfunctions(m, o, mu, ch, disc);
  CHECK(eig.m == 2);
  CHECK(eig.closure <= 1e-8);
  CHECK(eig.ode_residual <= 1e-6);

  AdjointEigensystem adj = periodic_adjoint_eigenfunctions(m, o, mu, s, disc);
  CHECK(adj.closure <= 1e-8);

  normalize_biorthogonal(eig, adj, s);
  CHECK((pairing_matrix(adj, eig, s) - CMat::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() <= 1e-8);
  CHECK((pairing_matrix(adj, eig, s + 0.45 * T) - CMat::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() <= 1e-6);

  // real chain block: log-zero diagonal with the 1/T chain coupling
  Mat J = jordan_matrix(mu);
  REQUIRE(J.rows() == 2);
  CHECK(J(0, 0) == doctest::Approx(0.0));
  CHECK(J(0, 1) == doctest::Approx(1.0 / T));
  CHECK(J(1, 0) == doctest::Approx(0.0));

  Vec xi(2);
  xi << 0.7, -0.4;
  Segment q = floquet_operator(eig, s + 2.0, xi);
  CHECK(q.n() == 2);
  CHECK(q.norm_inf() > 0.0);
}

TEST_CASE("antiperiodic route on a real negative multiplier") {
  DdeModel m = make_builtin("mackey_glass", {}, {1.2});
  PeriodicOrbit o = simulate_and_solve(
      m, [](double t) { return Vec::Constant(1, 1.0 + 0.3 * std::sin(t)); },
      220.0, 0, 1.0, 36);
  CHECK(orbit_residual(m, o, 96) <= 1e-8);

  const double s = 0.4;
  Discretization disc;
  Mat mono = monodromy_matrix(m, o, s, o.T, disc);
  auto ms = floquet_multipliers(mono, o.T);
  const FloquetMultiplier& mu = nearest_multiplier(ms, Cplx(-0.77, 0.0));
  CHECK(mu.lambda.real() == doctest::Approx(-0.767).epsilon(2e-3));
  CHECK(std::abs(mu.lambda.imag()) < 1e-9);
  CHECK(mu.antiperiodic);
  CHECK(std::exp(mu.sigma.real() * o.T) ==
        doctest::Approx(std::abs(mu.lambda)).epsilon(1e-10));
  CHECK(mu.sigma.imag() == 0.0);

  JordanChain ch = jordan_chain(m, o, s, mu, disc);
  PeriodicEigensystem eig = antiperiodic_eigenfunctions(m, o, mu, ch, disc);
  CHECK(eig.window == doctest::Approx(2.0 * o.T));
  CHECK(eig.closure <= 1e-8);
  CHECK(eig.ode_residual <= 1e-4);

  // members flip sign after one period
  double anti = 0.0, scale = 0.0;
  for (double t : {s + 0.3, s + 1.9, s + 0.6 * o.T}) {
    CSegment a = eig.eval_phi(0, t), bseg = eig.eval_phi(0, t + o.T);
    anti = std::max(anti, (bseg.values + a.values).cwiseAbs().maxCoeff());
    scale = std::max(scale, a.values.cwiseAbs().maxCoeff());
  }
  CHECK(anti / scale <= 1e-6);

  AdjointEigensystem adj = periodic_adjoint_eigenfunctions(m, o, mu, s, disc);
  CHECK(adj.closure <= 1e-8);
  normalize_biorthogonal(eig, adj, s);
  CHECK(std::abs(pairing_matrix(adj, eig, s + 1.1)(0, 0) - 1.0) <= 1e-6);

  // families at different multipliers pair to zero
  const FloquetMultiplier& one = nearest_multiplier(ms, Cplx(1.0, 0.0));
  JordanChain ch1 = jordan_chain(m, o, s, one, disc);
  PeriodicEigensystem e1 = periodic_eigenfunctions(m, o, one, ch1, disc);
  double xmax = 0.0;
  for (double t : {s, s + 1.3})
    xmax = std::max(
        xmax, std::abs(pair_dual(adj.eval_psi(0, t), e1.eval_phi(0, t))));
  CMat P0 = pairing_matrix(adj, eig, s);
  CHECK(xmax <= 1e-6 * std::abs(P0(0, 0)));
}

TEST_CASE("zero-delay reduction agrees with the ode variational oracle") {
  DdeModel m = make_builtin("ode_vdp", {{"mu", 1.0}});
  PeriodicOrbit o = simulate_and_solve(
      m, [](double) { return (Vec(2) << 2.0, 0.0).finished(); }, 60.0, 0, 0.0,
      24);

  Discretization disc;
  Mat mono = monodromy_matrix(m, o, 0.0, o.T, disc);
  auto ms = floquet_multipliers(mono, o.T);
  const FloquetMultiplier& triv = nearest_multiplier(ms, Cplx(1.0, 0.0));
  CHECK(std::abs(triv.lambda - Cplx(1.0, 0.0)) <= 1e-6);

  // leading nontrivial multiplier of the collocation operator
  const FloquetMultiplier* lam2 = nullptr;
  for (const auto& f : ms) {
    if (std::abs(f.lambda - Cplx(1.0, 0.0)) < 1e-4) continue;
    if (!lam2 || std::abs(f.lambda) > std::abs(lam2->lambda)) lam2 = &f;
  }
  REQUIRE(lam2 != nullptr);

  Mat vm = ode_monodromy_oracle(m, o, 4000);
  Eigen::EigenSolver<Mat> es(vm);
  Cplx a = es.eigenvalues()[0], bb = es.eigenvalues()[1];
  Cplx oracle = std::abs(a - Cplx(1.0, 0.0)) > std::abs(bb - Cplx(1.0, 0.0))
                    ? a
                    : bb;
  CHECK(std::abs(lam2->lambda - oracle) / std::abs(oracle) <= 1e-4);
}

TEST_CASE("simulated decay toward the cycle matches the leading multiplier") {
  DdeModel m = make_builtin("mackey_glass", {}, {1.2});
  PeriodicOrbit o = simulate_and_solve(
      m, [](double t) { return Vec::Constant(1, 1.0 + 0.3 * std::sin(t)); },
      220.0, 0, 1.0, 36);
  Discretization disc;
  Mat mono = monodromy_matrix(m, o, 0.0, o.T, disc);
  auto ms = floquet_multipliers(mono, o.T);
  double lam2 = std::abs(nearest_multiplier(ms, Cplx(-0.77, 0.0)).lambda);

  // restart near the cycle with a small transverse kick and track the
  // per-period contraction of the deviation from the phase-locked cycle
  double T = o.T, t1 = 14.0 * T;
  Trajectory tr = simulate(
      m, [&](double t) { return o.eval(t) + Vec::Constant(1, 0.02 * std::cos(2.5 * t)); },
      0.0, t1);
  auto cross = section_crossings(tr, 0, 1.0, t1 - 3.0 * T, t1);
  REQUIRE(!cross.empty());
  // asymptotic phase from the last return; orbit reference crossing
  auto ocross = section_crossings(
      simulate(
          m, [&](double t) { return o.eval(t); }, 0.0, 2.0 * T),
      0, 1.0, 0.0, 2.0 * T);
  REQUIRE(!ocross.empty());
  double shift = cross.back() - ocross.back();

  auto deviation = [&](int period) {
    double base = cross.back() - (13 - period) * T;
    double d = 0.0;
    for (int j = 0; j < 24; ++j) {
      double t = base + T * j / 24.0;
      if (t < 0.0 || t > t1) continue;
      d = std::max(d, std::abs(tr.eval(t)[0] - o.eval(t - shift)[0]));
    }
    return d;
  };
  // measure over five consecutive periods after the transient
  double worst = 0.0;
  for (int k = 5; k < 10; ++k) {
    double r = deviation(k + 1) / deviation(k);
    worst = std::max(worst, std::abs(r - lam2) / lam2);
  }
  CHECK(worst <= 0.10);
}
