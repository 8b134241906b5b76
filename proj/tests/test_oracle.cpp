#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "flq/oracle.hpp"

using namespace flq;

TEST_CASE("zero right-hand side extends the history as a constant") {
  DdeModel m = make_builtin("null");
  Trajectory tr = simulate(
      m, [](double) { return Vec::Constant(1, 2.5); }, 0.0, 5.0);
  for (double t : {0.3, 1.7, 4.9})
    CHECK(tr.eval(t)[0] == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("manufactured cycle is shadowed for ten periods") {
  // strongly stable variant, so integration errors contract along the cycle
  DdeModel m = make_builtin("mstar", {{"kappa", -0.5}});
  PeriodicOrbit o = *known_orbit(m);
  double t1 = 10.0 * o.T;
  Trajectory tr = simulate(
      m, [&](double t) { return o.eval(t); }, 0.0, t1);
  double dev = 0.0;
  for (int k = 0; k <= 400; ++k) {
    double t = t1 * k / 400.0;
    dev = std::max(dev, std::abs(tr.eval(t)[0] - std::sin(t)));
  }
  CHECK(dev <= 1e-6);
}

TEST_CASE("trajectory probes on a sine wave") {
  DdeModel m = make_builtin("mstar", {{"kappa", -0.5}});
  PeriodicOrbit o = *known_orbit(m);
  Trajectory tr = simulate(
      m, [&](double t) { return o.eval(t); }, 0.0, 30.0);

  auto cross = section_crossings(tr, 0, 0.0, 0.5, 30.0);
  REQUIRE(int(cross.size()) >= 4);
  for (double c : cross) {
    double q = std::fmod(c, 2.0 * M_PI);
    CHECK(std::min(q, 2.0 * M_PI - q) < 1e-7);  // upward crossings at 2 pi k
  }
  CHECK(estimate_period(cross, int(cross.size()) - 1) ==
        doctest::Approx(2.0 * M_PI).epsilon(1e-8));

  auto maxima = local_maxima(tr, 0, 0.5, 30.0, 1.0);
  REQUIRE(int(maxima.size()) >= 4);
  for (auto [t, v] : maxima) {
    CHECK(v == doctest::Approx(1.0).epsilon(1e-7));
    double q = std::fmod(t - M_PI / 2, 2.0 * M_PI);
    CHECK(std::min(q, 2.0 * M_PI - q) < 1e-5);
  }
}

TEST_CASE("ode variational oracle: trivial multiplier and unit circle") {
  {
    DdeModel m = make_builtin("ode_fold");
    PeriodicOrbit o = *known_orbit(m);
    Mat mono = ode_monodromy_oracle(m, o, 4000);
    Eigen::EigenSolver<Mat> es(mono);
    double best = 1e9;
    for (int i = 0; i < mono.rows(); ++i)
      best = std::min(best, std::abs(es.eigenvalues()[i] - Cplx(1.0, 0.0)));
    CHECK(best <= 1e-8);
  }
  {
    DdeModel m = make_builtin("ode_rotation");
    PeriodicOrbit o = *known_orbit(m);
    Mat mono = ode_monodromy_oracle(m, o, 2000);
    Eigen::EigenSolver<Mat> es(mono);
    for (int i = 0; i < mono.rows(); ++i)
      CHECK(std::abs(es.eigenvalues()[i]) == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("van der pol oracle is self-consistent across step counts") {
  DdeModel m = make_builtin("ode_vdp", {{"mu", 1.0}});

  // locate the cycle by simulation, then polish with collocation
  Trajectory tr = simulate(
      m, [](double) { return (Vec(2) << 2.0, 0.0).finished(); }, 0.0, 60.0);
  auto cross = section_crossings(tr, 0, 0.0, 30.0, 60.0);
  REQUIRE(int(cross.size()) >= 3);
  double T = estimate_period(cross, int(cross.size()) - 1);
  std::vector<double> ts;
  std::vector<Vec> xs;
  for (int k = 0; k < 200; ++k) {
    double t = 60.0 - T + T * k / 200.0;
    ts.push_back(t);
    xs.push_back(tr.eval(t));
  }
  PeriodicOrbit o = solve_periodic_orbit(m, fit_orbit(ts, xs, T, 24));
  CHECK(o.T == doctest::Approx(6.6632868).epsilon(1e-5));

  auto nontrivial = [&](int steps) {
    Mat mono = ode_monodromy_oracle(m, o, steps);
    Eigen::EigenSolver<Mat> es(mono);
    Cplx a = es.eigenvalues()[0], b = es.eigenvalues()[1];
    return std::abs(a - Cplx(1.0, 0.0)) > std::abs(b - Cplx(1.0, 0.0)) ? a : b;
  };
  Cplx lo = nontrivial(2000), hi = nontrivial(4000);
  CHECK(std::abs(lo - hi) / std::abs(hi) <= 1e-6);
  CHECK(std::abs(hi) < 1.0);  // the vdp cycle is stable
}

TEST_CASE("post-flip delay gives a doubled attractor period") {
  DdeModel m = make_builtin("mackey_glass", {}, {1.5});
  Trajectory tr = simulate(
      m, [](double t) { return Vec::Constant(1, 1.0 + 0.3 * std::sin(t)); },
      0.0, 400.0);
  auto maxima = local_maxima(tr, 0, 300.0, 400.0, 1.0);
  REQUIRE(int(maxima.size()) >= 8);
  // alternating heights: consecutive maxima differ, next-but-one agree
  double alt = 0.0, same = 0.0;
  for (size_t k = 2; k < maxima.size(); ++k) {
    alt = std::max(alt, std::abs(maxima[k].second - maxima[k - 1].second));
    same = std::max(same, std::abs(maxima[k].second - maxima[k - 2].second));
  }
  CHECK(alt > 1e-2);
  CHECK(same < 1e-3);

  // spacing between equal-height maxima is ~ twice the crossing period
  auto cross = section_crossings(tr, 0, 1.0, 300.0, 400.0);
  REQUIRE(int(cross.size()) >= 6);
  double Tc = estimate_period(cross, int(cross.size()) - 1);
  CHECK(maxima[4].first - maxima[2].first ==
        doctest::Approx(2.0 * Tc).epsilon(0.05));
}

TEST_CASE("derivative check reports per-order residuals") {
  DdeModel m = make_builtin("mstar", {{"kappa", 1.0}});
  Mat base(1, 2);
  base << 0.7, -0.4;
  DerivativeCheck dc = fd_derivative_check(m, base, 8);
  CHECK(dc.jac <= 1e-5);
  CHECK(dc.d2 <= 1e-5);
  CHECK(dc.d3 <= 1e-5);
}
