#include <cmath>

#include "doctest.h"
#include "flq/orbit.hpp"

using namespace flq;

TEST_CASE("trig series evaluation and derivatives") {
  // gamma(t) = 1 + 2 cos(w t) - 0.5 sin(2 w t), T = 3
  PeriodicOrbit o;
  o.T = 3.0;
  o.coef = Mat::Zero(1, 5);
  o.coef(0, 0) = 1.0;
  o.coef(0, 1) = 2.0;
  o.coef(0, 4) = -0.5;
  double w = o.omega();
  for (double t : {0.0, 0.7, 2.9}) {
    CHECK(o.eval(t)[0] == doctest::Approx(1.0 + 2.0 * std::cos(w * t) -
                                          0.5 * std::sin(2.0 * w * t)));
    CHECK(o.deriv(t)[0] == doctest::Approx(-2.0 * w * std::sin(w * t) -
                                           w * std::cos(2.0 * w * t)));
    CHECK(o.deriv2(t)[0] ==
          doctest::Approx(-2.0 * w * w * std::cos(w * t) +
                          2.0 * w * w * std::sin(2.0 * w * t)));
    CHECK(o.eval(t + o.T)[0] == doctest::Approx(o.eval(t)[0]));
  }
}

TEST_CASE("manufactured orbit: history segments are sine and cosine") {
  DdeModel m = make_builtin("mstar");
  auto ko = known_orbit(m);
  REQUIRE(ko.has_value());
  const PeriodicOrbit& o = *ko;
  CHECK(o.T == doctest::Approx(2.0 * M_PI));
  Segment g0 = o.segment(0.0, 24, m.h);
  Segment gd = o.deriv_segment(0.0, 24, m.h);
  for (double th : {0.0, -0.5, -1.2, -m.h}) {
    CHECK(g0.eval(th)[0] == doctest::Approx(std::sin(th)).epsilon(1e-12));
    CHECK(gd.eval(th)[0] == doctest::Approx(std::cos(th)).epsilon(1e-12));
  }
}

TEST_CASE("orbit residual of exact coefficients") {
  DdeModel m = make_builtin("mstar", {{"kappa", 1.0}});
  PeriodicOrbit o = *known_orbit(m);
  CHECK(orbit_residual(m, o, 64) <= 1e-10);
}

TEST_CASE("orbit json round trip") {
  PeriodicOrbit o;
  o.T = 4.2;
  o.coef = Mat::Random(2, 7);
  PeriodicOrbit back = orbit_from_json_text(orbit_to_json_text(o));
  CHECK(back.T == doctest::Approx(o.T).epsilon(1e-15));
  CHECK((back.coef - o.coef).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS(orbit_from_json_text("{}"));
}

TEST_CASE("trig fit recovers sampled series") {
  PeriodicOrbit truth;
  truth.T = 2.0 * M_PI;
  truth.coef = Mat::Zero(1, 7);
  truth.coef(0, 2) = 1.0;   // sin t
  truth.coef(0, 5) = 0.25;  // cos 3t
  std::vector<double> ts;
  std::vector<Vec> xs;
  for (int k = 0; k < 64; ++k) {
    double t = truth.T * k / 64.0 + 0.1;
    ts.push_back(t);
    xs.push_back(truth.eval(t));
  }
  PeriodicOrbit fit = fit_orbit(ts, xs, truth.T, 3);
  CHECK((fit.coef - truth.coef).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("newton collocation recovers the manufactured cycle") {
  DdeModel m = make_builtin("mstar", {{"kappa", 1.0}});
  PeriodicOrbit o = *known_orbit(m);
  PeriodicOrbit guess = o;
  guess.coef *= 1.05;  // 5% amplitude error
  guess.T *= 1.02;
  PeriodicOrbit solved = solve_periodic_orbit(m, guess);
  CHECK(std::abs(solved.T - 2.0 * M_PI) <= 1e-8);
  double dev = 0.0;
  for (int k = 0; k < 48; ++k) {
    double t = 2.0 * M_PI * k / 48.0;
    // phase anchor may differ; compare against the nearest phase shift
    dev = std::max(dev, std::abs(solved.eval(t)[0] - std::sin(t)));
  }
  // the integral phase condition keeps the manufactured phase
  CHECK(dev <= 1e-8);
}

TEST_CASE("linearization kernel along the orbit") {
  double kappa = 0.8;
  DdeModel m = make_builtin("mstar", {{"kappa", kappa}});
  PeriodicOrbit o = *known_orbit(m);
  double t = 1.3;
  Kernel k = eval_linearization(m, o, t);
  REQUIRE(k.A.size() == 2);
  CHECK(k.tau[0] == 0.0);
  CHECK(k.tau[1] == doctest::Approx(M_PI / 2));
  double x0 = std::sin(t), x1 = std::sin(t - M_PI / 2);
  CHECK(k.A[0](0, 0) == doctest::Approx(-x1 * 2.0 * kappa * x0).epsilon(1e-12));
  CHECK(k.A[1](0, 0) ==
        doctest::Approx(-(1.0 + kappa * (x0 * x0 + 3.0 * x1 * x1 - 1.0)))
            .epsilon(1e-12));
}

TEST_CASE("multilinear forms against directional finite differences") {
  DdeModel m = make_builtin("mstar", {{"kappa", 1.0}});
  PeriodicOrbit o = *known_orbit(m);
  double t = 0.9, eps = 1e-5;
  Segment u = segment_from_function<double>(1, 16, m.h, [](double th) {
    return Vec::Constant(1, std::cos(th) + 0.2);
  });
  Segment v = segment_from_function<double>(1, 16, m.h, [](double th) {
    return Vec::Constant(1, std::sin(2.0 * th) - 0.4);
  });

  // D2F(u,v) ~ (DF(base+eps v)u - DF(base-eps v)u) / (2 eps)
  Mat base = orbit_lag_values(m, o, t);
  Mat ulv(1, 2), vlv(1, 2);
  for (int j = 0; j <= 1; ++j) {
    ulv(0, j) = u.eval(-m.lag(j))[0];
    vlv(0, j) = v.eval(-m.lag(j))[0];
  }
  auto dfu = [&](const Mat& at) {
    auto A = m.jac(at);
    return (A[0] * ulv.col(0) + A[1] * ulv.col(1)).eval();
  };
  Vec fd = (dfu(base + eps * vlv) - dfu(base - eps * vlv)) / (2.0 * eps);
  Vec d2 = eval_multilinear(m, o, t, std::vector<Segment>{u, v});
  CHECK(d2[0] == doctest::Approx(fd[0]).epsilon(1e-6));

  // constant directions, kappa = 1: D2F(1,1) = -2 x1 (x0 + x1) - 2 x0 ...
  // checked symbolically through the same fd route at a second base point
  Vec d3 = eval_multilinear(m, o, t, std::vector<Segment>{u, u, v});
  auto d2uu = [&](const Mat& at) {
    return m.d2(at, ulv, ulv);
  };
  Vec fd3 = (d2uu(base + eps * vlv) - d2uu(base - eps * vlv)) / (2.0 * eps);
  CHECK(d3[0] == doctest::Approx(fd3[0]).epsilon(1e-6));
}

TEST_CASE("complex multilinear expansion agrees with real bilinearity") {
  DdeModel m = make_builtin("ode_ns");
  PeriodicOrbit o = *known_orbit(m);
  double t = 0.3;
  auto real_seg = [&](double a, double b) {
    return segment_from_function<double>(m.n, 12, m.h, [&](double th) {
      Vec v(m.n);
      for (int i = 0; i < m.n; ++i)
        v[i] = a * std::cos((i + 1) * th) + b * th;
      return v;
    });
  };
  Segment ur = real_seg(1.0, 0.2), ui = real_seg(-0.3, 0.7);
  CSegment u = CSegment::zero(m.n, 12, m.h);
  u.values = ur.values + Cplx(0.0, 1.0) * ui.values;
  CVec got = eval_multilinear(m, o, t, std::vector<CSegment>{u, u});
  Vec rr = eval_multilinear(m, o, t, std::vector<Segment>{ur, ur});
  Vec ii = eval_multilinear(m, o, t, std::vector<Segment>{ui, ui});
  Vec ri = eval_multilinear(m, o, t, std::vector<Segment>{ur, ui});
  for (int i = 0; i < m.n; ++i) {
    CHECK(got[i].real() == doctest::Approx(rr[i] - ii[i]).epsilon(1e-10));
    CHECK(got[i].imag() == doctest::Approx(2.0 * ri[i]).epsilon(1e-10));
  }
}
