#include <cmath>
#include <random>

#include "doctest.h"
#include "flq/adjoint.hpp"

using namespace flq;

namespace {

Dual random_dual(const DualLayout& L, std::mt19937& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Dual f = Dual::zero(L.n, L.deg, L.breaks);
  for (int i = 0; i < L.n; ++i) f.head(0, i) = uni(rng);
  for (auto& P : f.density.panels)
    for (int i = 0; i < P.rows(); ++i)
      for (int k = 0; k < P.cols(); ++k) P(i, k) = uni(rng);
  return f;
}

Segment random_segment(int n, int N, double h, std::mt19937& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  // random low-order trig data keeps the segment well resolved at degree N
  double a = uni(rng), b = uni(rng), c = uni(rng), d = uni(rng);
  return segment_from_function<double>(n, N, h, [&](double th) {
    Vec v(n);
    for (int i = 0; i < n; ++i)
      v[i] = a * std::cos((1 + i) * th + b) + c * std::sin(2.0 * th + d);
    return v;
  });
}

}  // namespace

TEST_CASE("ladder breaks cover the lag offsets") {
  std::vector<double> breaks = ladder_breaks({0.4, 1.0}, 1.0, 0.11);
  CHECK(breaks.front() == 0.0);
  CHECK(breaks.back() == doctest::Approx(1.0));
  for (double off : {0.4, 0.6, 0.2, 0.8}) {  // lags and their differences
    bool hit = false;
    for (double b : breaks) hit = hit || std::abs(b - off) < 1e-10;
    CHECK(hit);
  }
}

TEST_CASE("reversed kernel transposes and reflects the matrices") {
  DdeModel m = make_builtin("mstar", {{"kappa", 1.0}});
  PeriodicOrbit o = *known_orbit(m);
  StepKernel kern = orbit_kernel(m, o);
  StepKernelT<double> rev = reversed_kernel(kern);
  REQUIRE(rev.tau == kern.tau);
  for (double y : {0.0, 0.9, 2.4}) {
    auto B = rev.A(y);
    for (size_t j = 0; j < kern.tau.size(); ++j) {
      Mat expect = kern.A(kern.tau[j] - y)[j].transpose();
      CHECK((B[j] - expect).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
}

TEST_CASE("backward dual propagation is the transpose of the forward flow") {
  DdeModel m = make_builtin("mstar", {{"kappa", 1.0}});
  PeriodicOrbit o = *known_orbit(m);
  StepKernel kern = orbit_kernel(m, o);
  Discretization disc;
  disc.dt = m.h / 24.0;
  DualLayout L = ladder_layout(m, disc);
  std::mt19937 rng(321);

  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Dual f = random_dual(L, rng);
    Segment phi = random_segment(1, disc.N, m.h, rng);
    double span = (trial % 3 == 0) ? m.h / 2 : (trial % 3 == 1) ? m.h : o.T;
    double s = 0.31 + 0.1 * (trial % 5), t = s + span;

    Dual us = adjoint_propagate(kern, m.h, f, t, s, disc);
    double lhs = pair_dual(us, phi);
    Flow fl = propagate_linear<double>(kern, m.h, {phi}, s, t, disc);
    double rhs = pair_dual_flow(f, fl, t);
    worst = std::max(worst, std::abs(lhs - rhs) /
                                std::max(1e-30, std::abs(rhs)));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("dual resampling is exact on refined break sets") {
  DualLayout L{1, 5, uniform_breaks(1.0, 2)};
  std::mt19937 rng(4);
  Dual f = random_dual(L, rng);
  std::vector<double> fine = uniform_breaks(1.0, 4);  // contains the old breaks
  Dual g = resample_dual(f, 5, fine);
  Segment probe = segment_from_function<double>(1, 16, 1.0, [](double th) {
    return Vec::Constant(1, std::cos(3.0 * th) + th);
  });
  CHECK(pair_dual(g, probe) ==
        doctest::Approx(pair_dual(f, probe)).epsilon(1e-12));
}

TEST_CASE("variation of constants recovers a manufactured dual trajectory") {
  // prescribe u(r) = a(r) psi with smooth a, then f = du/dr + A* u must
  // reproduce u(s) through the adjoint variation-of-constants formula; using
  // an eigen-dual of the adjoint generator keeps A* u inside the dual space.
  // Simpler (and independent of spectral machinery): manufacture with
  // f(r) = a'(r) U_sun(r,t0) psi embedded via backward propagation.
  DdeModel m = make_builtin("mstar", {{"kappa", -0.5}});
  PeriodicOrbit o = *known_orbit(m);
  Discretization disc;
  disc.dt = m.h / 24.0;
  StepKernel kern = orbit_kernel(m, o);
  DualLayout L = ladder_layout(m, disc);
  std::mt19937 rng(11);
  Dual psi = random_dual(L, rng);

  double t = 2.0, s = 0.4;
  auto a = [](double r) { return 1.0 + 0.5 * std::sin(1.3 * r); };
  auto da = [](double r) { return 0.65 * std::cos(1.3 * r); };

  // u(r) = a(r) U_sun(r,t) psi solves d u/dr = -A*(r) u + f with
  // f(r) = a'(r) U_sun(r,t) psi, and u(t) = a(t) psi
  auto f = [&](double r) {
    Dual ur = adjoint_propagate(kern, m.h, psi, t, r, disc);
    ur.head *= da(r);
    for (auto& P : ur.density.panels) P *= da(r);
    return ur;
  };
  Dual start = psi;
  start.head *= a(t);
  for (auto& P : start.density.panels) P *= a(t);

  Dual got = adjoint_var_const(m, o, start, f, t, s, disc, 24);
  Dual expect = adjoint_propagate(kern, m.h, psi, t, s, disc);
  expect.head *= a(s);
  for (auto& P : expect.density.panels) P *= a(s);

  Segment probe = random_segment(1, disc.N, m.h, rng);
  double scale = std::abs(pair_dual(expect, probe));
  CHECK(std::abs(pair_dual(got, probe) - pair_dual(expect, probe)) <=
        1e-6 * std::max(1.0, scale));

  // a second probe pins the densities, not just one functional value
  Segment probe2 = random_segment(1, disc.N, m.h, rng);
  CHECK(std::abs(pair_dual(got, probe2) - pair_dual(expect, probe2)) <=
        1e-6 * std::max(1.0, std::abs(pair_dual(expect, probe2))));
}
