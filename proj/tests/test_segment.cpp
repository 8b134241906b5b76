#include <cmath>

#include "doctest.h"
#include "flq/segment.hpp"

using namespace flq;

TEST_CASE("segment node layout and evaluation") {
  double h = 2.0;
  Segment s = segment_from_function<double>(1, 16, h, [](double th) {
    return Vec::Constant(1, std::sin(3.0 * th) + 0.5 * th);
  });
  CHECK(s.node(0) == doctest::Approx(0.0));
  CHECK(s.node(16) == doctest::Approx(-h));
  CHECK(s.head()[0] == doctest::Approx(0.0));
  for (double th : {-1.77, -0.9, -0.123, 0.0})
    CHECK(s.eval(th)[0] ==
          doctest::Approx(std::sin(3.0 * th) + 0.5 * th).epsilon(1e-12));
  CHECK_THROWS(s.eval(0.5));
  CHECK_THROWS(s.eval(-2.5));
}

TEST_CASE("segment derivative is exact for polynomials") {
  double h = 1.5;
  Segment s = segment_from_function<double>(2, 8, h, [](double th) {
    Vec v(2);
    v << th * th * th - th, 2.0 * th * th + 1.0;
    return v;
  });
  Segment d = s.deriv();
  for (double th : {-1.2, -0.4, 0.0}) {
    CHECK(d.eval(th)[0] == doctest::Approx(3.0 * th * th - 1.0).epsilon(1e-12));
    CHECK(d.eval(th)[1] == doctest::Approx(4.0 * th).epsilon(1e-12));
  }
}

TEST_CASE("pack and unpack round trips") {
  Segment s = segment_from_function<double>(3, 6, 1.0, [](double th) {
    Vec v(3);
    v << th, th * th, std::exp(th);
    return v;
  });
  Vec packed = pack_segment(s);
  CHECK(packed.size() == 3 * 7);
  Segment back = unpack_segment<double>(3, 6, 1.0, packed);
  CHECK((back.values - s.values).cwiseAbs().maxCoeff() == 0.0);

  DualLayout L{2, 4, uniform_breaks(1.0, 3)};
  Dual d = Dual::zero(2, 4, L.breaks);
  d.head << 1.0, -2.0;
  for (int p = 0; p < d.density.count(); ++p)
    d.density.panels[p] = Mat::Random(2, 5);
  Vec dv = pack_dual(d);
  CHECK(dv.size() == L.size());
  Dual db = unpack_dual<double>(L, dv);
  CHECK((db.head - d.head).cwiseAbs().maxCoeff() == 0.0);
  for (int p = 0; p < d.density.count(); ++p)
    CHECK((db.density.panels[p] - d.density.panels[p]).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("panel functions: breaks, limits, derivative") {
  std::vector<double> breaks = {0.0, 0.25, 0.7, 1.0};
  PanelFnT<double> f = PanelFnT<double>::zero(1, 5, breaks);
  for (int p = 0; p < f.count(); ++p)
    for (int k = 0; k <= 5; ++k) {
      double th = f.node(p, k);
      f.panels[p](0, k) = th * th + p;  // deliberate jumps at the breaks
    }
  CHECK(f.h() == doctest::Approx(1.0));
  CHECK(f.find_panel(0.1) == 0);
  CHECK(f.find_panel(0.5) == 1);
  CHECK(f.find_panel(0.99) == 2);
  CHECK(f.eval(0.5)[0] == doctest::Approx(0.25 + 1.0).epsilon(1e-12));
  CHECK(f.left_limit(1)[0] == doctest::Approx(0.0625).epsilon(1e-12));
  CHECK(f.right_limit(1)[0] == doctest::Approx(0.0625 + 1.0).epsilon(1e-12));
  PanelFnT<double> df = f.deriv();
  CHECK(df.eval(0.5)[0] == doctest::Approx(1.0).epsilon(1e-11));
  CHECK_THROWS(f.eval(1.5));
}

TEST_CASE("break meshes") {
  auto u = uniform_breaks(2.0, 4);
  REQUIRE(u.size() == 5);
  CHECK(u.front() == 0.0);
  CHECK(u.back() == doctest::Approx(2.0));
  auto l = lag_breaks({0.3, 1.1}, 2.0, 6);
  CHECK(l.front() == 0.0);
  CHECK(l.back() == doctest::Approx(2.0));
  for (double tau : {0.3, 1.1}) {
    bool found = false;
    for (double b : l) found = found || std::abs(b - tau) < 1e-12;
    CHECK(found);
  }
  CHECK(int(l.size()) - 1 >= 6);
}

TEST_CASE("dual pairing: head term and analytic density integral") {
  double h = 1.0;
  Segment phi = segment_from_function<double>(1, 24, h, [](double th) {
    return Vec::Constant(1, std::cos(2.0 * th));
  });
  Dual head_only = Dual::zero(1, 6, uniform_breaks(h, 4));
  head_only.head(0, 0) = 3.0;
  CHECK(pair_dual(head_only, phi) == doctest::Approx(3.0 * 1.0));

  // <(0,g), phi> = int_0^1 sin(th) cos(-2 th) dth
  Dual g = Dual::zero(1, 8, uniform_breaks(h, 8));
  for (int p = 0; p < g.density.count(); ++p)
    for (int k = 0; k <= 8; ++k)
      g.density.panels[p](0, k) = std::sin(g.density.node(p, k));
  double exact = 0.0;
  {
    // int sin(t)cos(2t) dt = [cos(t)/2 - cos(3t)/6]
    auto F = [](double t) { return std::cos(t) / 2.0 - std::cos(3.0 * t) / 6.0; };
    exact = F(1.0) - F(0.0);
  }
  CHECK(pair_dual(g, phi) == doctest::Approx(exact).epsilon(1e-10));

  Segment wrong = segment_from_function<double>(
      1, 8, 2.0, [](double) { return Vec::Zero(1); });
  CHECK_THROWS(pair_dual(g, wrong));
}

TEST_CASE("generator transpose identity on domain members") {
  // polynomial data of low degree keeps every pairing quadrature exact, so
  // <A* f, chi> = <f, A chi> must hold to machine precision
  int n = 2;
  double h = 1.0, tau1 = 0.4;
  Kernel k;
  k.tau = {0.0, tau1};
  Mat A0(2, 2), A1(2, 2);
  A0 << 0.3, -1.1, 0.7, 0.2;
  A1 << -0.5, 0.4, 1.3, -0.9;
  k.A = {A0, A1};

  // chi = p + theta*c with c chosen so the domain condition chi'(0) = L chi
  // holds exactly
  auto p = [](double th) {
    Vec v(2);
    v << 1.0 + th * th - 0.5 * th * th * th, -2.0 + 0.3 * th * th;
    return v;
  };
  auto dp = [](double th) {
    Vec v(2);
    v << 2.0 * th - 1.5 * th * th, 0.6 * th;
    return v;
  };
  Vec Lp = A0 * p(0.0) + A1 * p(-tau1);
  Mat lhs = Mat::Identity(2, 2) + tau1 * A1;
  Vec c = lhs.fullPivLu().solve(Lp - dp(0.0));
  Segment chi = segment_from_function<double>(n, 10, h, [&](double th) {
    return (p(th) + th * c).eval();
  });

  GeneratorValue<double> Achi = apply_generator(k, chi);
  CHECK(Achi.domain_defect < 1e-12);

  // dual with cubic density per panel and jumps across the breaks
  Dual f = Dual::zero(n, 6, uniform_breaks(h, 3));
  f.head << 0.8, -1.4;
  for (int pan = 0; pan < f.density.count(); ++pan)
    for (int kk = 0; kk <= 6; ++kk) {
      double th = f.density.node(pan, kk);
      f.density.panels[pan](0, kk) = 0.5 + th - th * th * th + pan;
      f.density.panels[pan](1, kk) = -1.0 + 2.0 * th * th;
    }

  AdjointGenValue<double> Af = apply_adjoint_generator(k, f);
  double lhs_val = Af.pair_with(chi);
  double rhs_val = pair_dual(f, Achi.dphi);
  CHECK(lhs_val == doctest::Approx(rhs_val).epsilon(1e-12));
}

TEST_CASE("kernel application") {
  Kernel k;
  k.tau = {0.0, 0.5};
  Mat A0(1, 1), A1(1, 1);
  A0 << 2.0;
  A1 << -3.0;
  k.A = {A0, A1};
  Segment phi = segment_from_function<double>(1, 12, 1.0, [](double th) {
    return Vec::Constant(1, std::exp(th));
  });
  double expect = 2.0 * 1.0 - 3.0 * std::exp(-0.5);
  CHECK(k.apply(phi)[0] == doctest::Approx(expect).epsilon(1e-12));
}
