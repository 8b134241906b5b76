#include <cmath>

#include "doctest.h"
#include "flq/chebyshev.hpp"

using namespace flq;

TEST_CASE("chebyshev grid layout") {
  const ChebGrid& g = ChebGrid::get(16);
  CHECK(g.N == 16);
  CHECK(g.x[0] == doctest::Approx(1.0));
  CHECK(g.x[16] == doctest::Approx(-1.0));
  for (int k = 1; k <= 16; ++k) CHECK(g.x[k] < g.x[k - 1]);
}

TEST_CASE("chebyshev differentiation is exact on polynomials") {
  const ChebGrid& g = ChebGrid::get(12);
  for (int p = 0; p <= 12; ++p) {
    Vec f(13), df(13);
    for (int k = 0; k <= 12; ++k) {
      f[k] = std::pow(g.x[k], p);
      df[k] = p == 0 ? 0.0 : p * std::pow(g.x[k], p - 1);
    }
    CHECK((g.D * f - df).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("clenshaw-curtis weights integrate polynomials exactly") {
  const ChebGrid& g = ChebGrid::get(10);
  for (int p = 0; p <= 10; ++p) {
    Vec f(11);
    for (int k = 0; k <= 10; ++k) f[k] = std::pow(g.x[k], p);
    double exact = (p % 2 == 1) ? 0.0 : 2.0 / (p + 1);
    CHECK(g.quad.dot(f) == doctest::Approx(exact).epsilon(1e-12));
  }
}

TEST_CASE("cumulative integral of cosine") {
  const ChebGrid& g = ChebGrid::get(24);
  Vec f(25);
  for (int k = 0; k <= 24; ++k) f[k] = std::cos(g.x[k]);
  Vec F = g.cumint * f;
  for (int k = 0; k <= 24; ++k)
    CHECK(F[k] == doctest::Approx(std::sin(g.x[k]) - std::sin(-1.0))
                      .epsilon(1e-12));
}

TEST_CASE("nodal-to-coefficient map reproduces chebyshev polynomials") {
  const ChebGrid& g = ChebGrid::get(8);
  // T_3(x) = 4x^3 - 3x, so its coefficient vector is e_3
  Vec f(9);
  for (int k = 0; k <= 8; ++k) f[k] = 4.0 * std::pow(g.x[k], 3) - 3.0 * g.x[k];
  Vec c = g.coef * f;
  for (int j = 0; j <= 8; ++j)
    CHECK(c[j] == doctest::Approx(j == 3 ? 1.0 : 0.0).epsilon(1e-12));
}

TEST_CASE("lobatto grid: ascending nodes, exact quadrature and derivative") {
  const LobattoGrid& g = LobattoGrid::get(6);
  CHECK(g.x[0] == doctest::Approx(-1.0));
  CHECK(g.x[6] == doctest::Approx(1.0));
  for (int k = 1; k <= 6; ++k) CHECK(g.x[k] > g.x[k - 1]);
  CHECK(g.w.sum() == doctest::Approx(2.0).epsilon(1e-13));
  // LGL with p+1 nodes integrates degree 2p-1
  for (int p = 0; p <= 11; ++p) {
    Vec f(7);
    for (int k = 0; k <= 6; ++k) f[k] = std::pow(g.x[k], p);
    double exact = (p % 2 == 1) ? 0.0 : 2.0 / (p + 1);
    CHECK(g.w.dot(f) == doctest::Approx(exact).epsilon(1e-12));
  }
  Vec f(7), df(7);
  for (int k = 0; k <= 6; ++k) {
    f[k] = std::pow(g.x[k], 5);
    df[k] = 5.0 * std::pow(g.x[k], 4);
  }
  CHECK((g.D * f - df).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("gauss-legendre rule is exact to degree 2q-1") {
  Vec x, w;
  gauss_legendre(7, x, w);
  CHECK(w.sum() == doctest::Approx(2.0).epsilon(1e-13));
  for (int p = 0; p <= 13; ++p) {
    double acc = 0.0;
    for (int k = 0; k < 7; ++k) acc += w[k] * std::pow(x[k], p);
    double exact = (p % 2 == 1) ? 0.0 : 2.0 / (p + 1);
    CHECK(acc == doctest::Approx(exact).epsilon(1e-12));
  }
}

TEST_CASE("barycentric interpolation") {
  const ChebGrid& g = ChebGrid::get(20);
  Vec f(21);
  for (int k = 0; k <= 20; ++k) f[k] = std::exp(g.x[k]);
  // exact at the nodes, spectrally accurate between them
  CHECK(bary_eval(g.x, g.bary, f, g.x[7]) == doctest::Approx(f[7]));
  for (double t : {-0.9137, -0.3, 0.111, 0.77}) {
    CHECK(bary_eval(g.x, g.bary, f, t) ==
          doctest::Approx(std::exp(t)).epsilon(1e-13));
    Vec r = bary_eval_weights(g.x, g.bary, t);
    CHECK(r.dot(f) == doctest::Approx(std::exp(t)).epsilon(1e-13));
  }
}

TEST_CASE("barycentric weights on a general node set") {
  Vec nodes(4);
  nodes << -1.0, -0.2, 0.5, 1.0;
  Vec w = bary_weights(nodes);
  Vec f(4);
  for (int k = 0; k < 4; ++k)
    f[k] = 2.0 * std::pow(nodes[k], 3) - nodes[k] + 0.5;
  for (double t : {-0.7, 0.0, 0.8}) {
    double expect = 2.0 * t * t * t - t + 0.5;
    CHECK(bary_eval(nodes, w, f, t) == doctest::Approx(expect).epsilon(1e-12));
  }
}
