#include <cmath>

#include "doctest.h"
#include "flq/model.hpp"
#include "flq/oracle.hpp"

using namespace flq;

namespace {

Mat random_base(int n, int cols, unsigned seed) {
  std::srand(seed);
  return Mat::Random(n, cols) * 0.5 + Mat::Constant(n, cols, 0.9);
}

}  // namespace

TEST_CASE("builtin registry") {
  for (const char* name : {"mstar", "mackey_glass", "delayed_logistic", "null",
                           "ode_vdp", "ode_fold", "ode_ns", "ode_rotation"}) {
    DdeModel m = make_builtin(name);
    CHECK(m.n >= 1);
    CHECK(m.h > 0.0);
    CHECK(m.rhs);
    CHECK(m.jac);
  }
  CHECK_THROWS(make_builtin("no_such_model"));
}

TEST_CASE("delay override") {
  DdeModel m = make_builtin("mackey_glass", {}, {1.3});
  REQUIRE(m.delays.size() == 1);
  CHECK(m.delays[0] == doctest::Approx(1.3));
  CHECK(m.h == doctest::Approx(1.3));
  CHECK_THROWS(make_builtin("mackey_glass", {}, {1.0, 2.0}));
}

TEST_CASE("mstar right-hand side is the manufactured cubic") {
  double kappa = 0.7;
  DdeModel m = make_builtin("mstar", {{"kappa", kappa}});
  REQUIRE(m.n == 1);
  REQUIRE(m.delays.size() == 1);
  CHECK(m.delays[0] == doctest::Approx(M_PI / 2));
  Mat L(1, 2);
  L << 0.3, -0.8;
  double expect = -L(0, 1) * (1.0 + kappa * (L(0, 0) * L(0, 0) +
                                             L(0, 1) * L(0, 1) - 1.0));
  CHECK(m.rhs(L)[0] == doctest::Approx(expect).epsilon(1e-14));

  // gamma(t) = sin t solves the equation for every kappa
  for (double t : {0.0, 0.4, 2.2, 5.0}) {
    Mat G(1, 2);
    G << std::sin(t), std::sin(t - M_PI / 2);
    CHECK(m.rhs(G)[0] == doctest::Approx(std::cos(t)).epsilon(1e-14));
  }
}

TEST_CASE("model json round trip") {
  DdeModel m = make_builtin("mackey_glass", {{"beta", 2.5}}, {1.1});
  std::string text = model_to_json_text(m);
  DdeModel back = model_from_json_text(text);
  CHECK(back.n == m.n);
  CHECK(back.delays == m.delays);
  CHECK(back.param("beta", 0.0) == doctest::Approx(2.5));
  CHECK(model_hash(back) == model_hash(m));

  CHECK_THROWS(model_from_json_text("{\"builtin\":\"mstar\",\"n\":7}"));
  CHECK_THROWS(model_from_json_text("not json"));
}

TEST_CASE("model hash tracks the definition") {
  DdeModel a = make_builtin("mstar");
  DdeModel b = make_builtin("mstar");
  CHECK(model_hash(a) == model_hash(b));
  DdeModel c = make_builtin("mstar", {{"kappa", 2.0}});
  CHECK(model_hash(a) != model_hash(c));
}

TEST_CASE("hand-coded derivative tensors match finite differences") {
  for (const char* name : {"mstar", "mackey_glass", "delayed_logistic",
                           "ode_vdp", "ode_fold", "ode_ns", "ode_rotation"}) {
    DdeModel m = make_builtin(name);
    Mat base = random_base(m.n, m.lags() + 1, 2024);
    DerivativeCheck dc = fd_derivative_check(m, base, 6);
    INFO(name);
    CHECK(dc.jac <= 1e-5);
    CHECK(dc.d2 <= 1e-5);
    CHECK(dc.d3 <= 1e-5);
  }
}

TEST_CASE("null model second derivative is exactly zero against fd noise") {
  DdeModel m = make_builtin("null");
  Mat base = random_base(m.n, m.lags() + 1, 7);
  DerivativeCheck dc = fd_derivative_check(m, base, 6);
  CHECK(dc.d2 <= 1e-9);
}

TEST_CASE("fault injection: a corrupted derivative is detected") {
  DdeModel m = make_builtin("mstar");
  Mat base = random_base(m.n, m.lags() + 1, 99);

  DdeModel bad_jac = m;
  auto jac = m.jac;
  bad_jac.jac = [jac](const LagValues& L) {
    auto A = jac(L);
    A[0](0, 0) += 1.0;
    return A;
  };
  CHECK(fd_derivative_check(bad_jac, base, 6).jac >= 1e-1);

  DdeModel bad_d2 = m;
  auto d2 = m.d2;
  bad_d2.d2 = [d2](const LagValues& L, const LagValues& u, const LagValues& v) {
    Vec r = d2(L, u, v);
    r[0] += 1.0;
    return r;
  };
  CHECK(fd_derivative_check(bad_d2, base, 6).d2 >= 1e-1);
}
