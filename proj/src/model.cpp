#include "flq/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace flq {

namespace {

using nlohmann::json;

// Entries of a symmetric derivative tensor: the value applies to every
// permutation of the listed index tuple.
struct Entry2 {
  int i, j;
  double v;
};
struct Entry3 {
  int i, j, k;
  double v;
};

double apply_sym2(const std::vector<Entry2>& es, const Vec& u, const Vec& w) {
  double s = 0.0;
  for (const auto& e : es) {
    s += e.v * u[e.i] * w[e.j];
    if (e.i != e.j) s += e.v * u[e.j] * w[e.i];
  }
  return s;
}

double apply_sym3(const std::vector<Entry3>& es, const Vec& u, const Vec& w,
                  const Vec& z) {
  double s = 0.0;
  for (const auto& e : es) {
    int idx[3] = {e.i, e.j, e.k};
    std::sort(idx, idx + 3);
    do {
      s += e.v * u[idx[0]] * w[idx[1]] * z[idx[2]];
    } while (std::next_permutation(idx, idx + 3));
  }
  return s;
}

DdeModel make_mstar(std::map<std::string, double> p, std::vector<double> del) {
  DdeModel m;
  m.name = "mstar";
  m.n = 1;
  m.delays = del.empty() ? std::vector<double>{M_PI / 2} : del;
  m.h = m.delays.back();
  m.params = p;
  double k = m.param("kappa", 1.0);
  m.rhs = [k](const LagValues& v) {
    double x0 = v(0, 0), x1 = v(0, 1);
    Vec f(1);
    f[0] = -x1 * (1.0 + k * (x0 * x0 + x1 * x1 - 1.0));
    return f;
  };
  m.jac = [k](const LagValues& v) {
    double x0 = v(0, 0), x1 = v(0, 1);
    std::vector<Mat> A(2, Mat(1, 1));
    A[0](0, 0) = -2.0 * k * x0 * x1;
    A[1](0, 0) = -1.0 - k * (x0 * x0 + 3.0 * x1 * x1 - 1.0);
    return A;
  };
  m.d2 = [k](const LagValues& v, const LagValues& u, const LagValues& w) {
    double x0 = v(0, 0), x1 = v(0, 1);
    Vec f(1);
    f[0] = -2.0 * k * x1 * u(0, 0) * w(0, 0) -
           2.0 * k * x0 * (u(0, 0) * w(0, 1) + u(0, 1) * w(0, 0)) -
           6.0 * k * x1 * u(0, 1) * w(0, 1);
    return f;
  };
  m.d3 = [k](const LagValues&, const LagValues& u, const LagValues& w,
             const LagValues& z) {
    Vec f(1);
    f[0] = -2.0 * k *
               (u(0, 0) * w(0, 0) * z(0, 1) + u(0, 0) * w(0, 1) * z(0, 0) +
                u(0, 1) * w(0, 0) * z(0, 0)) -
           6.0 * k * u(0, 1) * w(0, 1) * z(0, 1);
    return f;
  };
  return m;
}

DdeModel make_mackey_glass(std::map<std::string, double> p,
                           std::vector<double> del) {
  DdeModel m;
  m.name = "mackey_glass";
  m.n = 1;
  m.delays = del.empty() ? std::vector<double>{2.0} : del;
  m.h = m.delays.back();
  m.params = p;
  double beta = m.param("beta", 2.0);
  double gamma = m.param("gamma", 1.0);
  double rho = m.param("rho", 9.65);
  // g(v) = v/(1+v^rho) and its first three derivatives; valid for v > 0.
  auto g123 = [rho](double v, int order) {
    double u = std::pow(v, rho);
    double D = 1.0 + u;
    switch (order) {
      case 0:
        return v / D;
      case 1:
        return (1.0 + (1.0 - rho) * u) / (D * D);
      case 2:
        return -(rho * u / v) * ((1.0 + rho) + (1.0 - rho) * u) / (D * D * D);
      default:
        return (rho * u / (v * v)) *
               ((1.0 - rho * rho) * (1.0 + u * u) + (2.0 + 4.0 * rho * rho) * u) /
               (D * D * D * D);
    }
  };
  m.rhs = [=](const LagValues& v) {
    Vec f(1);
    f[0] = beta * g123(v(0, 1), 0) - gamma * v(0, 0);
    return f;
  };
  m.jac = [=](const LagValues& v) {
    std::vector<Mat> A(2, Mat(1, 1));
    A[0](0, 0) = -gamma;
    A[1](0, 0) = beta * g123(v(0, 1), 1);
    return A;
  };
  m.d2 = [=](const LagValues& v, const LagValues& u, const LagValues& w) {
    Vec f(1);
    f[0] = beta * g123(v(0, 1), 2) * u(0, 1) * w(0, 1);
    return f;
  };
  m.d3 = [=](const LagValues& v, const LagValues& u, const LagValues& w,
             const LagValues& z) {
    Vec f(1);
    f[0] = beta * g123(v(0, 1), 3) * u(0, 1) * w(0, 1) * z(0, 1);
    return f;
  };
  return m;
}

DdeModel make_delayed_logistic(std::map<std::string, double> p,
                               std::vector<double> del) {
  DdeModel m;
  m.name = "delayed_logistic";
  m.n = 1;
  m.delays = del.empty() ? std::vector<double>{1.0} : del;
  m.h = m.delays.back();
  m.params = p;
  double r = m.param("r", 1.8);
  m.rhs = [r](const LagValues& v) {
    Vec f(1);
    f[0] = r * v(0, 0) * (1.0 - v(0, 1));
    return f;
  };
  m.jac = [r](const LagValues& v) {
    std::vector<Mat> A(2, Mat(1, 1));
    A[0](0, 0) = r * (1.0 - v(0, 1));
    A[1](0, 0) = -r * v(0, 0);
    return A;
  };
  m.d2 = [r](const LagValues&, const LagValues& u, const LagValues& w) {
    Vec f(1);
    f[0] = -r * (u(0, 0) * w(0, 1) + u(0, 1) * w(0, 0));
    return f;
  };
  m.d3 = [](const LagValues&, const LagValues&, const LagValues&,
            const LagValues&) { return Vec::Zero(1); };
  return m;
}

DdeModel make_null(std::map<std::string, double> p, std::vector<double> del) {
  DdeModel m;
  m.name = "null";
  m.n = 1;
  m.delays = del.empty() ? std::vector<double>{1.0} : del;
  m.h = m.delays.back();
  m.params = p;
  m.rhs = [](const LagValues&) { return Vec::Zero(1); };
  m.jac = [](const LagValues&) {
    return std::vector<Mat>{Mat::Zero(1, 1), Mat::Zero(1, 1)};
  };
  m.d2 = [](const LagValues&, const LagValues&, const LagValues&) {
    return Vec::Zero(1);
  };
  m.d3 = [](const LagValues&, const LagValues&, const LagValues&,
            const LagValues&) { return Vec::Zero(1); };
  return m;
}

// Zero-delay wrappers: the DDE has no lagged argument, column 0 is all the
// rhs sees, and the horizon h only sets the state space C([-h,0],R^n).
DdeModel ode_base(const std::string& name, int n,
                  std::map<std::string, double> p, double h_default) {
  DdeModel m;
  m.name = name;
  m.n = n;
  m.delays = {};
  m.params = p;
  m.h = m.param("h", h_default);
  return m;
}

DdeModel make_ode_vdp(std::map<std::string, double> p) {
  DdeModel m = ode_base("ode_vdp", 2, p, 1.0);
  double mu = m.param("mu", 1.0);
  m.rhs = [mu](const LagValues& v) {
    Vec f(2);
    f[0] = v(1, 0);
    f[1] = mu * (1.0 - v(0, 0) * v(0, 0)) * v(1, 0) - v(0, 0);
    return f;
  };
  m.jac = [mu](const LagValues& v) {
    Mat A(2, 2);
    A << 0.0, 1.0, -2.0 * mu * v(0, 0) * v(1, 0) - 1.0,
        mu * (1.0 - v(0, 0) * v(0, 0));
    return std::vector<Mat>{A};
  };
  m.d2 = [mu](const LagValues& v, const LagValues& u, const LagValues& w) {
    Vec f = Vec::Zero(2);
    std::vector<Entry2> es = {{0, 0, -2.0 * mu * v(1, 0)},
                              {0, 1, -2.0 * mu * v(0, 0)}};
    f[1] = apply_sym2(es, u.col(0), w.col(0));
    return f;
  };
  m.d3 = [mu](const LagValues&, const LagValues& u, const LagValues& w,
              const LagValues& z) {
    Vec f = Vec::Zero(2);
    std::vector<Entry3> es = {{0, 0, 1, -2.0 * mu}};
    f[1] = apply_sym3(es, u.col(0), w.col(0), z.col(0));
    return f;
  };
  return m;
}

DdeModel make_ode_rotation(std::map<std::string, double> p) {
  DdeModel m = ode_base("ode_rotation", 2, p, 0.7);
  double om = m.param("omega", 1.0);
  m.rhs = [om](const LagValues& v) {
    Vec f(2);
    f[0] = -om * v(1, 0);
    f[1] = om * v(0, 0);
    return f;
  };
  m.jac = [om](const LagValues&) {
    Mat A(2, 2);
    A << 0.0, -om, om, 0.0;
    return std::vector<Mat>{A};
  };
  m.d2 = [](const LagValues&, const LagValues&, const LagValues&) {
    return Vec::Zero(2);
  };
  m.d3 = [](const LagValues&, const LagValues&, const LagValues&,
            const LagValues&) { return Vec::Zero(2); };
  return m;
}

// Planar family x' = -y*w, y' = x*w with w = 1 + b(r-1): every circle is
// invariant, the unit circle is a cycle with a defective double multiplier 1.
DdeModel make_ode_fold(std::map<std::string, double> p) {
  DdeModel m = ode_base("ode_fold", 2, p, 0.8);
  double b = m.param("b", 0.4);
  struct W {
    double w, wx, wy, wxx, wxy, wyy, wxxx, wxxy, wxyy, wyyy;
  };
  auto ww = [b](double x, double y) {
    W o;
    double r2 = x * x + y * y, r = std::sqrt(r2);
    double r3 = r * r2, r5 = r3 * r2;
    o.w = 1.0 + b * (r - 1.0);
    o.wx = b * x / r;
    o.wy = b * y / r;
    o.wxx = b * y * y / r3;
    o.wxy = -b * x * y / r3;
    o.wyy = b * x * x / r3;
    o.wxxx = -3.0 * b * x * y * y / r5;
    o.wxxy = b * y * (2.0 * x * x - y * y) / r5;
    o.wxyy = -b * x * (x * x - 2.0 * y * y) / r5;
    o.wyyy = -3.0 * b * x * x * y / r5;
    return o;
  };
  m.rhs = [ww](const LagValues& v) {
    double x = v(0, 0), y = v(1, 0);
    W o = ww(x, y);
    Vec f(2);
    f[0] = -y * o.w;
    f[1] = x * o.w;
    return f;
  };
  m.jac = [ww](const LagValues& v) {
    double x = v(0, 0), y = v(1, 0);
    W o = ww(x, y);
    Mat A(2, 2);
    A << -y * o.wx, -o.w - y * o.wy, o.w + x * o.wx, x * o.wy;
    return std::vector<Mat>{A};
  };
  m.d2 = [ww](const LagValues& v, const LagValues& u, const LagValues& w) {
    double x = v(0, 0), y = v(1, 0);
    W o = ww(x, y);
    Vec f(2);
    std::vector<Entry2> e1 = {{0, 0, -y * o.wxx},
                              {0, 1, -o.wx - y * o.wxy},
                              {1, 1, -2.0 * o.wy - y * o.wyy}};
    std::vector<Entry2> e2 = {{0, 0, 2.0 * o.wx + x * o.wxx},
                              {0, 1, o.wy + x * o.wxy},
                              {1, 1, x * o.wyy}};
    f[0] = apply_sym2(e1, u.col(0), w.col(0));
    f[1] = apply_sym2(e2, u.col(0), w.col(0));
    return f;
  };
  m.d3 = [ww](const LagValues& v, const LagValues& u, const LagValues& w,
              const LagValues& z) {
    double x = v(0, 0), y = v(1, 0);
    W o = ww(x, y);
    Vec f(2);
    std::vector<Entry3> e1 = {{0, 0, 0, -y * o.wxxx},
                              {0, 0, 1, -o.wxx - y * o.wxxy},
                              {0, 1, 1, -2.0 * o.wxy - y * o.wxyy},
                              {1, 1, 1, -3.0 * o.wyy - y * o.wyyy}};
    std::vector<Entry3> e2 = {{0, 0, 0, 3.0 * o.wxx + x * o.wxxx},
                              {0, 0, 1, 2.0 * o.wxy + x * o.wxxy},
                              {0, 1, 1, o.wyy + x * o.wxyy},
                              {1, 1, 1, x * o.wyyy}};
    f[0] = apply_sym3(e1, u.col(0), w.col(0), z.col(0));
    f[1] = apply_sym3(e2, u.col(0), w.col(0), z.col(0));
    return f;
  };
  return m;
}

// Planar oscillator with an exact unit-circle cycle, plus a transverse pair
// (z1,z2) rotating at rate omega.  On the cycle the transverse multipliers
// are exactly exp(+-i*omega*T); the cubic coefficient of the transverse
// normal form equals c when d = 0.
DdeModel make_ode_ns(std::map<std::string, double> p) {
  DdeModel m = ode_base("ode_ns", 4, p, 0.5);
  double a = m.param("a", 1.0);
  double om = m.param("omega", 2.0);
  double c = m.param("c", 0.3);
  double d = m.param("d", 0.0);
  const double tp = 2.0 * M_PI;
  m.rhs = [=](const LagValues& v) {
    double x = v(0, 0), y = v(1, 0), z1 = v(2, 0), z2 = v(3, 0);
    double s = x * x + y * y - 1.0, q = z1 * z1 + z2 * z2;
    Vec f(4);
    f[0] = -tp * y - a * x * s;
    f[1] = tp * x - a * y * s;
    f[2] = -om * z2 + d * s * z1 + c * q * z1;
    f[3] = om * z1 + d * s * z2 + c * q * z2;
    return f;
  };
  m.jac = [=](const LagValues& v) {
    double x = v(0, 0), y = v(1, 0), z1 = v(2, 0), z2 = v(3, 0);
    double s = x * x + y * y - 1.0, q = z1 * z1 + z2 * z2;
    Mat A = Mat::Zero(4, 4);
    A(0, 0) = -a * (s + 2.0 * x * x);
    A(0, 1) = -tp - 2.0 * a * x * y;
    A(1, 0) = tp - 2.0 * a * x * y;
    A(1, 1) = -a * (s + 2.0 * y * y);
    A(2, 0) = 2.0 * d * x * z1;
    A(2, 1) = 2.0 * d * y * z1;
    A(2, 2) = d * s + c * (q + 2.0 * z1 * z1);
    A(2, 3) = -om + 2.0 * c * z1 * z2;
    A(3, 0) = 2.0 * d * x * z2;
    A(3, 1) = 2.0 * d * y * z2;
    A(3, 2) = om + 2.0 * c * z1 * z2;
    A(3, 3) = d * s + c * (q + 2.0 * z2 * z2);
    return std::vector<Mat>{A};
  };
  m.d2 = [=](const LagValues& v, const LagValues& u, const LagValues& w) {
    double x = v(0, 0), y = v(1, 0), z1 = v(2, 0), z2 = v(3, 0);
    Vec f(4);
    std::vector<Entry2> e0 = {{0, 0, -6.0 * a * x}, {0, 1, -2.0 * a * y},
                              {1, 1, -2.0 * a * x}};
    std::vector<Entry2> e1 = {{0, 0, -2.0 * a * y}, {0, 1, -2.0 * a * x},
                              {1, 1, -6.0 * a * y}};
    std::vector<Entry2> e2 = {{0, 0, 2.0 * d * z1}, {1, 1, 2.0 * d * z1},
                              {0, 2, 2.0 * d * x},  {1, 2, 2.0 * d * y},
                              {2, 2, 6.0 * c * z1}, {2, 3, 2.0 * c * z2},
                              {3, 3, 2.0 * c * z1}};
    std::vector<Entry2> e3 = {{0, 0, 2.0 * d * z2}, {1, 1, 2.0 * d * z2},
                              {0, 3, 2.0 * d * x},  {1, 3, 2.0 * d * y},
                              {3, 3, 6.0 * c * z2}, {2, 3, 2.0 * c * z1},
                              {2, 2, 2.0 * c * z2}};
    f[0] = apply_sym2(e0, u.col(0), w.col(0));
    f[1] = apply_sym2(e1, u.col(0), w.col(0));
    f[2] = apply_sym2(e2, u.col(0), w.col(0));
    f[3] = apply_sym2(e3, u.col(0), w.col(0));
    return f;
  };
  m.d3 = [=](const LagValues&, const LagValues& u, const LagValues& w,
             const LagValues& z) {
    Vec f(4);
    std::vector<Entry3> e0 = {{0, 0, 0, -6.0 * a}, {0, 1, 1, -2.0 * a}};
    std::vector<Entry3> e1 = {{0, 0, 1, -2.0 * a}, {1, 1, 1, -6.0 * a}};
    std::vector<Entry3> e2 = {{0, 0, 2, 2.0 * d},
                              {1, 1, 2, 2.0 * d},
                              {2, 2, 2, 6.0 * c},
                              {2, 3, 3, 2.0 * c}};
    std::vector<Entry3> e3 = {{0, 0, 3, 2.0 * d},
                              {1, 1, 3, 2.0 * d},
                              {3, 3, 3, 6.0 * c},
                              {3, 2, 2, 2.0 * c}};
    f[0] = apply_sym3(e0, u.col(0), w.col(0), z.col(0));
    f[1] = apply_sym3(e1, u.col(0), w.col(0), z.col(0));
    f[2] = apply_sym3(e2, u.col(0), w.col(0), z.col(0));
    f[3] = apply_sym3(e3, u.col(0), w.col(0), z.col(0));
    return f;
  };
  return m;
}

}  // namespace

DdeModel make_builtin(const std::string& builtin,
                      const std::map<std::string, double>& params,
                      const std::vector<double>& delays) {
  if (!delays.empty() &&
      (!std::is_sorted(delays.begin(), delays.end()) || delays.front() <= 0.0))
    throw std::invalid_argument("delays must be positive and ascending");
  DdeModel m;
  if (builtin == "mstar")
    m = make_mstar(params, delays);
  else if (builtin == "mackey_glass")
    m = make_mackey_glass(params, delays);
  else if (builtin == "delayed_logistic")
    m = make_delayed_logistic(params, delays);
  else if (builtin == "null")
    m = make_null(params, delays);
  else if (builtin == "ode_vdp")
    m = make_ode_vdp(params);
  else if (builtin == "ode_fold")
    m = make_ode_fold(params);
  else if (builtin == "ode_ns")
    m = make_ode_ns(params);
  else if (builtin == "ode_rotation")
    m = make_ode_rotation(params);
  else
    throw std::invalid_argument("unknown builtin model: " + builtin);
  if (!delays.empty() && m.delays != delays)
    throw std::invalid_argument("builtin " + builtin + " expects " +
                                std::to_string(m.delays.size()) + " delays");
  return m;
}

DdeModel model_from_json_text(const std::string& text) {
  json j = json::parse(text);
  std::string builtin = j.at("builtin").get<std::string>();
  std::map<std::string, double> params;
  if (j.contains("params"))
    for (auto& [k, v] : j.at("params").items()) params[k] = v.get<double>();
  std::vector<double> delays;
  if (j.contains("delays")) delays = j.at("delays").get<std::vector<double>>();
  DdeModel m = make_builtin(builtin, params, delays);
  if (j.contains("n") && j.at("n").get<int>() != m.n)
    throw std::invalid_argument("model n mismatch for builtin " + builtin);
  if (j.contains("name")) m.name = j.at("name").get<std::string>();
  return m;
}

DdeModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json_text(ss.str());
}

std::string model_to_json_text(const DdeModel& m) {
  json j;
  j["name"] = m.name;
  j["n"] = m.n;
  j["delays"] = m.delays;
  j["params"] = m.params;
  j["builtin"] = m.name;
  j["h"] = m.h;
  return j.dump();
}

std::string model_hash(const DdeModel& m) {
  std::string s = model_to_json_text(m);
  uint64_t x = 1469598103934665603ull;
  for (unsigned char ch : s) {
    x ^= ch;
    x *= 1099511628211ull;
  }
  char buf[17];
  snprintf(buf, sizeof buf, "%016llx", (unsigned long long)x);
  return buf;
}

}  // namespace flq
