#include "flq/orbit.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace flq {

Vec PeriodicOrbit::eval_deriv(double t, int order) const {
  const int K = harmonics();
  const double w = omega();
  Vec r = order == 0 ? Vec(coef.col(0)) : Vec(Vec::Zero(n()));
  for (int k = 1; k <= K; ++k) {
    const double a = k * w * t, f = std::pow(k * w, order);
    double ccos, csin;  // d^order/dt^order of cos/sin(k w t), factor f removed
    switch (order % 4) {
      case 0: ccos = std::cos(a), csin = std::sin(a); break;
      case 1: ccos = -std::sin(a), csin = std::cos(a); break;
      case 2: ccos = -std::cos(a), csin = -std::sin(a); break;
      default: ccos = std::sin(a), csin = -std::cos(a); break;
    }
    r += f * (ccos * coef.col(2 * k - 1) + csin * coef.col(2 * k));
  }
  return r;
}

Segment PeriodicOrbit::segment(double t, int N, double h) const {
  return segment_from_function<double>(n(), N, h,
                                       [&](double th) { return eval(t + th); });
}

Segment PeriodicOrbit::deriv_segment(double t, int N, double h) const {
  return segment_from_function<double>(
      n(), N, h, [&](double th) { return deriv(t + th); });
}

PeriodicOrbit orbit_from_json_text(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  PeriodicOrbit o;
  o.T = j.at("T").get<double>();
  auto rows = j.at("coefficients").get<std::vector<std::vector<double>>>();
  if (rows.empty() || rows[0].empty() || rows[0].size() % 2 == 0)
    throw std::invalid_argument("orbit coefficients must be n x (2K+1)");
  o.coef.resize(int(rows.size()), int(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw std::invalid_argument("ragged orbit coefficient rows");
    for (size_t k = 0; k < rows[i].size(); ++k) o.coef(int(i), int(k)) = rows[i][k];
  }
  if (!(o.T > 0)) throw std::invalid_argument("orbit period must be positive");
  return o;
}

std::string orbit_to_json_text(const PeriodicOrbit& o) {
  nlohmann::json j;
  j["T"] = o.T;
  std::vector<std::vector<double>> rows(o.n());
  for (int i = 0; i < o.n(); ++i)
    rows[i].assign(o.coef.row(i).begin(), o.coef.row(i).end());
  j["coefficients"] = rows;
  return j.dump(2);
}

PeriodicOrbit load_orbit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open orbit file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return orbit_from_json_text(ss.str());
}

void save_orbit(const PeriodicOrbit& o, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write orbit file: " + path);
  out << orbit_to_json_text(o) << "\n";
}

std::optional<PeriodicOrbit> known_orbit(const DdeModel& m) {
  PeriodicOrbit o;
  if (m.name == "mstar") {
    o.T = 2.0 * M_PI;
    o.coef = Mat::Zero(1, 3);
    o.coef(0, 2) = 1.0;  // sin t
    return o;
  }
  if (m.name == "ode_rotation" || m.name == "ode_fold") {
    double w = m.name == "ode_rotation" ? m.param("omega", 1.0) : 1.0;
    o.T = 2.0 * M_PI / w;
    o.coef = Mat::Zero(2, 3);
    o.coef(0, 1) = 1.0;  // cos w t
    o.coef(1, 2) = 1.0;  // sin w t
    return o;
  }
  if (m.name == "ode_ns") {
    o.T = 1.0;
    o.coef = Mat::Zero(4, 3);
    o.coef(0, 1) = 1.0;
    o.coef(1, 2) = 1.0;
    return o;
  }
  return std::nullopt;
}

Mat orbit_lag_values(const DdeModel& m, const PeriodicOrbit& o, double t) {
  Mat L(m.n, m.lags() + 1);
  for (int j = 0; j <= m.lags(); ++j) L.col(j) = o.eval(t - m.lag(j));
  return L;
}

Kernel eval_linearization(const DdeModel& m, const PeriodicOrbit& o, double t) {
  Kernel k;
  k.A = m.jac(orbit_lag_values(m, o, t));
  k.tau.resize(m.lags() + 1);
  for (int j = 0; j <= m.lags(); ++j) k.tau[j] = m.lag(j);
  return k;
}

Vec eval_multilinear_lv(const DdeModel& m, const Mat& base,
                        const std::vector<Mat>& lv) {
  if (lv.size() == 2) return m.d2(base, lv[0], lv[1]);
  if (lv.size() == 3) return m.d3(base, lv[0], lv[1], lv[2]);
  throw std::invalid_argument("multilinear forms of order 2 and 3 only");
}

CVec eval_multilinear_lv(const DdeModel& m, const Mat& base,
                         const std::vector<CMat>& lv) {
  const int q = int(lv.size());
  CVec acc = CVec::Zero(m.n);
  // expand by multilinearity over real/imaginary parts
  for (int mask = 0; mask < (1 << q); ++mask) {
    std::vector<Mat> parts(q);
    int imag_count = 0;
    for (int a = 0; a < q; ++a) {
      if (mask & (1 << a)) {
        parts[a] = lv[a].imag();
        ++imag_count;
      } else {
        parts[a] = lv[a].real();
      }
    }
    Cplx unit(1, 0);
    switch (imag_count % 4) {
      case 1: unit = Cplx(0, 1); break;
      case 2: unit = Cplx(-1, 0); break;
      case 3: unit = Cplx(0, -1); break;
    }
    acc += unit * eval_multilinear_lv(m, base, parts);
  }
  return acc;
}

Vec eval_multilinear(const DdeModel& m, const PeriodicOrbit& o, double t,
                     const std::vector<Segment>& dirs) {
  std::vector<Mat> lv;
  lv.reserve(dirs.size());
  for (const auto& d : dirs) lv.push_back(segment_lag_values(m, d));
  return eval_multilinear_lv(m, orbit_lag_values(m, o, t), lv);
}

CVec eval_multilinear(const DdeModel& m, const PeriodicOrbit& o, double t,
                      const std::vector<CSegment>& dirs) {
  std::vector<CMat> lv;
  lv.reserve(dirs.size());
  for (const auto& d : dirs) lv.push_back(segment_lag_values(m, d));
  return eval_multilinear_lv(m, orbit_lag_values(m, o, t), lv);
}

double orbit_residual(const DdeModel& m, const PeriodicOrbit& o, int samples) {
  double r = 0.0;
  for (int i = 0; i < samples; ++i) {
    double t = o.T * double(i) / samples;
    Vec d = o.deriv(t) - m.rhs(orbit_lag_values(m, o, t));
    r = std::max(r, d.cwiseAbs().maxCoeff());
  }
  return r;
}

PeriodicOrbit fit_orbit(const std::vector<double>& ts,
                        const std::vector<Vec>& xs, double T, int K) {
  if (ts.size() != xs.size() || ts.empty())
    throw std::invalid_argument("fit_orbit: bad sample arrays");
  const int S = int(ts.size()), n = int(xs[0].size());
  const double w = 2.0 * M_PI / T;
  Mat X(S, 2 * K + 1), Y(S, n);
  for (int i = 0; i < S; ++i) {
    X(i, 0) = 1.0;
    for (int k = 1; k <= K; ++k) {
      X(i, 2 * k - 1) = std::cos(k * w * ts[i]);
      X(i, 2 * k) = std::sin(k * w * ts[i]);
    }
    Y.row(i) = xs[i].transpose();
  }
  PeriodicOrbit o;
  o.T = T;
  o.coef = X.colPivHouseholderQr().solve(Y).transpose();
  return o;
}

namespace {

struct CollocationSystem {
  const DdeModel& m;
  PeriodicOrbit ref;      // phase anchor
  int K, M, n;
  bool fix_period;

  int unknowns() const { return n * (2 * K + 1) + (fix_period ? 0 : 1); }
  int equations() const { return n * M + (fix_period ? 0 : 1); }

  PeriodicOrbit decode(const Vec& u) const {
    PeriodicOrbit o;
    o.T = fix_period ? ref.T : u[unknowns() - 1];
    o.coef.resize(n, 2 * K + 1);
    for (int i = 0; i < n; ++i)
      o.coef.row(i) = u.segment(i * (2 * K + 1), 2 * K + 1).transpose();
    return o;
  }

  Vec encode(const PeriodicOrbit& o) const {
    Vec u(unknowns());
    for (int i = 0; i < n; ++i)
      u.segment(i * (2 * K + 1), 2 * K + 1) = o.coef.row(i).transpose();
    if (!fix_period) u[unknowns() - 1] = o.T;
    return u;
  }

  Vec residual(const Vec& u) const {
    PeriodicOrbit o = decode(u);
    Vec r(equations());
    for (int i = 0; i < M; ++i) {
      double t = o.T * double(i) / M;
      r.segment(i * n, n) = o.deriv(t) - m.rhs(orbit_lag_values(m, o, t));
    }
    if (!fix_period) {
      // integral phase anchor against the reference orbit
      double p = 0.0;
      for (int i = 0; i < M; ++i) {
        double s = double(i) / M;
        p += ref.deriv(s * ref.T).dot(o.eval(s * o.T) - ref.eval(s * ref.T));
      }
      r[equations() - 1] = p * ref.T / M;
    }
    return r;
  }
};

}  // namespace

PeriodicOrbit solve_periodic_orbit(const DdeModel& m, const PeriodicOrbit& seed,
                                   const OrbitSolveOptions& opt) {
  const int K = opt.harmonics;
  const int n = seed.n();
  PeriodicOrbit start;
  start.T = seed.T;
  start.coef = Mat::Zero(n, 2 * K + 1);
  const int copy = std::min(int(seed.coef.cols()), 2 * K + 1);
  start.coef.leftCols(copy) = seed.coef.leftCols(copy);

  CollocationSystem sys{m, start, K, 2 * K + 1, n, opt.fix_period};
  Vec u = sys.encode(start);
  Vec r = sys.residual(u);
  double rn = r.cwiseAbs().maxCoeff();

  for (int iter = 0; iter < opt.max_iter && rn > opt.tol; ++iter) {
    Mat J(sys.equations(), sys.unknowns());
    for (int j = 0; j < sys.unknowns(); ++j) {
      const double eps = 1e-6 * std::max(1.0, std::abs(u[j]));
      Vec up = u, um = u;
      up[j] += eps;
      um[j] -= eps;
      J.col(j) = (sys.residual(up) - sys.residual(um)) / (2.0 * eps);
    }
    Vec du = J.colPivHouseholderQr().solve(-r);
    double alpha = 1.0;
    Vec u_next;
    double rn_next = rn;
    for (int back = 0; back < 40; ++back) {
      u_next = u + alpha * du;
      Vec r_next = sys.residual(u_next);
      rn_next = r_next.cwiseAbs().maxCoeff();
      if (rn_next < rn * (1.0 - 1e-4 * alpha) || rn_next < opt.tol) {
        r = r_next;
        break;
      }
      alpha /= 2.0;
    }
    if (rn_next >= rn && rn > opt.tol) break;  // stalled
    u = u_next;
    rn = rn_next;
  }
  if (rn > std::max(opt.tol, 1e-9)) {
    std::ostringstream oss;
    oss << "periodic orbit iteration stalled at residual " << rn;
    throw std::runtime_error(oss.str());
  }
  return sys.decode(u);
}

}  // namespace flq
