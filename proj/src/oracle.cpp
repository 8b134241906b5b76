#include "flq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <stdexcept>

namespace flq {

Vec HermitePiece::eval(double t) const {
  Vec p = c[5];
  for (int k = 4; k >= 0; --k) p = c[k] + (t - z[k]) * p;
  return p;
}

Vec HermitePiece::deriv(double t) const {
  Vec p = c[5], dp = Vec::Zero(c[5].size());
  for (int k = 4; k >= 0; --k) {
    dp = p + (t - z[k]) * dp;
    p = c[k] + (t - z[k]) * p;
  }
  return dp;
}

namespace {

HermitePiece make_piece(double ta, double tm, double tb, const Vec& y0,
                        const Vec& f0, const Vec& ym, const Vec& fm,
                        const Vec& y1, const Vec& f1) {
  HermitePiece P;
  P.ta = ta;
  P.tb = tb;
  P.z = {ta, ta, tm, tm, tb, tb};
  // Newton divided differences with doubled nodes
  std::array<Vec, 6> dd = {y0, y0, ym, ym, y1, y1};
  std::array<Vec, 6> work = dd;
  P.c[0] = dd[0];
  const std::array<Vec, 3> ders = {f0, fm, f1};
  for (int level = 1; level <= 5; ++level) {
    for (int i = 0; i + level < 6; ++i) {
      if (level == 1 && P.z[i + 1] == P.z[i])
        work[i] = ders[i / 2];
      else
        work[i] = (dd[i + 1] - dd[i]) / (P.z[i + level] - P.z[i]);
    }
    dd = work;
    P.c[level] = dd[0];
  }
  return P;
}

int find_piece(const std::vector<HermitePiece>& pieces, double t) {
  int lo = 0, hi = int(pieces.size()) - 1;
  while (lo < hi) {
    int mid = (lo + hi) / 2;
    if (t <= pieces[mid].tb)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

}  // namespace

Vec Trajectory::eval(double t) const {
  if (t <= t0) return init(t);
  if (pieces.empty() || t > t1 + 1e-9 * (1.0 + std::abs(t1)))
    throw std::domain_error("trajectory evaluated outside its span");
  return pieces[find_piece(pieces, t)].eval(std::min(t, t1));
}

Vec Trajectory::deriv(double t) const {
  if (pieces.empty() || t > t1 + 1e-9 * (1.0 + std::abs(t1)))
    throw std::domain_error("trajectory derivative outside its span");
  double tc = std::clamp(t, t0, t1);
  return pieces[find_piece(pieces, tc)].deriv(tc);
}

Trajectory simulate(const DdeModel& m, std::function<Vec(double)> init,
                    double t0, double t1, const SimOptions& opt) {
  Trajectory traj;
  traj.t0 = t0;
  traj.t1 = t0;
  traj.init = std::move(init);

  // discontinuity ladder: initial-data kinks propagate along delay sums
  std::set<double> ladder;
  {
    std::vector<double> level{0.0};
    for (int l = 0; l < opt.ladder_levels; ++l) {
      std::vector<double> next;
      for (double s : level)
        for (double d : m.delays) {
          double v = s + d;
          if (v < t1 - t0 + 1e-12) {
            next.push_back(v);
            ladder.insert(t0 + v);
          }
        }
      level = std::move(next);
      if (level.empty()) break;
    }
  }
  ladder.insert(t1);

  const double tau_min =
      m.delays.empty() ? std::numeric_limits<double>::infinity()
                       : m.delays.front();

  auto hist = [&](double t) -> Vec {
    if (t <= t0 + 1e-14) return traj.init(t);
    return traj.pieces[find_piece(traj.pieces, std::min(t, traj.t1))].eval(t);
  };
  auto f = [&](double t, const Vec& y) -> Vec {
    Mat L(m.n, m.lags() + 1);
    L.col(0) = y;
    for (int j = 1; j <= m.lags(); ++j) L.col(j) = hist(t - m.lag(j));
    return m.rhs(L);
  };
  auto rk4 = [&](double t, const Vec& y, double dt) -> Vec {
    Vec k1 = f(t, y);
    Vec k2 = f(t + dt / 2, y + dt / 2 * k1);
    Vec k3 = f(t + dt / 2, y + dt / 2 * k2);
    Vec k4 = f(t + dt, y + dt * k3);
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  };

  double t = t0;
  Vec y = traj.init(t0);
  Vec f0 = f(t0, y);
  double dt_prop = std::min({opt.dt_init, opt.dt_max, tau_min});
  long steps = 0;

  while (t < t1 - 1e-12 * (1.0 + std::abs(t1))) {
    if (++steps > opt.max_steps)
      throw std::runtime_error("simulate: step budget exhausted");
    double dt = std::min({dt_prop, opt.dt_max, tau_min, t1 - t});
    auto up = ladder.upper_bound(t + 1e-12 * (1.0 + std::abs(t)));
    if (up != ladder.end()) dt = std::min(dt, *up - t);

    Vec yF = rk4(t, y, dt);
    Vec ym = rk4(t, y, dt / 2);
    Vec fm = f(t + dt / 2, ym);
    Vec yH = rk4(t + dt / 2, ym, dt / 2);

    double scale =
        opt.abstol +
        opt.reltol * std::max(y.cwiseAbs().maxCoeff(), yH.cwiseAbs().maxCoeff());
    double err = (yH - yF).cwiseAbs().maxCoeff() / 15.0 / scale;

    if (err <= 1.0) {
      Vec y1 = yH + (yH - yF) / 15.0;
      // dt never exceeds the shortest delay, so every lag time of t+dt lies
      // in already-completed history and the endpoint slope is available now
      Vec f1 = f(t + dt, y1);
      traj.pieces.push_back(
          make_piece(t, t + dt / 2, t + dt, y, f0, ym, fm, y1, f1));
      t += dt;
      traj.t1 = t;
      y = y1;
      f0 = f1;
    }
    double fac = err > 0 ? 0.9 * std::pow(1.0 / err, 0.2) : 5.0;
    dt_prop = dt * std::clamp(fac, 0.2, 5.0);
  }
  return traj;
}

std::vector<double> section_crossings(const Trajectory& traj, int comp,
                                      double level, double tfrom, double tto) {
  std::vector<double> out;
  auto g = [&](double t) { return traj.eval(t)[comp] - level; };
  for (const auto& P : traj.pieces) {
    if (P.tb < tfrom || P.ta > tto) continue;
    const int sub = 8;
    for (int i = 0; i < sub; ++i) {
      double a = P.ta + (P.tb - P.ta) * i / sub;
      double b = P.ta + (P.tb - P.ta) * (i + 1) / sub;
      if (a < tfrom || b > tto) continue;
      double ga = g(a), gb = g(b);
      if (!(ga <= 0.0 && gb > 0.0)) continue;
      for (int it = 0; it < 80 && b - a > 1e-14 * (1.0 + std::abs(b)); ++it) {
        double mid = (a + b) / 2, gm = g(mid);
        (gm <= 0.0 ? a : b) = mid;
        (gm <= 0.0 ? ga : gb) = gm;
      }
      out.push_back((a + b) / 2);
    }
  }
  return out;
}

std::vector<std::pair<double, double>> local_maxima(const Trajectory& traj,
                                                    int comp, double tfrom,
                                                    double tto, double min_gap) {
  std::vector<std::pair<double, double>> out;
  auto dg = [&](double t) { return traj.deriv(t)[comp]; };
  for (const auto& P : traj.pieces) {
    if (P.tb < tfrom || P.ta > tto) continue;
    const int sub = 8;
    for (int i = 0; i < sub; ++i) {
      double a = P.ta + (P.tb - P.ta) * i / sub;
      double b = P.ta + (P.tb - P.ta) * (i + 1) / sub;
      if (a < tfrom || b > tto) continue;
      double da = dg(a), db = dg(b);
      if (!(da > 0.0 && db <= 0.0)) continue;
      for (int it = 0; it < 80 && b - a > 1e-14 * (1.0 + std::abs(b)); ++it) {
        double mid = (a + b) / 2, dm = dg(mid);
        (dm > 0.0 ? a : b) = mid;
      }
      double t = (a + b) / 2;
      if (!out.empty() && t - out.back().first < min_gap) {
        if (traj.eval(t)[comp] > out.back().second)
          out.back() = {t, traj.eval(t)[comp]};
        continue;
      }
      out.emplace_back(t, traj.eval(t)[comp]);
    }
  }
  return out;
}

double estimate_period(const std::vector<double>& crossings, int use) {
  if (int(crossings.size()) < use + 1)
    throw std::invalid_argument("not enough crossings to estimate a period");
  const int last = int(crossings.size()) - 1;
  return (crossings[last] - crossings[last - use]) / use;
}

Mat ode_monodromy_oracle(const DdeModel& m, const PeriodicOrbit& o, int steps) {
  if (!m.delays.empty())
    throw std::invalid_argument("variational oracle handles ODE models only");
  auto A = [&](double t) -> Mat {
    Mat L(m.n, 1);
    L.col(0) = o.eval(t);
    return m.jac(L)[0];
  };
  const double dt = o.T / steps;
  Mat Y = Mat::Identity(m.n, m.n);
  for (int i = 0; i < steps; ++i) {
    double t = i * dt;
    Mat k1 = A(t) * Y;
    Mat k2 = A(t + dt / 2) * (Y + dt / 2 * k1);
    Mat k3 = A(t + dt / 2) * (Y + dt / 2 * k2);
    Mat k4 = A(t + dt) * (Y + dt * k3);
    Y += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return Y;
}

DerivativeCheck fd_derivative_check(const DdeModel& m, const Mat& base,
                                    int draws, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  auto rand_lv = [&]() {
    Mat M(base.rows(), base.cols());
    for (int i = 0; i < M.rows(); ++i)
      for (int j = 0; j < M.cols(); ++j) M(i, j) = nd(rng);
    return M;
  };
  auto apply_jac = [&](const Mat& at, const Mat& dir) {
    auto As = m.jac(at);
    Vec r = Vec::Zero(m.n);
    for (size_t j = 0; j < As.size(); ++j) r += As[j] * dir.col(int(j));
    return r;
  };
  const double eps = 1e-5;
  DerivativeCheck out;
  for (int d = 0; d < draws; ++d) {
    Mat U = rand_lv(), W = rand_lv(), Z = rand_lv();
    {
      Vec fd = (m.rhs(base + eps * U) - m.rhs(base - eps * U)) / (2 * eps);
      Vec ex = apply_jac(base, U);
      out.jac = std::max(out.jac, (fd - ex).norm() /
                                      std::max(1.0, ex.norm()));
    }
    {
      Vec fd =
          (apply_jac(base + eps * W, U) - apply_jac(base - eps * W, U)) /
          (2 * eps);
      Vec ex = m.d2(base, U, W);
      out.d2 = std::max(out.d2, (fd - ex).norm() / std::max(1.0, ex.norm()));
    }
    {
      Vec fd = (m.d2(base + eps * Z, U, W) - m.d2(base - eps * Z, U, W)) /
               (2 * eps);
      Vec ex = m.d3(base, U, W, Z);
      out.d3 = std::max(out.d3, (fd - ex).norm() / std::max(1.0, ex.norm()));
    }
  }
  return out;
}

}  // namespace flq
