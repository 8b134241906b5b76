#include "flq/evolution.hpp"

#include <cmath>
#include <stdexcept>

namespace flq {

double snap_step(const std::vector<double>& delays, double dt_req) {
  if (!(dt_req > 0)) throw std::invalid_argument("step request must be positive");
  if (delays.empty()) return dt_req;
  const double tau_min = delays.front();
  for (int q = std::max(1, int(std::ceil(tau_min / dt_req - 1e-9)));
       q <= 1'000'000; ++q) {
    const double dt = tau_min / q;
    bool ok = true;
    for (double tau : delays) {
      double r = tau / dt;
      if (std::abs(r - std::round(r)) > 1e-8) {
        ok = false;
        break;
      }
    }
    if (ok) return dt;
  }
  throw std::invalid_argument("delays admit no common step near the request");
}

StepKernel orbit_kernel(const DdeModel& m, const PeriodicOrbit& o) {
  StepKernel k;
  k.tau.resize(m.lags() + 1);
  for (int j = 0; j <= m.lags(); ++j) k.tau[j] = m.lag(j);
  k.A = [&m, o](double t) { return m.jac(orbit_lag_values(m, o, t)); };
  return k;
}

CStepKernel orbit_kernel_complex(const DdeModel& m, const PeriodicOrbit& o) {
  CStepKernel k;
  k.tau.resize(m.lags() + 1);
  for (int j = 0; j <= m.lags(); ++j) k.tau[j] = m.lag(j);
  k.A = [&m, o](double t) {
    auto As = m.jac(orbit_lag_values(m, o, t));
    std::vector<CMat> out(As.size());
    for (size_t j = 0; j < As.size(); ++j) out[j] = As[j].cast<Cplx>();
    return out;
  };
  return k;
}

template <class S>
typename LinearFlow<S>::MatS LinearFlow<S>::eval(double u) const {
  const double tol = 1e-12 * (1.0 + std::abs(s) + std::abs(e) + h);
  if (u <= s + tol) {
    if (head0.size() > 0 && u >= s - tol) return head0;
    if (u < s - h - 1e-9 * (1.0 + h))
      throw std::domain_error("flow evaluated before its initial history");
    const ChebGrid& g = ChebGrid::get(N);
    double x = std::clamp(1.0 + 2.0 * (u - s) / h, -1.0, 1.0);
    Vec w = bary_eval_weights(g.x, g.bary, x);
    MatS out = MatS::Zero(n, batch);
    for (int k = 0; k <= N; ++k) out += w[k] * init_nodes[k];
    return out;
  }
  if (u > e + tol) throw std::domain_error("flow evaluated past its end time");
  int p = int(std::upper_bound(bounds.begin(), bounds.end(), u) -
              bounds.begin()) - 1;
  p = std::clamp(p, 0, int(panels.size()) - 1);
  const double a = bounds[p], b = bounds[p + 1];
  const LobattoGrid& g = LobattoGrid::get(deg);
  double x = std::clamp(2.0 * (u - a) / (b - a) - 1.0, -1.0, 1.0);
  Vec w = bary_eval_weights(g.x, g.bary, x);
  MatS out = MatS::Zero(n, batch);
  for (int k = 0; k <= deg; ++k) out += w[k] * panels[p][k];
  return out;
}

template <class S>
typename LinearFlow<S>::MatS LinearFlow<S>::eval_left(double u) const {
  const double tol = 1e-12 * (1.0 + std::abs(s) + std::abs(e) + h);
  if (u <= s + tol) {
    if (u < s - h - 1e-9 * (1.0 + h))
      throw std::domain_error("flow evaluated before its initial history");
    const ChebGrid& g = ChebGrid::get(N);
    double x = std::clamp(1.0 + 2.0 * (u - s) / h, -1.0, 1.0);
    Vec w = bary_eval_weights(g.x, g.bary, x);
    MatS out = MatS::Zero(n, batch);
    for (int k = 0; k <= N; ++k) out += w[k] * init_nodes[k];
    return out;
  }
  if (u > e + tol) throw std::domain_error("flow evaluated past its end time");
  int p = int(std::upper_bound(bounds.begin(), bounds.end(), u - tol) -
              bounds.begin()) - 1;
  p = std::clamp(p, 0, int(panels.size()) - 1);
  const double a = bounds[p], b = bounds[p + 1];
  const LobattoGrid& g = LobattoGrid::get(deg);
  double x = std::clamp(2.0 * (u - a) / (b - a) - 1.0, -1.0, 1.0);
  Vec w = bary_eval_weights(g.x, g.bary, x);
  MatS out = MatS::Zero(n, batch);
  for (int k = 0; k <= deg; ++k) out += w[k] * panels[p][k];
  return out;
}

template <class S>
SegmentT<S> LinearFlow<S>::segment(double t, int col) const {
  SegmentT<S> out = SegmentT<S>::zero(n, N, h);
  const ChebGrid& g = ChebGrid::get(N);
  for (int k = 0; k <= N; ++k) {
    double th = -h * (1.0 - g.x[k]) / 2.0;
    out.values.col(k) = eval(t + th).col(col);
  }
  return out;
}

template <class S>
typename LinearFlow<S>::MatS LinearFlow<S>::state_matrix(double t) const {
  MatS out(n * (N + 1), batch);
  const ChebGrid& g = ChebGrid::get(N);
  for (int k = 0; k <= N; ++k) {
    double th = -h * (1.0 - g.x[k]) / 2.0;
    out.middleRows(k * n, n) = eval(t + th);
  }
  return out;
}

template class LinearFlow<double>;
template class LinearFlow<Cplx>;

template <class S>
LinearFlow<S> propagate_linear(
    const StepKernelT<S>& kernel, double h,
    const std::vector<SegmentT<S>>& init, double s, double e,
    const Discretization& disc, S shift,
    std::function<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>(double)>
        forcing,
    const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>* head0) {
  using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  if (init.empty()) throw std::invalid_argument("no initial columns");
  const int n = init[0].n();
  const int N = init[0].degree();
  const int batch = int(init.size());

  LinearFlow<S> flow;
  flow.s = s;
  flow.e = s;
  flow.h = h;
  flow.n = n;
  flow.batch = batch;
  flow.deg = disc.deg;
  flow.N = N;

  flow.init_nodes.resize(N + 1);
  for (int k = 0; k <= N; ++k) {
    flow.init_nodes[k].resize(n, batch);
    for (int b = 0; b < batch; ++b)
      flow.init_nodes[k].col(b) = init[b].values.col(k);
  }
  if (head0) flow.head0 = *head0;

  std::vector<double> lags(kernel.tau.begin() + 1, kernel.tau.end());
  double dt_req = disc.dt > 0 ? disc.dt
                              : (lags.empty() ? std::max(1e-3, (e - s) / 40)
                                              : h / 24.0);
  const double dt = snap_step(lags, dt_req);

  flow.bounds.push_back(s);
  for (double t = s + dt; t < e - 1e-12 * (1.0 + std::abs(e)); t += dt)
    flow.bounds.push_back(t);
  if (e > s) flow.bounds.push_back(e);

  const int P = int(flow.bounds.size()) - 1;
  flow.panels.reserve(P);
  const LobattoGrid& g = LobattoGrid::get(disc.deg);
  const int p = disc.deg;
  const int np = n * p;

  MatS V0 = head0 ? *head0 : flow.init_nodes[0];  // value at s
  for (int pi = 0; pi < P; ++pi) {
    const double a = flow.bounds[pi], b = flow.bounds[pi + 1];
    const double scl = 2.0 / (b - a);
    MatS M = MatS::Zero(np, np);
    MatS R(np, batch);
    for (int i = 1; i <= p; ++i) {
      const double ti = a + (b - a) * (g.x[i] + 1.0) / 2.0;
      auto As = kernel.A(ti);
      for (int k = 1; k <= p; ++k)
        M.block((i - 1) * n, (k - 1) * n, n, n) =
            S(scl * g.D(i, k)) * MatS::Identity(n, n);
      M.block((i - 1) * n, (i - 1) * n, n, n) -= As[0];
      M.block((i - 1) * n, (i - 1) * n, n, n) += shift * MatS::Identity(n, n);

      MatS Ri = S(-scl * g.D(i, 0)) * V0;
      // lagged data with the left-limit convention: junction nodes see the
      // causally earlier piece (matters when the start value jumps)
      for (size_t j = 1; j < kernel.tau.size(); ++j)
        Ri += As[j] * flow.eval_left(ti - kernel.tau[j]);
      if (forcing) Ri += forcing(ti);
      R.middleRows((i - 1) * n, n) = Ri;
    }
    Eigen::PartialPivLU<MatS> lu(M);
    MatS X = lu.solve(R);
    std::vector<MatS> blocks(p + 1);
    blocks[0] = V0;
    for (int i = 1; i <= p; ++i) blocks[i] = X.middleRows((i - 1) * n, n);
    V0 = blocks[p];
    flow.panels.push_back(std::move(blocks));
    flow.e = b;
  }
  return flow;
}

template LinearFlow<double> propagate_linear(
    const StepKernelT<double>&, double, const std::vector<SegmentT<double>>&,
    double, double, const Discretization&, double,
    std::function<Mat(double)>, const Mat*);
template LinearFlow<Cplx> propagate_linear(
    const StepKernelT<Cplx>&, double, const std::vector<SegmentT<Cplx>>&,
    double, double, const Discretization&, Cplx,
    std::function<CMat(double)>, const CMat*);

template <class S>
SegmentT<S> propagate(const StepKernelT<S>& kernel, double h,
                      const SegmentT<S>& init, double s, double e,
                      const Discretization& disc) {
  auto flow = propagate_linear<S>(kernel, h, {init}, s, e, disc);
  return flow.segment(e, 0);
}

template SegmentT<double> propagate(const StepKernelT<double>&, double,
                                    const SegmentT<double>&, double, double,
                                    const Discretization&);
template SegmentT<Cplx> propagate(const StepKernelT<Cplx>&, double,
                                  const SegmentT<Cplx>&, double, double,
                                  const Discretization&);

Segment propagate(const DdeModel& m, const PeriodicOrbit& o,
                  const Segment& init, double s, double e,
                  const Discretization& disc) {
  return propagate(orbit_kernel(m, o), m.h, init, s, e, disc);
}

double default_dt(const DdeModel& m, const PeriodicOrbit& o) {
  if (m.delays.empty()) return std::min(m.h, o.T / 80.0);
  return m.h / 24.0;
}

Flow monodromy_flow(const DdeModel& m, const PeriodicOrbit& o, double s,
                    double w, const Discretization& disc) {
  const int n = m.n, N = disc.N;
  std::vector<Segment> basis;
  basis.reserve(n * (N + 1));
  for (int b = 0; b < n * (N + 1); ++b) {
    Segment sb = Segment::zero(n, N, m.h);
    sb.values(b % n, b / n) = 1.0;
    basis.push_back(std::move(sb));
  }
  Discretization d = disc;
  if (d.dt <= 0) d.dt = default_dt(m, o);
  return propagate_linear<double>(orbit_kernel(m, o), m.h, basis, s, s + w, d);
}

Mat monodromy_matrix(const DdeModel& m, const PeriodicOrbit& o, double s,
                     double w, const Discretization& disc) {
  Flow f = monodromy_flow(m, o, s, w, disc);
  return f.state_matrix(s + w);
}

}  // namespace flq
