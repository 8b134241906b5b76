#include "flq/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flq {

std::vector<double> ladder_breaks(const std::vector<double>& delays, double h,
                                  double dt_req) {
  std::vector<double> snap = delays;
  snap.push_back(h);  // panels must tile [0,h] exactly as well
  const double dt = snap_step(snap, dt_req);
  const int P = std::max(1, int(std::llround(h / dt)));
  std::vector<double> b(P + 1);
  for (int k = 0; k <= P; ++k) b[k] = h * double(k) / double(P);
  return b;
}

DualLayout ladder_layout(const DdeModel& m, const Discretization& disc) {
  DualLayout L;
  L.n = m.n;
  // densities carry products of collocation polynomials with smooth kernel
  // entries, so give them a little extra degree over the flow panels
  L.deg = disc.deg + 4;
  const double dt_req =
      disc.dt > 0 ? disc.dt : (m.delays.empty() ? m.h / 8.0 : m.h / 24.0);
  L.breaks = ladder_breaks(m.delays, m.h, dt_req);
  return L;
}

template <class S>
StepKernelT<S> reversed_kernel(const StepKernelT<S>& kernel) {
  StepKernelT<S> r;
  r.tau = kernel.tau;
  r.A = [kernel](double y) {
    std::vector<typename StepKernelT<S>::MatS> out(kernel.tau.size());
    for (size_t j = 0; j < kernel.tau.size(); ++j)
      out[j] = kernel.A(kernel.tau[j] - y)[j].transpose();
    return out;
  };
  return r;
}

namespace {

// sorted, deduplicated mesh with exact endpoints 0 and h
std::vector<double> clean_breaks(std::vector<double> cand, double h) {
  const double tol = 1e-9 * (1.0 + h);
  cand.push_back(0.0);
  cand.push_back(h);
  std::sort(cand.begin(), cand.end());
  std::vector<double> out{0.0};
  for (double c : cand)
    if (c - out.back() > tol && c < h - tol) out.push_back(c);
  out.push_back(h);
  return out;
}

}  // namespace

template <class S>
DualT<S> adjoint_propagate(const StepKernelT<S>& kernel, double h,
                           const DualT<S>& f, double t, double s,
                           const Discretization& disc) {
  using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using RowS = Eigen::Matrix<S, 1, Eigen::Dynamic>;
  const int n = f.n();
  if (std::abs(f.h - h) > 1e-9 * (1.0 + h))
    throw std::invalid_argument("dual horizon does not match the kernel");
  if (t < s - 1e-12 * (1.0 + std::abs(t)))
    throw std::invalid_argument("adjoint propagation runs backward in time");
  if (t - s <= 1e-12 * (1.0 + std::abs(t))) return f;

  std::vector<double> lags(kernel.tau.begin() + 1, kernel.tau.end());
  std::vector<double> snap = lags;
  snap.push_back(h);
  const double dt_req =
      disc.dt > 0 ? disc.dt : (lags.empty() ? h / 8.0 : h / 24.0);
  const double dt = snap_step(snap, dt_req);

  // The transposed head trajectory c(x), s <= x <= t, solves the reversed
  // system e(y) = c(-y)^T driven by the initial density; run it in one sweep.
  const double y0 = -t, y1 = -s;
  StepKernelT<S> rev = reversed_kernel(kernel);

  const double eps = 1e-10 * (1.0 + h);
  std::function<MatS(double)> forcing = [&f, t, h, n, eps](double y) {
    double th = (t + y) - eps;  // nudged down: panel nodes take their own side
    MatS out = MatS::Zero(n, 1);
    if (th >= h) return out;
    if (th < 0) th = 0;
    out.col(0) = f.density.eval(th);
    return out;
  };

  MatS head0(n, 1);
  head0.col(0) = f.head.transpose();
  std::vector<SegmentT<S>> init{SegmentT<S>::zero(n, disc.N, h)};
  Discretization d2 = disc;
  d2.dt = dt;
  LinearFlow<S> flow =
      propagate_linear<S>(rev, h, init, y0, y1, d2, S(0), forcing, &head0);

  // output mesh: the ladder plus every image of a trajectory or density kink
  std::vector<double> cand;
  {
    const int P = std::max(1, int(std::llround(h / dt)));
    for (int k = 1; k < P; ++k) cand.push_back(h * double(k) / double(P));
    auto add_family = [&](double offset) {
      double r = std::fmod(offset, dt);
      if (r < 0) r += dt;
      for (double th = r; th < h; th += dt) cand.push_back(th);
    };
    add_family(-(t - s));  // truncation crossings and flow-panel images
    for (size_t b = 1; b + 1 < f.density.breaks.size(); ++b)
      add_family(f.density.breaks[b] - (t - s));
  }
  std::vector<double> breaks = clean_breaks(std::move(cand), h);

  DualT<S> out;
  out.h = h;
  out.head = flow.eval(y1).col(0).transpose();
  const int deg_out = disc.deg + 4;
  out.density = PanelFnT<S>::zero(n, deg_out, breaks);

  const double tiny = 1e-13 * (1.0 + h);
  for (int p = 0; p < out.density.count(); ++p) {
    const double a = breaks[p], b = breaks[p + 1], mid = 0.5 * (a + b);
    for (int k = 0; k <= deg_out; ++k) {
      const double th = out.density.node(p, k);
      RowS row = RowS::Zero(n);
      // head trajectory re-entering through each delay
      for (size_t j = 1; j < kernel.tau.size(); ++j) {
        const double tau = kernel.tau[j];
        if (tau <= mid) continue;            // kernel reaches back tau only
        if (s + tau - mid > t) continue;     // before the data was posed
        const double x = s + tau - th;
        const double y = std::clamp(-x, y0, y1);
        row += flow.eval(y).col(0).transpose() * kernel.A(x)[j];
      }
      // part of the initial density not yet consumed by the sweep
      if ((t - s) + mid < h) {
        const double thf =
            std::clamp((t - s) + th, (t - s) + a + tiny, (t - s) + b - tiny);
        row += f.density.eval(thf).transpose();
      }
      out.density.panels[p].col(k) = row.transpose();
    }
  }
  return out;
}

Dual adjoint_propagate(const DdeModel& m, const PeriodicOrbit& o,
                       const Dual& f, double t, double s,
                       const Discretization& disc) {
  Discretization d = disc;
  if (d.dt <= 0) d.dt = default_dt(m, o);
  return adjoint_propagate(orbit_kernel(m, o), m.h, f, t, s, d);
}

template <class S>
DualT<S> resample_dual(const DualT<S>& d, int deg,
                       const std::vector<double>& breaks) {
  if (std::abs(d.h - breaks.back()) > 1e-9 * (1.0 + d.h))
    throw std::invalid_argument("resampling onto a mismatched horizon");
  DualT<S> out;
  out.h = d.h;
  out.head = d.head;
  out.density = PanelFnT<S>::zero(d.n(), deg, breaks);
  const double tiny = 1e-13 * (1.0 + d.h);
  for (int p = 0; p < out.density.count(); ++p) {
    const double a = breaks[p], b = breaks[p + 1];
    for (int k = 0; k <= deg; ++k) {
      // edge nodes sample one-sided from within their own panel
      const double th = std::clamp(out.density.node(p, k), a + tiny, b - tiny);
      out.density.panels[p].col(k) = d.density.eval(th);
    }
  }
  return out;
}

template <class S>
S pair_dual_flow(const DualT<S>& f, const LinearFlow<S>& flow, double t,
                 int col) {
  S acc = (f.head * flow.eval(t).col(col))(0, 0);
  const auto& dens = f.density;
  const ChebGrid& g = ChebGrid::get(dens.deg);
  for (int p = 0; p < dens.count(); ++p) {
    const double scale = 0.5 * (dens.breaks[p + 1] - dens.breaks[p]);
    for (int k = 0; k <= dens.deg; ++k) {
      const Eigen::Vector<S, Eigen::Dynamic> v =
          flow.eval(t - dens.node(p, k)).col(col);
      S term = S(0);
      for (int i = 0; i < int(v.size()); ++i)
        term += dens.panels[p](i, k) * v[i];
      acc += scale * g.quad[k] * term;
    }
  }
  return acc;
}

Dual adjoint_var_const(const DdeModel& m, const PeriodicOrbit& o,
                       const Dual& psi, const std::function<Dual(double)>& f,
                       double t, double s, const Discretization& disc,
                       int quad) {
  StepKernel k = orbit_kernel(m, o);
  Discretization d = disc;
  if (d.dt <= 0) d.dt = default_dt(m, o);

  std::vector<std::pair<double, Dual>> terms;
  terms.emplace_back(1.0, adjoint_propagate(k, m.h, psi, t, s, d));
  Vec xq, wq;
  gauss_legendre(quad, xq, wq);
  const double mid = 0.5 * (s + t), half = 0.5 * (t - s);
  for (int q = 0; q < quad; ++q) {
    const double r = mid + half * xq[q];
    // int_t^s U_sun(s,r) f(r) dr reverses orientation relative to [s,t]
    terms.emplace_back(-half * wq[q], adjoint_propagate(k, m.h, f(r), r, s, d));
  }

  // sum on the union mesh, where every term is polynomial per panel
  std::vector<double> cand;
  for (const auto& [w, u] : terms)
    cand.insert(cand.end(), u.density.breaks.begin() + 1,
                u.density.breaks.end() - 1);
  DualLayout L;
  L.n = m.n;
  L.deg = disc.deg + 4;
  L.breaks = clean_breaks(std::move(cand), m.h);
  Vec acc = Vec::Zero(L.size());
  for (const auto& [w, u] : terms)
    acc += w * pack_dual(resample_dual(u, L.deg, L.breaks));
  return unpack_dual<double>(L, acc);
}

template StepKernelT<double> reversed_kernel(const StepKernelT<double>&);
template StepKernelT<Cplx> reversed_kernel(const StepKernelT<Cplx>&);
template DualT<double> adjoint_propagate(const StepKernelT<double>&, double,
                                         const DualT<double>&, double, double,
                                         const Discretization&);
template DualT<Cplx> adjoint_propagate(const StepKernelT<Cplx>&, double,
                                       const DualT<Cplx>&, double, double,
                                       const Discretization&);
template DualT<double> resample_dual(const DualT<double>&, int,
                                     const std::vector<double>&);
template DualT<Cplx> resample_dual(const DualT<Cplx>&, int,
                                   const std::vector<double>&);
template double pair_dual_flow(const DualT<double>&, const LinearFlow<double>&,
                               double, int);
template Cplx pair_dual_flow(const DualT<Cplx>&, const LinearFlow<Cplx>&,
                             double, int);

}  // namespace flq
