#pragma once

#include <stdexcept>
#include <vector>

#include "flq/chebyshev.hpp"

namespace flq {

// ---------------------------------------------------------------------------
// History segments: elements of C([-h,0],K^n) sampled at CGL nodes.
// Node k sits at theta_k = -h(1-x_k)/2 with x the descending Chebyshev grid,
// so column 0 holds the value at theta=0 and column N the value at -h.

template <class S>
struct SegmentT {
  using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using VecS = Eigen::Vector<S, Eigen::Dynamic>;

  double h = 0.0;
  MatS values;  // n x (N+1)

  int n() const { return int(values.rows()); }
  int degree() const { return int(values.cols()) - 1; }

  static SegmentT zero(int n, int N, double h) {
    SegmentT s;
    s.h = h;
    s.values = MatS::Zero(n, N + 1);
    return s;
  }

  double node(int k) const {
    const ChebGrid& g = ChebGrid::get(degree());
    return -h * (1.0 - g.x[k]) / 2.0;
  }

  VecS eval(double theta) const {
    double x = 1.0 + 2.0 * theta / h;
    if (x < -1.0 - 1e-9 || x > 1.0 + 1e-9)
      throw std::domain_error("segment evaluated outside [-h,0]");
    x = std::clamp(x, -1.0, 1.0);
    const ChebGrid& g = ChebGrid::get(degree());
    return bary_eval_cols(g.x, g.bary, values, x);
  }

  VecS head() const { return values.col(0); }

  // d/dtheta of the interpolant, exact for the stored polynomial.
  SegmentT deriv() const {
    const ChebGrid& g = ChebGrid::get(degree());
    SegmentT d;
    d.h = h;
    d.values = (2.0 / h) * values * g.D.transpose();
    return d;
  }

  double norm_inf() const {
    double m = 0.0;
    for (int i = 0; i < values.rows(); ++i)
      for (int j = 0; j < values.cols(); ++j)
        m = std::max(m, std::abs(values(i, j)));
    return m;
  }
};

using Segment = SegmentT<double>;
using CSegment = SegmentT<Cplx>;

template <class S, class F>
SegmentT<S> segment_from_function(int n, int N, double h, F&& f) {
  SegmentT<S> s = SegmentT<S>::zero(n, N, h);
  for (int k = 0; k <= N; ++k) s.values.col(k) = f(s.node(k));
  return s;
}

// ---------------------------------------------------------------------------
// Piecewise-polynomial functions on [0,h].  Dual-element densities are only
// piecewise smooth (they kink at lag offsets and at propagated breakpoints),
// so a single global polynomial would wreck the pairing accuracy.

template <class S>
struct PanelFnT {
  using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using VecS = Eigen::Vector<S, Eigen::Dynamic>;

  std::vector<double> breaks;  // 0 = b_0 < ... < b_P = h
  int deg = 0;
  std::vector<MatS> panels;  // per panel n x (deg+1); node 0 at the left edge

  int n() const { return panels.empty() ? 0 : int(panels[0].rows()); }
  int count() const { return int(panels.size()); }
  double h() const { return breaks.back(); }

  // theta of node k inside panel p (ascending within the panel).
  double node(int p, int k) const {
    const ChebGrid& g = ChebGrid::get(deg);
    double a = breaks[p], b = breaks[p + 1];
    return a + (b - a) * (1.0 - g.x[k]) / 2.0;
  }

  static PanelFnT zero(int n, int deg, const std::vector<double>& breaks) {
    PanelFnT f;
    f.breaks = breaks;
    f.deg = deg;
    f.panels.assign(breaks.size() - 1, MatS::Zero(n, deg + 1));
    return f;
  }

  int find_panel(double theta) const {
    if (theta < -1e-12 || theta > h() + 1e-9 * (1.0 + h()))
      throw std::domain_error("panel function evaluated outside [0,h]");
    int lo = 0, hi = count() - 1;
    while (lo < hi) {
      int mid = (lo + hi) / 2;
      if (theta <= breaks[mid + 1])
        hi = mid;
      else
        lo = mid + 1;
    }
    return lo;
  }

  VecS eval(double theta) const {
    int p = find_panel(theta);
    double a = breaks[p], b = breaks[p + 1];
    double x = std::clamp(1.0 - 2.0 * (theta - a) / (b - a), -1.0, 1.0);
    const ChebGrid& g = ChebGrid::get(deg);
    return bary_eval_cols(g.x, g.bary, panels[p], x);
  }

  // Per-panel derivative d/dtheta; jumps across breaks are NOT represented.
  PanelFnT deriv() const {
    const ChebGrid& g = ChebGrid::get(deg);
    PanelFnT d = *this;
    for (int p = 0; p < count(); ++p)
      d.panels[p] = panels[p] * g.D.transpose() *
                    (-2.0 / (breaks[p + 1] - breaks[p]));
    return d;
  }

  VecS left_limit(int brk) const {  // value at breaks[brk] from below
    return panels[brk - 1].col(deg);
  }
  VecS right_limit(int brk) const {  // value at breaks[brk] from above
    return panels[brk].col(0);
  }

  double norm_inf() const {
    double m = 0.0;
    for (const auto& P : panels)
      for (int i = 0; i < P.rows(); ++i)
        for (int j = 0; j < P.cols(); ++j) m = std::max(m, std::abs(P(i, j)));
    return m;
  }
};

// ---------------------------------------------------------------------------
// Dual elements (c,g) in R^{n*} x L^1([0,h],R^{n*}):
//   <(c,g), phi> = c.phi(0) + int_0^h g(theta) phi(-theta) dtheta.
// The density rows are stored as columns of the panel matrices (component i,
// node k), i.e. g(theta) is used as a row vector against column states.

template <class S>
struct DualT {
  using RowS = Eigen::Matrix<S, 1, Eigen::Dynamic>;

  double h = 0.0;
  RowS head;          // 1 x n
  PanelFnT<S> density;

  int n() const { return int(head.cols()); }

  static DualT zero(int n, int deg, const std::vector<double>& breaks) {
    DualT d;
    d.h = breaks.back();
    d.head = RowS::Zero(n);
    d.density = PanelFnT<S>::zero(n, deg, breaks);
    return d;
  }
};

using Dual = DualT<double>;
using CDual = DualT<Cplx>;

// Sun-star pairing of a dual element against a history segment.
template <class S1, class S2>
auto pair_dual(const DualT<S1>& f, const SegmentT<S2>& phi) {
  using R = decltype(S1(0) * S2(0));
  if (std::abs(f.h - phi.h) > 1e-12 * (1.0 + f.h))
    throw std::invalid_argument("pairing with mismatched horizons");
  R acc = (f.head * phi.head())(0, 0);
  const auto& dens = f.density;
  const ChebGrid& g = ChebGrid::get(dens.deg);
  for (int p = 0; p < dens.count(); ++p) {
    double a = dens.breaks[p], b = dens.breaks[p + 1];
    double scale = (b - a) / 2.0;
    for (int k = 0; k <= dens.deg; ++k) {
      auto phv = phi.eval(-dens.node(p, k));
      R term = R(0);
      for (int i = 0; i < phi.n(); ++i) term += dens.panels[p](i, k) * phv[i];
      acc += scale * g.quad[k] * term;
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Step kernel of a time-dependent linearization: L(t)phi = sum_j A_j phi(-tau_j)
// with tau_0 = 0.  A single Kernel holds the frozen matrices at one time.

struct Kernel {
  std::vector<Mat> A;       // m+1 matrices
  std::vector<double> tau;  // m+1 lags, tau[0] = 0

  template <class S>
  Eigen::Vector<S, Eigen::Dynamic> apply(const SegmentT<S>& phi) const {
    Eigen::Vector<S, Eigen::Dynamic> r =
        Eigen::Vector<S, Eigen::Dynamic>::Zero(phi.n());
    for (size_t j = 0; j < A.size(); ++j) r += A[j] * phi.eval(-tau[j]);
    return r;
  }
};

// Generator application A(t)phi = dphi/dtheta for phi in the domain
// {phi in C^1 : dphi/dtheta(0) = L(t)phi}.  The derivative segment is returned
// together with the boundary-condition defect, which measures how far phi is
// from the domain.
template <class S>
struct GeneratorValue {
  SegmentT<S> dphi;
  double domain_defect;
};

template <class S>
GeneratorValue<S> apply_generator(const Kernel& k, const SegmentT<S>& phi) {
  GeneratorValue<S> out{phi.deriv(), 0.0};
  auto defect = (out.dphi.head() - k.apply(phi)).eval();
  double m = 0.0;
  for (int i = 0; i < defect.size(); ++i) m = std::max(m, std::abs(defect[i]));
  out.domain_defect = m;
  return out;
}

// Adjoint generator A*(t)f = df/dtheta + f(0+) zeta(t,.) for f = (c,g).
// The result lives in X* rather than X-sun: besides a head and an absolutely
// continuous density it carries point masses at the interior lags (from the
// step kernel) and at density jumps.  It is used in weak form only.
template <class S>
struct AdjointGenValue {
  using RowS = Eigen::Matrix<S, 1, Eigen::Dynamic>;
  double h = 0.0;
  RowS head;
  PanelFnT<S> density;
  std::vector<std::pair<double, RowS>> atoms;  // (theta, weight row)

  template <class S2>
  auto pair_with(const SegmentT<S2>& phi) const {
    using R = decltype(S(0) * S2(0));
    DualT<S> tmp;
    tmp.h = h;
    tmp.head = head;
    tmp.density = density;
    R acc = pair_dual(tmp, phi);
    for (const auto& [th, w] : atoms) {
      auto v = phi.eval(-th);
      for (int i = 0; i < v.size(); ++i) acc += w[i] * v[i];
    }
    return acc;
  }
};

template <class S>
AdjointGenValue<S> apply_adjoint_generator(const Kernel& k, const DualT<S>& f) {
  AdjointGenValue<S> out;
  out.h = f.h;
  out.density = f.density.deriv();
  out.head = f.density.right_limit(0).transpose() + f.head * k.A[0];
  // density jumps at interior panel breaks
  for (int b = 1; b < f.density.count(); ++b) {
    auto jump =
        (f.density.right_limit(b) - f.density.left_limit(b)).transpose().eval();
    out.atoms.emplace_back(f.density.breaks[b], jump);
  }
  // the by-parts boundary term of the density derivative at theta = h is not
  // part of the action; compensate so <A*f, chi> = <f, A chi> on the domain
  out.atoms.emplace_back(
      f.h, (-f.density.left_limit(f.density.count())).transpose().eval());
  // kernel atoms at the interior lags
  for (size_t j = 1; j < k.A.size(); ++j)
    out.atoms.emplace_back(k.tau[j], f.head * k.A[j]);
  return out;
}

// Nodal-vector coordinates of a segment (node-major: entry k*n+i is
// component i at node k), matching monodromy-matrix row ordering.
template <class S>
Eigen::Vector<S, Eigen::Dynamic> pack_segment(const SegmentT<S>& s) {
  Eigen::Vector<S, Eigen::Dynamic> v(s.n() * (s.degree() + 1));
  for (int k = 0; k <= s.degree(); ++k)
    v.segment(k * s.n(), s.n()) = s.values.col(k);
  return v;
}

template <class S>
SegmentT<S> unpack_segment(int n, int N, double h,
                           const Eigen::Vector<S, Eigen::Dynamic>& v) {
  SegmentT<S> s = SegmentT<S>::zero(n, N, h);
  for (int k = 0; k <= N; ++k) s.values.col(k) = v.segment(k * n, n);
  return s;
}

// Break meshes on [0,h].
std::vector<double> uniform_breaks(double h, int panels);
std::vector<double> lag_breaks(const std::vector<double>& delays, double h,
                               int min_panels);

// ---------------------------------------------------------------------------
// Flat-vector packing of dual elements, used to assemble adjoint operators.

struct DualLayout {
  int n = 0;
  int deg = 0;
  std::vector<double> breaks;

  int size() const {
    return n * (1 + int(breaks.size() - 1) * (deg + 1));
  }
};

template <class S>
Eigen::Vector<S, Eigen::Dynamic> pack_dual(const DualT<S>& d) {
  int P = d.density.count(), deg = d.density.deg, n = d.n();
  Eigen::Vector<S, Eigen::Dynamic> v((1 + P * (deg + 1)) * n);
  v.head(n) = d.head.transpose();
  int off = n;
  for (int p = 0; p < P; ++p)
    for (int k = 0; k <= deg; ++k, off += n)
      v.segment(off, n) = d.density.panels[p].col(k);
  return v;
}

template <class S>
DualT<S> unpack_dual(const DualLayout& L,
                     const Eigen::Vector<S, Eigen::Dynamic>& v) {
  DualT<S> d = DualT<S>::zero(L.n, L.deg, L.breaks);
  d.head = v.head(L.n).transpose();
  int off = L.n;
  for (int p = 0; p < d.density.count(); ++p)
    for (int k = 0; k <= L.deg; ++k, off += L.n)
      d.density.panels[p].col(k) = v.segment(off, L.n);
  return d;
}

}  // namespace flq
