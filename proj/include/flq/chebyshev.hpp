#pragma once

#include <Eigen/Dense>
#include <complex>

namespace flq {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Cplx = std::complex<double>;

// Chebyshev-Gauss-Lobatto grid on [-1,1] with the operators needed for
// nodal (pseudospectral) work.  Nodes are stored descending, x[0]=1,
// x[N]=-1, so that a history segment on [-h,0] maps node 0 to theta=0.
struct ChebGrid {
  int N = 0;     // polynomial degree; N+1 nodes
  Vec x;         // nodes, descending
  Vec bary;      // barycentric weights
  Mat D;         // nodal differentiation, d/dx on [-1,1]
  Vec quad;      // Clenshaw-Curtis weights, integrates degree <= N exactly
  Mat coef;      // nodal values -> Chebyshev series coefficients
  Mat cumint;    // nodal values -> nodal values of x |-> int_{-1}^{x} f

  // Grids are immutable and cached per degree.
  static const ChebGrid& get(int N);
};

// Legendre-Gauss-Lobatto points for collocation time stepping.
struct LobattoGrid {
  int p = 0;     // degree; p+1 nodes
  Vec x;         // nodes, ascending, x[0]=-1, x[p]=1
  Vec w;         // LGL quadrature weights
  Vec bary;      // barycentric weights
  Mat D;         // nodal differentiation on [-1,1]

  static const LobattoGrid& get(int p);
};

// Gauss-Legendre rule on [-1,1] (Golub-Welsch), cached per point count.
void gauss_legendre(int q, Vec& x, Vec& w);

// Barycentric weights for an arbitrary distinct node set.
Vec bary_weights(const Vec& nodes);

// Barycentric evaluation of the interpolant of f at point t.  Exact at the
// nodes (the formula's 0/0 there is short-circuited).
template <class Values>
auto bary_eval(const Vec& x, const Vec& w, const Values& f, double t) {
  using Scalar = typename Values::Scalar;
  Scalar num = Scalar(0);
  double den = 0.0;
  for (int k = 0; k < x.size(); ++k) {
    double d = t - x[k];
    if (d == 0.0) return Scalar(f[k]);
    double c = w[k] / d;
    num += c * f[k];
    den += c;
  }
  return Scalar(num / den);
}

// Column-wise variant: values is n x (N+1), returns the interpolated column.
template <class Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> bary_eval_cols(
    const Vec& x, const Vec& w, const Eigen::MatrixBase<Derived>& values,
    double t) {
  using Scalar = typename Derived::Scalar;
  Eigen::Vector<Scalar, Eigen::Dynamic> num =
      Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(values.rows());
  double den = 0.0;
  for (int k = 0; k < x.size(); ++k) {
    double d = t - x[k];
    if (d == 0.0) return values.col(k);
    double c = w[k] / d;
    num += c * values.col(k);
    den += c;
  }
  return num / den;
}

// Interpolation row vector r with r.dot(nodal values) = interpolant(t).
Vec bary_eval_weights(const Vec& x, const Vec& w, double t);

}  // namespace flq
