#include "flq/chebyshev.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace flq {

namespace {

// Chebyshev series coefficients from nodal values on the CGL grid (DCT-I).
Mat nodal_to_coef(int N) {
  Mat A(N + 1, N + 1);
  auto c = [N](int j) { return (j == 0 || j == N) ? 2.0 : 1.0; };
  for (int j = 0; j <= N; ++j)
    for (int k = 0; k <= N; ++k)
      A(j, k) = 2.0 / (N * c(j) * c(k)) * std::cos(j * k * M_PI / N);
  return A;
}

// Series coefficients of the antiderivative vanishing at x=-1.
Mat coef_antiderivative(int N) {
  Mat S = Mat::Zero(N + 2, N + 1);
  S(1, 0) = 1.0;                       // int T0 = T1
  if (N >= 2) S(1, 2) = -0.5;          // int T2 contributes -T1/2
  for (int j = 2; j <= N + 1; ++j) {
    S(j, j - 1) += 1.0 / (2.0 * j);
    if (j + 1 <= N) S(j, j + 1) -= 1.0 / (2.0 * j);
  }
  // Fix the constant so the antiderivative vanishes at x=-1.
  for (int j = 1; j <= N + 1; ++j)
    S.row(0) -= (j % 2 == 0 ? 1.0 : -1.0) * S.row(j);
  return S;
}

ChebGrid make_cheb(int N) {
  if (N < 1) throw std::invalid_argument("ChebGrid: degree must be >= 1");
  ChebGrid g;
  g.N = N;
  g.x.resize(N + 1);
  for (int k = 0; k <= N; ++k) g.x[k] = std::cos(k * M_PI / N);
  g.bary.resize(N + 1);
  for (int k = 0; k <= N; ++k) g.bary[k] = (k % 2 == 0) ? 1.0 : -1.0;
  g.bary[0] *= 0.5;
  g.bary[N] *= 0.5;

  g.D.resize(N + 1, N + 1);
  for (int k = 0; k <= N; ++k) {
    double s = 0.0;
    for (int j = 0; j <= N; ++j) {
      if (j == k) continue;
      g.D(k, j) = (g.bary[j] / g.bary[k]) / (g.x[k] - g.x[j]);
      s += g.D(k, j);
    }
    g.D(k, k) = -s;
  }

  g.coef = nodal_to_coef(N);

  // Clenshaw-Curtis: integrate the series term by term.
  Vec m = Vec::Zero(N + 1);
  for (int j = 0; j <= N; j += 2) m[j] = 2.0 / (1.0 - j * j);
  m[0] = 2.0;
  g.quad = g.coef.transpose() * m;

  // Cumulative integral from x=-1, realized on an (N+1)-point grid by
  // truncating the degree-(N+1) antiderivative back to the nodes.
  Mat S = coef_antiderivative(N);
  Mat E1(N + 1, N + 2);
  for (int k = 0; k <= N; ++k)
    for (int j = 0; j <= N + 1; ++j) E1(k, j) = std::cos(j * std::acos(std::clamp(g.x[k], -1.0, 1.0)));
  g.cumint = E1 * S * g.coef;
  return g;
}

LobattoGrid make_lobatto(int p) {
  if (p < 2) throw std::invalid_argument("LobattoGrid: degree must be >= 2");
  LobattoGrid g;
  g.p = p;
  g.x.resize(p + 1);
  g.w.resize(p + 1);

  auto legendre = [p](double x, double& P, double& dP) {
    double pm = 1.0, pc = x;
    for (int j = 1; j < p; ++j) {
      double pn = ((2 * j + 1) * x * pc - j * pm) / (j + 1);
      pm = pc;
      pc = pn;
    }
    P = pc;
    dP = p * (x * pc - pm) / (x * x - 1.0);
  };

  g.x[0] = -1.0;
  g.x[p] = 1.0;
  for (int k = 1; k < p; ++k) {
    // interior LGL nodes: roots of P'_p, Newton from the Chebyshev guess
    double x = -std::cos(k * M_PI / p);
    for (int it = 0; it < 60; ++it) {
      double P, dP;
      legendre(x, P, dP);
      double d2P = (2.0 * x * dP - p * (p + 1) * P) / (1.0 - x * x);
      double step = dP / d2P;
      x -= step;
      if (std::abs(step) < 1e-15) break;
    }
    g.x[k] = x;
  }
  for (int k = 0; k <= p; ++k) {
    double P, dP;
    legendre(g.x[k], P, dP);
    g.w[k] = 2.0 / (p * (p + 1) * P * P);
  }
  g.bary = bary_weights(g.x);
  g.D.resize(p + 1, p + 1);
  for (int k = 0; k <= p; ++k) {
    double s = 0.0;
    for (int j = 0; j <= p; ++j) {
      if (j == k) continue;
      g.D(k, j) = (g.bary[j] / g.bary[k]) / (g.x[k] - g.x[j]);
      s += g.D(k, j);
    }
    g.D(k, k) = -s;
  }
  return g;
}

}  // namespace

const ChebGrid& ChebGrid::get(int N) {
  static std::map<int, ChebGrid> cache;
  auto it = cache.find(N);
  if (it == cache.end()) it = cache.emplace(N, make_cheb(N)).first;
  return it->second;
}

const LobattoGrid& LobattoGrid::get(int p) {
  static std::map<int, LobattoGrid> cache;
  auto it = cache.find(p);
  if (it == cache.end()) it = cache.emplace(p, make_lobatto(p)).first;
  return it->second;
}

void gauss_legendre(int q, Vec& x, Vec& w) {
  static std::map<int, std::pair<Vec, Vec>> cache;
  auto it = cache.find(q);
  if (it == cache.end()) {
    if (q < 1) throw std::invalid_argument("gauss_legendre: q must be >= 1");
    Mat J = Mat::Zero(q, q);
    for (int k = 1; k < q; ++k) {
      double b = k / std::sqrt(4.0 * k * k - 1.0);
      J(k, k - 1) = J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(J);
    Vec xs = es.eigenvalues();
    Vec ws(q);
    for (int k = 0; k < q; ++k) {
      double v0 = es.eigenvectors()(0, k);
      ws[k] = 2.0 * v0 * v0;
    }
    it = cache.emplace(q, std::make_pair(xs, ws)).first;
  }
  x = it->second.first;
  w = it->second.second;
}

Vec bary_weights(const Vec& nodes) {
  int n = int(nodes.size());
  Vec w = Vec::Ones(n);
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j)
      if (j != k) w[k] /= (nodes[k] - nodes[j]);
  }
  // scale to unit max for conditioning; interpolation is scale invariant
  w /= w.cwiseAbs().maxCoeff();
  return w;
}

Vec bary_eval_weights(const Vec& x, const Vec& w, double t) {
  int n = int(x.size());
  Vec r = Vec::Zero(n);
  double den = 0.0;
  for (int k = 0; k < n; ++k) {
    double d = t - x[k];
    if (d == 0.0) {
      r.setZero();
      r[k] = 1.0;
      return r;
    }
    r[k] = w[k] / d;
    den += r[k];
  }
  r /= den;
  return r;
}

}  // namespace flq
