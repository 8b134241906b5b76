#include "flq/floquet.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace flq {

namespace {

// 8th-order centered first-derivative stencil, offsets -4..4.
constexpr double kFd8[9] = {1.0 / 280.0,  -4.0 / 105.0, 1.0 / 5.0,
                            -4.0 / 5.0,   0.0,          4.0 / 5.0,
                            -1.0 / 5.0,   4.0 / 105.0,  -1.0 / 280.0};

CMat matpow(const CMat& B, int k) {
  CMat P = CMat::Identity(B.rows(), B.cols());
  for (int i = 0; i < k; ++i) P = P * B;
  return P;
}

int nullity(const Vec& sv, double gap) {
  if (sv.size() == 0) return 0;
  int c = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] <= gap * sv[0]) ++c;
  return c;
}

// Basis flow of a raw kernel; columns in node-major nodal order.
template <class S>
LinearFlow<S> kernel_basis_flow(const StepKernelT<S>& k, double h, int n,
                                int N, double s, double e,
                                const Discretization& disc) {
  std::vector<SegmentT<S>> basis;
  basis.reserve(n * (N + 1));
  for (int b = 0; b < n * (N + 1); ++b) {
    SegmentT<S> sb = SegmentT<S>::zero(n, N, h);
    sb.values(b % n, b / n) = S(1);
    basis.push_back(std::move(sb));
  }
  return propagate_linear<S>(k, h, basis, s, e, disc);
}

double wrap_into(double t, double base, double window) {
  double u = std::fmod(t - base, window);
  if (u < 0.0) u += window;
  return base + u;
}

// Chain-coordinate corrections making the family close over one period:
// with U = lambda I + S on chain coordinates (S e_j = e_{j-1}), row i solves
//   S a_i = -(lambda I + S) sum_{k=1..i} ((-T)^k / k!) a_{i-k},
// whose top component vanishes identically; a_i[0] is fixed to 0, a_0 = e_0.
CMat family_alpha(Cplx lambda, double T, int m) {
  std::vector<CVec> a(m, CVec::Zero(m));
  a[0][0] = Cplx(1.0);
  for (int i = 1; i < m; ++i) {
    CVec w = CVec::Zero(m);
    double pw = 1.0, fact = 1.0;
    for (int k = 1; k <= i; ++k) {
      pw *= -T;
      fact *= k;
      w += (pw / fact) * a[i - k];
    }
    CVec sw = CVec::Zero(m);
    for (int j = 0; j + 1 < m; ++j) sw[j] = w[j + 1];
    CVec r = -(lambda * w + sw);
    for (int j = 0; j + 1 < m; ++j) a[i][j + 1] = r[j];
  }
  CMat A = CMat::Zero(m, m);
  for (int i = 0; i < m; ++i) A.row(i) = a[i].transpose();
  return A;
}

// Family member i of a corrected-chain flow at (unwrapped) time u:
//   phi_i(u) = e^{-sigma(u-base)} sum_k ((base-u)^k / k!) flow.segment(u, i-k).
CSegment family_segment(const CFlow& flow, Cplx sigma, double base, int i,
                        double u) {
  CSegment acc = flow.segment(u, i);
  double pw = 1.0, fact = 1.0;
  for (int k = 1; k <= i; ++k) {
    pw *= base - u;
    fact *= k;
    acc.values += (pw / fact) * flow.segment(u, i - k).values;
  }
  acc.values *= std::exp(-sigma * (u - base));
  return acc;
}

// Dual elements of reversed-kernel segments zeta_q at y = -t:
// head = zeta(0)^T, density row at theta collects the still-pending lag terms
//   g(theta) = sum_{tau_j > theta} zeta(theta - tau_j)^T A_j(t + tau_j - theta).
// The layout keeps every lag on a panel boundary, so a panel midpoint decides
// which terms are active on it.
std::vector<CDual> duals_from_reversed_segments(
    const std::vector<CSegment>& zeta, const CStepKernel& fwd, double t,
    const DualLayout& L) {
  const int m = int(zeta.size());
  const ChebGrid& g = ChebGrid::get(L.deg);
  std::vector<CDual> out(m, CDual::zero(L.n, L.deg, L.breaks));
  for (int q = 0; q < m; ++q)
    out[q].head = zeta[q].values.col(0).transpose();
  const int P = int(L.breaks.size()) - 1;
  for (int p = 0; p < P; ++p) {
    double a = L.breaks[p], b = L.breaks[p + 1];
    double mid = 0.5 * (a + b);
    for (int k = 0; k <= L.deg; ++k) {
      double th = a + (b - a) * (1.0 - g.x[k]) / 2.0;
      for (size_t j = 1; j < fwd.tau.size(); ++j) {
        if (fwd.tau[j] <= mid) continue;
        const CMat Aj = fwd.A(t + fwd.tau[j] - th)[j];
        for (int q = 0; q < m; ++q) {
          CVec zv = zeta[q].eval(th - fwd.tau[j]);
          out[q].density.panels[p].col(k) += Aj.transpose() * zv;
        }
      }
    }
  }
  return out;
}

// Raw (pre-normalization) adjoint family members at unwrapped time u: the
// reversed-kernel family at y = -u, converted to duals with reversed index.
std::vector<CDual> adjoint_raw_at(const AdjointEigensystem& A, double u) {
  const double yb = -(A.s + A.window);
  std::vector<CSegment> zeta(A.m);
  for (int l = 0; l < A.m; ++l)
    zeta[l] = family_segment(A.rflow, A.sigma, yb, l, -u);
  std::reverse(zeta.begin(), zeta.end());
  return duals_from_reversed_segments(zeta, A.fwd, u, A.layout);
}

CDual combine_duals(const std::vector<CDual>& raw, const CMat& post, int i) {
  CDual acc = raw[0];
  acc.head *= post(i, 0);
  for (auto& Pn : acc.density.panels) Pn *= post(i, 0);
  for (int l = 1; l < int(raw.size()); ++l) {
    acc.head += post(i, l) * raw[l].head;
    for (size_t p = 0; p < acc.density.panels.size(); ++p)
      acc.density.panels[p] += post(i, l) * raw[l].density.panels[p];
  }
  return acc;
}

double rel_diff_inf(const CMat& a, const CMat& b, double scale) {
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

std::vector<Segment> residual_probes(int n, int N, double h) {
  std::vector<Segment> chi;
  for (int c = 0; c < 3; ++c)
    chi.push_back(segment_from_function<double>(n, N, h, [&](double th) {
      Vec v(n);
      for (int i = 0; i < n; ++i)
        v[i] = std::cos((1.3 + 0.7 * c) * th + 0.5 * i + 0.3 * c);
      return v;
    }));
  return chi;
}

}  // namespace

// ---------------------------------------------------------------------------
// Multipliers.

std::vector<FloquetMultiplier> floquet_multipliers(const Mat& mono, double T,
                                                   const FloquetOptions& opt) {
  const int dim = int(mono.rows());
  const double nrm = mono.norm();
  Eigen::EigenSolver<Mat> es(mono);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("monodromy eigendecomposition failed");

  std::vector<Cplx> ev;
  int nzero = 0;
  for (int i = 0; i < dim; ++i) {
    Cplx z = es.eigenvalues()[i];
    if (std::abs(z) <= opt.zero_floor)
      ++nzero;
    else
      ev.push_back(z);
  }
  std::sort(ev.begin(), ev.end(), [](Cplx a, Cplx b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });

  struct Cluster {
    Cplx center;
    int count;
  };
  std::vector<Cluster> clusters;
  std::vector<char> used(ev.size(), 0);
  for (size_t a = 0; a < ev.size(); ++a) {
    if (used[a]) continue;
    double r = opt.cluster_rel * std::max(std::abs(ev[a]), 1e-2);
    Cplx sum(0.0);
    int cnt = 0;
    for (size_t b = a; b < ev.size(); ++b) {
      if (used[b] || std::abs(ev[b] - ev[a]) > r) continue;
      used[b] = 1;
      sum += ev[b];
      ++cnt;
    }
    clusters.push_back({sum / double(cnt), cnt});
  }

  // fold conjugate pairs: keep the Im > 0 representative
  std::vector<std::pair<Cluster, bool>> kept;  // (cluster, is_pair)
  std::vector<char> dropped(clusters.size(), 0);
  for (size_t a = 0; a < clusters.size(); ++a) {
    if (dropped[a]) continue;
    Cluster c = clusters[a];
    double imtol = 1e-9 * (1.0 + std::abs(c.center));
    if (std::abs(c.center.imag()) <= imtol) {
      c.center = Cplx(c.center.real(), 0.0);
      kept.emplace_back(c, false);
      continue;
    }
    double r = opt.cluster_rel * std::max(std::abs(c.center), 1e-2);
    bool paired = false;
    for (size_t b = a + 1; b < clusters.size(); ++b) {
      if (dropped[b]) continue;
      if (std::abs(std::conj(c.center) - clusters[b].center) <= 10.0 * r) {
        dropped[b] = 1;
        paired = true;
        break;
      }
    }
    if (c.center.imag() < 0.0) c.center = std::conj(c.center);
    kept.emplace_back(c, paired);
  }

  std::vector<FloquetMultiplier> out;
  const CMat Mc = mono.cast<Cplx>();
  for (auto& [c, paired] : kept) {
    FloquetMultiplier f;
    f.lambda = c.center;
    f.alg = c.count;
    f.conj_pair = paired;
    f.unit_band = std::abs(std::abs(f.lambda) - 1.0) <= opt.band;
    if (f.lambda.imag() == 0.0 && f.lambda.real() < 0.0) {
      f.antiperiodic = true;
      f.sigma = Cplx(std::log(std::abs(f.lambda)) / T, 0.0);
    } else {
      f.sigma = std::log(f.lambda) / T;
    }
    CMat B = -Mc;
    B.diagonal().array() += f.lambda;
    B /= nrm;
    Eigen::JacobiSVD<CMat> svd(B);
    const Vec sv = svd.singularValues();
    f.residual = sv[dim - 1];
    f.geo = std::max(1, std::min(f.alg, nullity(sv, opt.sv_gap)));
    f.chain = f.alg;
    int nu = f.geo;
    CMat Bk = B;
    for (int k = 1; k < f.alg && nu < f.alg; ++k) {
      Bk = Bk * B;
      Eigen::JacobiSVD<CMat> sk(Bk);
      nu = std::max(nu, std::min(f.alg, nullity(sk.singularValues(), opt.sv_gap)));
      if (nu >= f.alg) f.chain = k + 1;
    }
    if (nu >= f.alg && f.geo >= f.alg) f.chain = 1;
    out.push_back(f);
  }

  if (nzero > 0) {
    FloquetMultiplier f;
    f.lambda = Cplx(0.0);
    // placeholder exponent at the lump floor; the cluster only records rank
    f.sigma = Cplx(std::log(opt.zero_floor) / T, 0.0);
    f.alg = f.geo = nzero;
    f.chain = 1;
    Eigen::JacobiSVD<CMat> svd(Mc / nrm);
    f.residual = svd.singularValues()[dim - 1];
    out.push_back(f);
  }

  std::sort(out.begin(), out.end(),
            [](const FloquetMultiplier& a, const FloquetMultiplier& b) {
              double ma = std::abs(a.lambda), mb = std::abs(b.lambda);
              if (ma != mb) return ma > mb;
              if (a.lambda.real() != b.lambda.real())
                return a.lambda.real() > b.lambda.real();
              return a.lambda.imag() > b.lambda.imag();
            });
  return out;
}

const FloquetMultiplier& nearest_multiplier(
    const std::vector<FloquetMultiplier>& ms, Cplx target) {
  if (ms.empty()) throw std::invalid_argument("no multipliers to search");
  size_t best = 0;
  double dbest = 1e300;
  for (size_t i = 0; i < ms.size(); ++i) {
    double d = std::abs(ms[i].lambda - target);
    if (ms[i].conj_pair)
      d = std::min(d, std::abs(std::conj(ms[i].lambda) - target));
    if (d < dbest) {
      dbest = d;
      best = i;
    }
  }
  return ms[best];
}

// ---------------------------------------------------------------------------
// Jordan chains.

JordanChain nodal_jordan_chain(const Mat& mono, const FloquetMultiplier& mu,
                               int n, int N, double h, double s) {
  const int dim = int(mono.rows());
  if (dim != n * (N + 1))
    throw std::invalid_argument("monodromy dimension does not match n*(N+1)");
  if (std::abs(mu.lambda) < 1e-12)
    throw std::invalid_argument("chains at the zero cluster are not defined");
  const int m = mu.alg;
  if (m > 1 && mu.chain != m)
    throw std::runtime_error(
        "multiplier cluster is not a single Jordan chain (alg " +
        std::to_string(m) + ", chain " + std::to_string(mu.chain) + ")");

  CMat B = mono.cast<Cplx>();
  B.diagonal().array() -= mu.lambda;
  const double nrm = mono.norm();

  std::vector<CVec> v(m);
  if (m == 1) {
    Eigen::JacobiSVD<CMat> svd(B, Eigen::ComputeFullV);
    v[0] = svd.matrixV().col(dim - 1);
  } else {
    CMat Bm = matpow(B, m);
    Eigen::JacobiSVD<CMat> svd(Bm, Eigen::ComputeFullV);
    const Vec sv = svd.singularValues();
    if (sv[dim - m] > 1e-3 * sv[0]) {
      std::ostringstream os;
      os << "ambiguous chain space at lambda = " << mu.lambda
         << "; trailing singular values:";
      for (int i = std::max(0, dim - m - 1); i < dim; ++i)
        os << " " << sv[i] / sv[0];
      throw std::runtime_error(os.str());
    }
    CMat W = svd.matrixV().rightCols(m);
    // top vector maximizing the chain foot keeps the descent well scaled
    CMat G = matpow(B, m - 1) * W;
    Eigen::JacobiSVD<CMat> svg(G, Eigen::ComputeFullV);
    v[m - 1] = W * svg.matrixV().col(0);
    for (int i = m - 1; i >= 1; --i) v[i - 1] = B * v[i];
  }

  // deterministic scale and phase from the eigenvector
  int imax = 0;
  v[0].cwiseAbs().maxCoeff(&imax);
  Cplx scale = std::conj(v[0][imax]) / std::abs(v[0][imax]) / v[0].norm();
  for (auto& x : v) x *= scale;

  JordanChain J;
  J.lambda = mu.lambda;
  J.s = s;
  J.V = CMat(dim, m);
  for (int i = 0; i < m; ++i) J.V.col(i) = v[i];
  J.phi.reserve(m);
  for (int i = 0; i < m; ++i)
    J.phi.push_back(unpack_segment<Cplx>(n, N, h, v[i]));
  Eigen::JacobiSVD<CMat> svv(J.V);
  J.gram_cond =
      svv.singularValues()[0] / svv.singularValues()[svv.singularValues().size() - 1];
  double r = 0.0;
  for (int i = 0; i < m; ++i) {
    CVec d = B * v[i];
    if (i > 0) d -= v[i - 1];
    r = std::max(r, d.norm() / (nrm * v[i].norm()));
  }
  J.residual = r;
  return J;
}

JordanChain jordan_chain(const DdeModel& m, const PeriodicOrbit& o, double s,
                         const FloquetMultiplier& mu,
                         const Discretization& disc) {
  Mat mono = monodromy_matrix(m, o, s, o.T, disc);
  return nodal_jordan_chain(mono, mu, m.n, disc.N, m.h, s);
}

// ---------------------------------------------------------------------------
// Forward eigenfunction families.

CSegment PeriodicEigensystem::eval_phi(int i, double t) const {
  return family_segment(flow, sigma, s, i, wrap_into(t, s, window));
}

namespace {

PeriodicEigensystem build_eigensystem(const DdeModel& mdl,
                                      const PeriodicOrbit& o,
                                      const FloquetMultiplier& mu,
                                      const JordanChain& chain,
                                      const Discretization& disc, int mesh,
                                      bool anti) {
  const int m = int(chain.V.cols()), n = mdl.n, N = disc.N;
  const double T = o.T, W = anti ? 2.0 * T : T, s = chain.s;

  PeriodicEigensystem E;
  E.lambda = mu.lambda;
  E.sigma = mu.sigma;
  E.antiperiodic = anti;
  E.conj_pair = mu.conj_pair;
  E.s = s;
  E.T = T;
  E.window = W;
  E.m = m;
  E.alpha = family_alpha(mu.lambda, T, m);

  CMat C = chain.V * E.alpha.transpose();
  std::vector<CSegment> init;
  init.reserve(m);
  for (int i = 0; i < m; ++i)
    init.push_back(unpack_segment<Cplx>(n, N, mdl.h, CVec(C.col(i))));
  Discretization d2 = disc;
  if (d2.dt <= 0) d2.dt = default_dt(mdl, o);
  E.flow = propagate_linear<Cplx>(orbit_kernel_complex(mdl, o), mdl.h, init, s,
                                  s + W, d2);

  const int M = mesh > 0 ? mesh : int(std::lround(96.0 * W / T));
  E.tau.resize(M);
  for (int k = 0; k < M; ++k) E.tau[k] = s + W * k / M;
  E.phi.assign(m, {});
  for (int i = 0; i < m; ++i) {
    E.phi[i].reserve(M);
    for (int k = 0; k < M; ++k)
      E.phi[i].push_back(family_segment(E.flow, E.sigma, s, i, E.tau[k]));
  }

  double s0 = 0.0;
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < M; ++k) s0 = std::max(s0, E.phi[i][k].norm_inf());

  for (int i = 0; i < m; ++i) {
    double si = 1e-300;
    for (int k = 0; k < M; ++k) si = std::max(si, E.phi[i][k].norm_inf());
    CSegment end = family_segment(E.flow, E.sigma, s, i, s + W);
    E.closure =
        std::max(E.closure, rel_diff_inf(end.values, E.phi[i][0].values, si));
    if (anti) {
      CSegment mid = family_segment(E.flow, E.sigma, s, i, s + T);
      E.closure = std::max(
          E.closure, rel_diff_inf(mid.values, (-E.phi[i][0].values).eval(), si));
    }
  }

  const double delta = W / M;
  const double denom = s0 * (1.0 + std::abs(E.sigma));
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < M; ++k) {
      CMat fd = CMat::Zero(n, N + 1);
      for (int j = -4; j <= 4; ++j)
        fd += (kFd8[j + 4] / delta) * E.phi[i][(k + j + M) % M].values;
      CMat rhs = E.phi[i][k].deriv().values - E.sigma * E.phi[i][k].values;
      if (i > 0) rhs -= E.phi[i - 1][k].values;
      E.ode_residual =
          std::max(E.ode_residual, (fd - rhs).cwiseAbs().maxCoeff() / denom);
      if (i == 0) {
        CMat tr = fd - E.phi[0][k].deriv().values;
        E.transport_residual =
            std::max(E.transport_residual, tr.cwiseAbs().maxCoeff() / s0);
      }
      Kernel K = eval_linearization(mdl, o, E.tau[k]);
      E.domain_defect =
          std::max(E.domain_defect,
                   apply_generator(K, E.phi[i][k]).domain_defect / denom);
    }
  }
  return E;
}

}  // namespace

PeriodicEigensystem periodic_eigenfunctions(const DdeModel& m,
                                            const PeriodicOrbit& o,
                                            const FloquetMultiplier& mu,
                                            const JordanChain& chain,
                                            const Discretization& disc,
                                            int mesh) {
  if (mu.antiperiodic)
    throw std::invalid_argument(
        "real negative multipliers take the antiperiodic route");
  return build_eigensystem(m, o, mu, chain, disc, mesh, false);
}

PeriodicEigensystem antiperiodic_eigenfunctions(const DdeModel& m,
                                                const PeriodicOrbit& o,
                                                const FloquetMultiplier& mu,
                                                const JordanChain& chain,
                                                const Discretization& disc,
                                                int mesh) {
  if (!mu.antiperiodic)
    throw std::invalid_argument(
        "the antiperiodic route needs a real negative multiplier");
  return build_eigensystem(m, o, mu, chain, disc, mesh, true);
}

// ---------------------------------------------------------------------------
// Adjoint chains and families.

AdjointChain adjoint_jordan_chain(const DdeModel& mdl, const PeriodicOrbit& o,
                                  double s, const FloquetMultiplier& mu,
                                  const Discretization& disc) {
  const int m = mu.alg, n = mdl.n, N = disc.N;
  const double T = o.T, h = mdl.h;
  Discretization d2 = disc;
  if (d2.dt <= 0) d2.dt = default_dt(mdl, o);

  // chain of the reversed-kernel monodromy, one period up from y = -s
  StepKernel rk = reversed_kernel(orbit_kernel(mdl, o));
  Mat R = kernel_basis_flow<double>(rk, h, n, N, -s, -s + T, d2)
              .state_matrix(-s + T);
  JordanChain rc = nodal_jordan_chain(R, mu, n, N, h, -s);

  CStepKernel fwd = orbit_kernel_complex(mdl, o);
  DualLayout L = ladder_layout(mdl, disc);
  std::vector<CSegment> zeta = rc.phi;
  std::reverse(zeta.begin(), zeta.end());
  AdjointChain A;
  A.lambda = mu.lambda;
  A.s = s;
  A.psi = duals_from_reversed_segments(zeta, fwd, s, L);

  CMat packed(L.size(), m);
  for (int i = 0; i < m; ++i) packed.col(i) = pack_dual(A.psi[i]);
  Eigen::JacobiSVD<CMat> svd(packed);
  A.gram_cond = svd.singularValues()[0] /
                svd.singularValues()[svd.singularValues().size() - 1];

  // chain relations measured through independent backward propagation
  double r = 0.0;
  for (int i = 0; i < m; ++i) {
    CDual u = adjoint_propagate<Cplx>(fwd, h, A.psi[i], s, s - T, d2);
    CDual want = A.psi[i];
    want.head *= mu.lambda;
    for (auto& Pn : want.density.panels) Pn *= mu.lambda;
    if (i + 1 < m) {
      want.head += A.psi[i + 1].head;
      for (size_t p = 0; p < want.density.panels.size(); ++p)
        want.density.panels[p] += A.psi[i + 1].density.panels[p];
    }
    CDual w2 = resample_dual(want, u.density.deg, u.density.breaks);
    CVec du = pack_dual(u), dw = pack_dual(w2);
    double sc = std::max(du.cwiseAbs().maxCoeff(), dw.cwiseAbs().maxCoeff());
    r = std::max(r, (du - dw).cwiseAbs().maxCoeff() / std::max(sc, 1e-300));
  }
  A.residual = r;
  return A;
}

CDual AdjointEigensystem::eval_psi(int i, double t) const {
  std::vector<CDual> raw = adjoint_raw_at(*this, wrap_into(t, s, window));
  return combine_duals(raw, post, i);
}

AdjointEigensystem periodic_adjoint_eigenfunctions(const DdeModel& mdl,
                                                   const PeriodicOrbit& o,
                                                   const FloquetMultiplier& mu,
                                                   double s,
                                                   const Discretization& disc,
                                                   int mesh) {
  const int m = mu.alg, n = mdl.n, N = disc.N;
  const double T = o.T, W = mu.antiperiodic ? 2.0 * T : T, h = mdl.h;
  Discretization d2 = disc;
  if (d2.dt <= 0) d2.dt = default_dt(mdl, o);

  AdjointEigensystem A;
  A.lambda = mu.lambda;
  A.sigma = mu.sigma;
  A.antiperiodic = mu.antiperiodic;
  A.conj_pair = mu.conj_pair;
  A.s = s;
  A.T = T;
  A.window = W;
  A.m = m;
  A.layout = ladder_layout(mdl, disc);
  A.fwd = orbit_kernel_complex(mdl, o);
  A.post = CMat::Identity(m, m);

  const double yb = -(s + W);
  StepKernel rk = reversed_kernel(orbit_kernel(mdl, o));
  Mat R =
      kernel_basis_flow<double>(rk, h, n, N, yb, yb + T, d2).state_matrix(yb + T);
  JordanChain rc = nodal_jordan_chain(R, mu, n, N, h, yb);
  A.alpha = family_alpha(mu.lambda, T, m);
  CMat C = rc.V * A.alpha.transpose();
  std::vector<CSegment> init;
  init.reserve(m);
  for (int i = 0; i < m; ++i)
    init.push_back(unpack_segment<Cplx>(n, N, h, CVec(C.col(i))));
  A.rflow = propagate_linear<Cplx>(reversed_kernel(A.fwd), h, init, yb,
                                   yb + W, d2);

  const int M = mesh > 0 ? mesh : int(std::lround(96.0 * W / T));
  A.tau.resize(M);
  for (int k = 0; k < M; ++k) A.tau[k] = s + W * k / M;
  A.psi.assign(m, {});
  for (int k = 0; k < M; ++k) {
    std::vector<CDual> raw = adjoint_raw_at(A, A.tau[k]);
    for (int i = 0; i < m; ++i) A.psi[i].push_back(raw[i]);
  }

  // packed samples drive both the closure and the weak family-ODE residual
  std::vector<std::vector<CVec>> packed(m);
  double s0 = 0.0;
  for (int i = 0; i < m; ++i) {
    packed[i].reserve(M);
    for (int k = 0; k < M; ++k) {
      packed[i].push_back(pack_dual(A.psi[i][k]));
      s0 = std::max(s0, packed[i][k].cwiseAbs().maxCoeff());
    }
  }

  std::vector<CDual> atW = adjoint_raw_at(A, s + W);
  std::vector<CDual> atT = mu.antiperiodic
                               ? adjoint_raw_at(A, s + T)
                               : std::vector<CDual>();
  for (int i = 0; i < m; ++i) {
    double si = 1e-300;
    for (int k = 0; k < M; ++k)
      si = std::max(si, packed[i][k].cwiseAbs().maxCoeff());
    A.closure = std::max(
        A.closure,
        (pack_dual(atW[i]) - packed[i][0]).cwiseAbs().maxCoeff() / si);
    if (mu.antiperiodic)
      A.closure = std::max(
          A.closure,
          (pack_dual(atT[i]) + packed[i][0]).cwiseAbs().maxCoeff() / si);
  }

  // weak residual of d/dt psi_i = -Astar(t) psi_i + sigma psi_i + psi_{i+1}
  const double delta = W / M;
  const double denom = s0 * (1.0 + std::abs(A.sigma)) * (1.0 + h);
  std::vector<Segment> chi = residual_probes(n, N, h);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < M; ++k) {
      CVec fdv = CVec::Zero(A.layout.size());
      for (int j = -4; j <= 4; ++j)
        fdv += (kFd8[j + 4] / delta) * packed[i][(k + j + M) % M];
      CDual fd = unpack_dual<Cplx>(A.layout, fdv);
      Kernel K = eval_linearization(mdl, o, A.tau[k]);
      auto ast = apply_adjoint_generator(K, A.psi[i][k]);
      for (const Segment& c : chi) {
        Cplx val = pair_dual(fd, c) + ast.pair_with(c) -
                   A.sigma * pair_dual(A.psi[i][k], c);
        if (i + 1 < m) val -= pair_dual(A.psi[i + 1][k], c);
        A.ode_residual = std::max(A.ode_residual, std::abs(val) / denom);
      }
    }
  }
  return A;
}

CMat pairing_matrix(const AdjointEigensystem& adj,
                    const PeriodicEigensystem& eig, double t) {
  CMat P(adj.m, eig.m);
  for (int j = 0; j < adj.m; ++j) {
    CDual pj = adj.eval_psi(j, t);
    for (int i = 0; i < eig.m; ++i)
      P(j, i) = pair_dual(pj, eig.eval_phi(i, t));
  }
  return P;
}

CMat normalize_biorthogonal(const PeriodicEigensystem& eig,
                            AdjointEigensystem& adj, double tau0) {
  CMat P = pairing_matrix(adj, eig, tau0);
  CMat W = P.inverse();
  adj.post = W * adj.post;
  for (int k = 0; k < int(adj.tau.size()); ++k) {
    std::vector<CDual> old;
    old.reserve(adj.m);
    for (int i = 0; i < adj.m; ++i) old.push_back(adj.psi[i][k]);
    for (int i = 0; i < adj.m; ++i) adj.psi[i][k] = combine_duals(old, W, i);
  }
  return P;
}

// ---------------------------------------------------------------------------
// Real-form operators.

Mat jordan_matrix(const FloquetMultiplier& mu) {
  const int m = mu.alg;
  if (!mu.conj_pair) {
    Mat M = Mat::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      M(i, i) = mu.sigma.real();
      if (i + 1 < m) M(i, i + 1) = 1.0;
    }
    return M;
  }
  const double a = mu.sigma.real(), b = mu.sigma.imag();
  Mat M = Mat::Zero(2 * m, 2 * m);
  for (int i = 0; i < m; ++i) {
    M(2 * i, 2 * i) = a;
    M(2 * i, 2 * i + 1) = -b;
    M(2 * i + 1, 2 * i) = b;
    M(2 * i + 1, 2 * i + 1) = a;
    if (i + 1 < m) {
      M(2 * i, 2 * i + 2) = 1.0;
      M(2 * i + 1, 2 * i + 3) = 1.0;
    }
  }
  return M;
}

Segment floquet_operator(const PeriodicEigensystem& eig, double t,
                         const Vec& xi) {
  const int cols = eig.conj_pair ? 2 * eig.m : eig.m;
  if (int(xi.size()) != cols)
    throw std::invalid_argument("coordinate size does not match the family");
  Segment out = Segment::zero(eig.flow.n, eig.flow.N, eig.flow.h);
  for (int i = 0; i < eig.m; ++i) {
    CSegment p = eig.eval_phi(i, t);
    if (!eig.conj_pair) {
      out.values += xi[i] * p.values.real();
    } else {
      out.values += xi[2 * i] * p.values.real();
      out.values -= xi[2 * i + 1] * p.values.imag();
    }
  }
  return out;
}

}  // namespace flq
