#include "flq/normalform.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <climits>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>

#include "flq/evolution.hpp"

namespace flq {

namespace {

constexpr double kTiny = 1e-300;

// ---------------------------------------------------------------------------
// Uniform-mesh Fourier transform over one window.  Mode slot k carries the
// signed index m(k) and frequency 2 pi m / W; coeffs = F * samples and
// samples = B * coeffs are exact inverses.

struct Fourier {
  int M = 0;
  double W = 0.0;
  std::vector<int> mode;  // signed index per slot
  Vec omega;
  CMat F, B;

  Fourier(int M_, double W_) : M(M_), W(W_) {
    mode.resize(M);
    omega.resize(M);
    F.resize(M, M);
    B.resize(M, M);
    for (int k = 0; k < M; ++k) {
      mode[k] = k < (M + 1) / 2 ? k : k - M;
      omega[k] = 2.0 * M_PI * mode[k] / W;
    }
    for (int k = 0; k < M; ++k)
      for (int j = 0; j < M; ++j) {
        double ang = 2.0 * M_PI * mode[k] * j / M;
        F(k, j) = std::polar(1.0 / M, -ang);
        B(j, k) = std::polar(1.0, ang);
      }
  }

  // spectral d/dtau as a mesh-to-mesh matrix
  CMat deriv_matrix() const {
    CVec d(M);
    for (int k = 0; k < M; ++k) d[k] = Cplx(0.0, omega[k]);
    return B * d.asDiagonal() * F;
  }
};

// Gauss-Legendre rule on [-1,1], cached per point count.
const std::pair<Vec, Vec>& gl_rule(int p) {
  static std::map<int, std::pair<Vec, Vec>> cache;
  auto it = cache.find(p);
  if (it != cache.end()) return it->second;
  Vec x(p), w(p);
  for (int i = 0; i < p; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (p + 0.5));
    double p0 = 0.0, dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      p0 = 1.0;
      double p1 = 0.0;
      for (int j = 0; j < p; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
      }
      dp = p * (t * p0 - p1) / (t * t - 1.0);
      double dt = p0 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    x[p - 1 - i] = t;
    w[p - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
  return cache.emplace(p, std::make_pair(x, w)).first->second;
}

// integral_{lo}^{0} exp(w rho) seg(lo - rho) d rho, composite Gauss-Legendre
// chunked against both the polynomial degree and the oscillation of the
// exponential weight
CVec exp_weighted_integral(const CSegment& seg, Cplx w, double lo, int pts,
                           double waves) {
  int n = seg.n();
  CVec acc = CVec::Zero(n);
  double len = -lo;
  if (len <= 0.0) return acc;
  double absw = std::abs(w.imag()) + std::abs(w.real());
  int chunks = std::max(1, int(std::ceil(len * absw / (2.0 * M_PI) * waves)));
  chunks =
      std::max(chunks, int(std::ceil(len / seg.h * (seg.degree() / 4.0 + 2.0))));
  const auto& [gx, gw] = gl_rule(pts);
  double step = len / chunks;
  for (int c = 0; c < chunks; ++c) {
    double a = lo + c * step;
    double mid = a + 0.5 * step, half = 0.5 * step;
    for (int i = 0; i < pts; ++i) {
      double rho = mid + half * gx[i];
      acc += (half * gw[i]) * (std::exp(w * rho) * seg.eval(lo - rho));
    }
  }
  return acc;
}

Cplx pair_sunstar(const CDual& psi, const SunStarValue& v) {
  return (psi.head * v.atom)(0, 0) + pair_dual(psi, v.seg);
}

CDual conj_dual(const CDual& d) {
  CDual out = d;
  out.head = out.head.conjugate();
  for (auto& p : out.density.panels) p = p.conjugate();
  return out;
}

CSegment conj_seg(const CSegment& s) {
  CSegment out = s;
  out.values = out.values.conjugate();
  return out;
}

// parity defect of a coefficient row on a doubled window: periodic content
// lives on even modes, antiperiodic on odd ones
double parity_leak(const Fourier& fr, const CVec& coeffs, int parity) {
  double bad = 0.0, all = 0.0;
  for (int k = 0; k < fr.M; ++k) {
    double a = std::abs(coeffs[k]);
    all += a * a;
    if ((std::abs(fr.mode[k]) % 2) != parity) bad += a * a;
  }
  return std::sqrt(bad) / (std::sqrt(all) + kTiny);
}

int anti_degree(const CenterBasis& cb, const std::array<int, 4>& a) {
  int d = 0;
  for (int i = 0; i < cb.n0; ++i)
    if (cb.anti[i]) d += a[i];
  return d % 2;
}

Cplx monomial_exponent(const CenterBasis& cb, const std::array<int, 4>& a) {
  Cplx nu = 0.0;
  for (int i = 0; i < cb.n0; ++i) nu += double(a[i]) * cb.mu[i];
  return nu;
}

}  // namespace

// ---------------------------------------------------------------------------
// Monomials

Monomials Monomials::all(int n0, int q) {
  Monomials mo;
  mo.n0 = n0;
  mo.q = q;
  std::array<int, 4> a{0, 0, 0, 0};
  std::function<void(int, int)> rec = [&](int pos, int left) {
    if (pos == n0 - 1) {
      a[pos] = left;
      mo.idx.push_back(a);
      a[pos] = 0;
      return;
    }
    for (int v = left; v >= 0; --v) {
      a[pos] = v;
      rec(pos + 1, left - v);
    }
    a[pos] = 0;
  };
  if (n0 > 0) rec(0, q);
  return mo;
}

int Monomials::find(const std::array<int, 4>& a) const {
  for (int i = 0; i < count(); ++i)
    if (idx[i] == a) return i;
  return -1;
}

Cplx monomial_value(const CVec& xi, const std::array<int, 4>& a, int n0) {
  Cplx v = 1.0;
  for (int i = 0; i < n0; ++i)
    for (int p = 0; p < a[i]; ++p) v *= xi[i];
  return v;
}

Mat expm(const Mat& A) {
  int s = 0;
  double nrm = A.cwiseAbs().rowwise().sum().maxCoeff();
  while (nrm > 0.5) {
    nrm /= 2.0;
    ++s;
  }
  Mat B = A / std::pow(2.0, s);
  Mat term = Mat::Identity(A.rows(), A.cols());
  Mat sum = term;
  for (int k = 1; k <= 24; ++k) {
    term = term * B / double(k);
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

CVec CenterBasis::to_eta(const Vec& xi) const {
  if (n0 == 0) return CVec::Zero(0);
  return V.partialPivLu().solve(xi.cast<Cplx>().eval());
}

// ---------------------------------------------------------------------------
// Center basis

CenterBasis center_basis(const DdeModel& m, const PeriodicOrbit& o, double s,
                         const Discretization& disc,
                         const FloquetOptions& fopt, int mesh) {
  CenterBasis cb;
  cb.s = s;
  cb.T = o.T;

  Mat mono = monodromy_matrix(m, o, s, o.T, disc);
  auto ms = floquet_multipliers(mono, o.T, fopt);

  const FloquetMultiplier& triv = nearest_multiplier(ms, Cplx(1.0, 0.0));
  if (std::abs(triv.lambda - 1.0) > 0.1)
    throw std::runtime_error("no trivial multiplier found near 1");
  if (triv.alg > 2 || triv.chain != triv.alg)
    throw std::runtime_error("unsupported structure at the trivial multiplier");
  cb.star = triv.alg == 2;

  std::vector<FloquetMultiplier> centers;
  bool anti_any = false;
  for (const auto& ml : ms) {
    if (&ml == &triv) continue;
    if (!ml.unit_band) continue;
    if (ml.alg != 1) throw std::runtime_error("unsupported center multiplicity");
    centers.push_back(ml);
    anti_any = anti_any || ml.antiperiodic;
  }

  cb.window = anti_any ? 2.0 * o.T : o.T;
  int M = mesh > 0 ? mesh : (anti_any ? 192 : 96);
  if (M % 2) ++M;
  cb.tau.resize(M);
  for (int k = 0; k < M; ++k) cb.tau[k] = k * cb.window / M;

  for (int k = 0; k < M; ++k)
    cb.gdot.push_back(o.deriv_segment(s + cb.tau[k], disc.N, m.h));

  // trivial block, with the eigenvalue pinned exactly
  FloquetMultiplier tm = triv;
  tm.lambda = 1.0;
  tm.sigma = 0.0;
  auto tch = jordan_chain(m, o, s, tm, disc);
  auto teig = periodic_eigenfunctions(m, o, tm, tch, disc);
  auto tadj = periodic_adjoint_eigenfunctions(m, o, tm, s, disc);
  normalize_biorthogonal(teig, tadj, s);
  cb.basis_residual = std::max({teig.closure, teig.ode_residual, tadj.closure});

  // ratio aligning the transported trivial eigenfunction with gamma-dot
  CVec p0 = pack_segment(teig.eval_phi(0, s));
  CVec g0 = pack_segment(o.deriv_segment(s, disc.N, m.h)).cast<Cplx>();
  Cplx cscale = (p0.adjoint() * g0)(0, 0) / (p0.adjoint() * p0)(0, 0).real();

  for (int k = 0; k < M; ++k) {
    CDual r = tadj.eval_psi(0, s + cb.tau[k]);
    r.head /= cscale;
    for (auto& p : r.density.panels) p /= cscale;
    cb.Psi0.push_back(r);
  }

  std::vector<CMat> vblocks;
  auto push_column = [&](Cplx sig, bool anti, int conj_with,
                         std::vector<CSegment> phi, std::vector<CSegment> dphi,
                         std::vector<CDual> psi) {
    cb.mu.conservativeResize(cb.mu.size() + 1);
    cb.mu[cb.mu.size() - 1] = sig;
    cb.anti.push_back(anti);
    cb.conj_of.push_back(conj_with);
    cb.Phi.push_back(std::move(phi));
    cb.dPhi.push_back(std::move(dphi));
    cb.Psi.push_back(std::move(psi));
  };

  if (cb.star) {
    std::vector<CSegment> phi(M), dphi(M);
    std::vector<CDual> psi(M);
    for (int k = 0; k < M; ++k) {
      phi[k] = teig.eval_phi(1, s + cb.tau[k]);
      phi[k].values *= cscale;
      dphi[k] = phi[k].deriv();
      dphi[k].values -= cb.gdot[k].values.cast<Cplx>();
      psi[k] = tadj.eval_psi(1, s + cb.tau[k]);
      psi[k].head /= cscale;
      for (auto& p : psi[k].density.panels) p /= cscale;
    }
    push_column(Cplx(0.0, 0.0), false, int(cb.Phi.size()), std::move(phi),
                std::move(dphi), std::move(psi));
    vblocks.push_back(CMat::Ones(1, 1));
  }

  for (auto cm : centers) {
    if (cm.antiperiodic) {
      cm.sigma = 0.0;
      cm.lambda = -1.0;
    } else {
      cm.sigma = Cplx(0.0, cm.sigma.imag());
      cm.lambda = std::exp(cm.sigma * o.T);
    }
    auto ch = jordan_chain(m, o, s, cm, disc);
    auto eig = cm.antiperiodic
                   ? antiperiodic_eigenfunctions(m, o, cm, ch, disc)
                   : periodic_eigenfunctions(m, o, cm, ch, disc);
    auto adj = periodic_adjoint_eigenfunctions(m, o, cm, s, disc);
    normalize_biorthogonal(eig, adj, s);
    cb.basis_residual = std::max(
        {cb.basis_residual, eig.closure, eig.ode_residual, adj.closure});

    std::vector<CSegment> phi(M), dphi(M);
    std::vector<CDual> psi(M);
    for (int k = 0; k < M; ++k) {
      phi[k] = eig.eval_phi(0, s + cb.tau[k]);
      dphi[k] = phi[k].deriv();
      dphi[k].values -= cm.sigma * phi[k].values;
      psi[k] = adj.eval_psi(0, s + cb.tau[k]);
    }

    if (cm.conj_pair) {
      std::vector<CSegment> phic(M), dphic(M);
      std::vector<CDual> psic(M);
      for (int k = 0; k < M; ++k) {
        phic[k] = conj_seg(phi[k]);
        dphic[k] = conj_seg(dphi[k]);
        psic[k] = conj_dual(psi[k]);
      }
      int base = int(cb.Phi.size());
      push_column(cm.sigma, false, base + 1, std::move(phi), std::move(dphi),
                  std::move(psi));
      push_column(std::conj(cm.sigma), false, base, std::move(phic),
                  std::move(dphic), std::move(psic));
      CMat vb(2, 2);
      vb << Cplx(1, 0), Cplx(1, 0), Cplx(0, -1), Cplx(0, 1);
      vblocks.push_back(vb);
    } else {
      push_column(cm.sigma, cm.antiperiodic, int(cb.Phi.size()),
                  std::move(phi), std::move(dphi), std::move(psi));
      vblocks.push_back(CMat::Ones(1, 1));
    }
  }

  cb.n0 = int(cb.Phi.size());

  // doubled window with +/-1 column factors: project the sampled columns
  // onto their exact half-window symmetry phi(tau + T) = -/+ phi(tau)
  if (anti_any) {
    bool pure = true;
    for (int c = 0; c < cb.n0; ++c) pure = pure && cb.conj_of[c] == c;
    auto sym = [&](std::vector<CSegment>& f, double sgn) {
      for (int k = 0; k < M / 2; ++k) {
        CMat avg = 0.5 * (f[k].values + sgn * f[k + M / 2].values);
        f[k].values = avg;
        f[k + M / 2].values = sgn * avg;
      }
    };
    if (pure)
      for (int c = 0; c < cb.n0; ++c) {
        double sgn = cb.anti[c] ? -1.0 : 1.0;
        sym(cb.Phi[c], sgn);
        sym(cb.dPhi[c], sgn);
      }
  }

  cb.V = CMat::Zero(cb.n0, cb.n0);
  int at = 0;
  for (const auto& vb : vblocks) {
    cb.V.block(at, at, vb.rows(), vb.cols()) = vb;
    at += int(vb.rows());
  }
  cb.M0t = cb.n0 > 0 ? Mat((cb.V * cb.mu.asDiagonal() * cb.V.inverse()).real())
                     : Mat::Zero(0, 0);

  // real reporting columns: conjugate pairs as (Re phi, -Im phi)
  for (int c = 0; c < cb.n0; ++c) {
    if (cb.conj_of[c] < c) continue;
    std::vector<Segment> col(M);
    for (int k = 0; k < M; ++k) {
      col[k].h = cb.Phi[c][k].h;
      col[k].values = cb.Phi[c][k].values.real();
    }
    cb.Q.push_back(std::move(col));
    if (cb.conj_of[c] != c) {
      std::vector<Segment> coli(M);
      for (int k = 0; k < M; ++k) {
        coli[k].h = cb.Phi[c][k].h;
        coli[k].values = -cb.Phi[c][k].values.imag();
      }
      cb.Q.push_back(std::move(coli));
    }
  }

  // biorthonormality across all blocks at a few mesh times
  for (int k : {0, M / 3, 2 * M / 3}) {
    CMat P(cb.n0 + 1, cb.n0 + 1);
    CSegment gd;
    gd.h = cb.gdot[k].h;
    gd.values = cb.gdot[k].values.cast<Cplx>();
    P(0, 0) = pair_dual(cb.Psi0[k], gd);
    for (int c = 0; c < cb.n0; ++c) {
      P(0, c + 1) = pair_dual(cb.Psi0[k], cb.Phi[c][k]);
      P(c + 1, 0) = pair_dual(cb.Psi[c][k], gd);
      for (int d = 0; d < cb.n0; ++d)
        P(c + 1, d + 1) = pair_dual(cb.Psi[c][k], cb.Phi[d][k]);
    }
    P -= CMat::Identity(cb.n0 + 1, cb.n0 + 1);
    cb.pairing_defect = std::max(cb.pairing_defect, P.cwiseAbs().maxCoeff());
  }
  return cb;
}

// ---------------------------------------------------------------------------
// Projections

CenterProjection project_center(const CenterBasis& cb, const ForcingTable& R) {
  int A = R.mono.count(), M = cb.mesh();
  CenterProjection pr;
  pr.mono = R.mono;
  pr.r00 = CMat::Zero(A, M);
  pr.r0t.assign(A, CMat::Zero(cb.n0, M));
  for (int a = 0; a < A; ++a)
    for (int k = 0; k < M; ++k) {
      pr.r00(a, k) = pair_sunstar(cb.Psi0[k], R.val[a][k]);
      for (int l = 0; l < cb.n0; ++l)
        pr.r0t[a](l, k) = pair_sunstar(cb.Psi[l][k], R.val[a][k]);
    }
  return pr;
}

// ---------------------------------------------------------------------------
// Center solve

void solve_homological_center(const CenterBasis& cb, const CenterProjection& pr,
                              MonomialCoefficients& out, double resonance_tol) {
  int M = cb.mesh(), A = pr.mono.count(), n0 = cb.n0;
  out.mono = pr.mono;
  out.q = pr.mono.q;
  Fourier fr(M, cb.window);

  out.h00 = CMat::Zero(A, M);
  out.h0t.assign(A, CMat::Zero(n0, M));
  out.p_hat = CVec::Zero(A);
  out.p_mode.assign(A, INT_MIN);
  out.P_hat = CMat::Zero(n0, A);
  out.P_mode = Eigen::MatrixXi::Constant(n0, A, INT_MIN);
  bool doubled = cb.window > 1.5 * cb.T;
  // on a doubled window with +/-1 column factors every coefficient has a
  // definite parity; measure the leakage, then restrict the solve to the
  // correct-parity modes so the doubled-window symmetry holds exactly
  bool filt = doubled;
  for (int c = 0; c < n0; ++c) filt = filt && cb.conj_of[c] == c;

  for (int a = 0; a < A; ++a) {
    Cplx nu = monomial_exponent(cb, pr.mono.idx[a]);
    int apar = anti_degree(cb, pr.mono.idx[a]);

    // amplitude components first; on a length-2 trivial chain the solved
    // components feed back into the phase equation
    for (int l = 0; l < n0; ++l) {
      CVec chat = fr.F * pr.r0t[a].row(l).transpose();
      if (doubled) {
        int par = (apar + (cb.anti[l] ? 1 : 0)) % 2;
        out.parity_defect =
            std::max(out.parity_defect, parity_leak(fr, chat, par));
        if (filt)
          for (int k = 0; k < M; ++k)
            if (std::abs(fr.mode[k]) % 2 != par) chat[k] = Cplx(0.0, 0.0);
      }
      CVec hm = CVec::Zero(M);
      for (int k = 0; k < M; ++k) {
        Cplx d = Cplx(0.0, -fr.omega[k]) + cb.mu[l] - nu;
        if (std::abs(d) < resonance_tol) {
          if (out.P_mode(l, a) != INT_MIN)
            throw std::runtime_error("multiple resonant amplitude modes");
          out.P_hat(l, a) = chat[k];
          out.P_mode(l, a) = fr.mode[k];
        } else {
          hm[k] = -chat[k] / d;
        }
      }
      out.h0t[a].row(l) = (fr.B * hm).transpose();
    }

    CVec r00 = pr.r00.row(a).transpose();
    if (cb.star)
      for (int k = 0; k < M; ++k)
        for (int l = 0; l < n0; ++l)
          r00[k] += cb.V(0, l) * out.h0t[a](l, k);
    CVec chat = fr.F * r00;
    if (doubled) {
      out.parity_defect =
          std::max(out.parity_defect, parity_leak(fr, chat, apar % 2));
      if (filt)
        for (int k = 0; k < M; ++k)
          if (std::abs(fr.mode[k]) % 2 != apar % 2) chat[k] = Cplx(0.0, 0.0);
    }
    CVec hm = CVec::Zero(M);
    for (int k = 0; k < M; ++k) {
      Cplx d = Cplx(0.0, -fr.omega[k]) - nu;
      if (std::abs(d) < resonance_tol) {
        if (out.p_mode[a] != INT_MIN)
          throw std::runtime_error("multiple resonant phase modes");
        out.p_hat[a] = chat[k];
        out.p_mode[a] = fr.mode[k];
      } else {
        hm[k] = -chat[k] / d;
      }
    }
    out.h00.row(a) = (fr.B * hm).transpose();
  }
}

Cplx MonomialCoefficients::p_sample(const CenterBasis& cb, int a,
                                    double tau) const {
  if (p_mode[a] == INT_MIN) return Cplx(0.0, 0.0);
  double om = 2.0 * M_PI * p_mode[a] / cb.window;
  return p_hat[a] * std::polar(1.0, om * tau);
}

CVec MonomialCoefficients::P_sample(const CenterBasis& cb, int a,
                                    double tau) const {
  CVec v = CVec::Zero(P_hat.rows());
  for (int l = 0; l < P_hat.rows(); ++l) {
    if (P_mode(l, a) == INT_MIN) continue;
    double om = 2.0 * M_PI * P_mode(l, a) / cb.window;
    v[l] = P_hat(l, a) * std::polar(1.0, om * tau);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Complement solve.  Per monomial the equation transports along
// characteristics:
//   w(tau)(theta) = exp(nu theta) y(tau + theta) + V(tau)(theta),
//   V(tau)(theta) = int_theta^0 exp(nu rho) g(tau + rho)(theta - rho) d rho,
// while the head y solves the lag-scaled linear DDE
//   y' = A_0(t) y + sum_j exp(-nu tau_j) A_j(t) y(t - tau_j) - nu y + b(t),
//   b = v + g(.)(0) + sum_j A_j V(.)(-tau_j).

namespace {

struct HypContext {
  Cplx nu;
  CStepKernel kern;
  std::function<CMat(double)> forcing;
  std::vector<CMat> iprof;  // per mode slot: n x (N+1) profile integrals
  Fourier fr;
  int n = 0, N = 0;
  double h = 0.0;
};

HypContext hyp_prepare(const DdeModel& m, const PeriodicOrbit& o,
                       const CenterBasis& cb,
                       const std::vector<SunStarValue>& values, Cplx nu,
                       const HyperbolicOptions& hopt) {
  int M = cb.mesh(), n = m.n;
  int N = values[0].seg.degree();
  HypContext cx{nu, {}, nullptr, {}, Fourier(M, cb.window), n, N, m.h};

  // Fourier modes of the function part in its first argument
  std::vector<CSegment> vhat(M);
  for (int r = 0; r < M; ++r) {
    vhat[r] = CSegment::zero(n, N, m.h);
    for (int k = 0; k < M; ++k)
      vhat[r].values += cx.fr.F(r, k) * values[k].seg.values;
  }

  // lag integrals J(j, r) and node profile integrals
  int lags = m.lags();
  std::vector<CMat> J(lags, CMat::Zero(n, M));
  for (int j = 0; j < lags; ++j)
    for (int r = 0; r < M; ++r)
      J[j].col(r) = exp_weighted_integral(
          vhat[r], nu + Cplx(0.0, cx.fr.omega[r]), -m.delays[j],
          hopt.gl_points, hopt.quad_waves);
  cx.iprof.assign(M, CMat::Zero(n, N + 1));
  CSegment probe = CSegment::zero(n, N, m.h);
  for (int r = 0; r < M; ++r)
    for (int l = 0; l <= N; ++l)
      cx.iprof[r].col(l) = exp_weighted_integral(
          vhat[r], nu + Cplx(0.0, cx.fr.omega[r]), probe.node(l),
          hopt.gl_points, hopt.quad_waves);

  // head forcing samples -> spectral interpolant in global time
  CMat b(n, M);
  for (int k = 0; k < M; ++k) {
    b.col(k) = values[k].atom + values[k].seg.head();
    Kernel kr = eval_linearization(m, o, cb.s + cb.tau[k]);
    for (int j = 0; j < lags; ++j) {
      CVec Vj = CVec::Zero(n);
      for (int r = 0; r < M; ++r) Vj += cx.fr.B(k, r) * J[j].col(r);
      b.col(k) += kr.A[j + 1].cast<Cplx>() * Vj;
    }
  }
  CMat bhat = b * cx.fr.F.transpose();  // column r: mode-r coefficient
  double s = cb.s;
  Vec omega = cx.fr.omega;
  cx.forcing = [bhat, omega, s](double t) {
    CVec acc = CVec::Zero(bhat.rows());
    for (int r = 0; r < omega.size(); ++r)
      acc += bhat.col(r) * std::polar(1.0, omega[r] * (t - s));
    return CMat(acc);
  };

  CStepKernel base = orbit_kernel_complex(m, o);
  std::vector<Cplx> scl(lags);
  for (int j = 0; j < lags; ++j) scl[j] = std::exp(-nu * m.delays[j]);
  auto basefn = base.A;
  cx.kern.tau = base.tau;
  cx.kern.A = [basefn, scl, lags](double t) {
    auto As = basefn(t);
    for (int j = 0; j < lags; ++j) As[j + 1] *= scl[j];
    return As;
  };
  return cx;
}

std::vector<CSegment> hyp_reconstruct(const CenterBasis& cb,
                                      const HypContext& cx,
                                      const CFlow& yflow) {
  int M = cb.mesh(), n = cx.n, N = cx.N;
  std::vector<CSegment> out(M);
  for (int k = 0; k < M; ++k) {
    CSegment w = CSegment::zero(n, N, cx.h);
    for (int l = 0; l <= N; ++l) {
      double th = w.node(l);
      CVec y = yflow.eval(cb.s + cb.tau[k] + th).col(0);
      w.values.col(l) = std::exp(cx.nu * th) * y;
      for (int r = 0; r < M; ++r)
        w.values.col(l) += cx.fr.B(k, r) * cx.iprof[r].col(l);
    }
    // project out the center directions
    Cplx c0 = pair_dual(cb.Psi0[k], w);
    w.values -= c0 * cb.gdot[k].values.cast<Cplx>();
    for (int l = 0; l < cb.n0; ++l) {
      Cplx cl = pair_dual(cb.Psi[l][k], w);
      w.values -= cl * cb.Phi[l][k].values;
    }
    out[k] = std::move(w);
  }
  return out;
}

// forcing row with the center projections removed from the function part
std::vector<SunStarValue> deflated_row(const CenterBasis& cb,
                                       const ForcingTable& R,
                                       const CenterProjection& pr, int a) {
  int M = cb.mesh();
  std::vector<SunStarValue> row(M);
  for (int k = 0; k < M; ++k) {
    row[k] = R.val[a][k];
    row[k].seg.values -= pr.r00(a, k) * cb.gdot[k].values.cast<Cplx>();
    for (int l = 0; l < cb.n0; ++l)
      row[k].seg.values -= pr.r0t[a](l, k) * cb.Phi[l][k].values;
  }
  return row;
}

}  // namespace

std::vector<CSegment> hyperbolic_raw(const DdeModel& m, const PeriodicOrbit& o,
                                     const CenterBasis& cb,
                                     const std::vector<SunStarValue>& values,
                                     Cplx nu, int periods,
                                     const Discretization& disc,
                                     const HyperbolicOptions& hopt) {
  HypContext cx = hyp_prepare(m, o, cb, values, nu, hopt);
  int n = m.n, N = cx.N;
  double s = cb.s, W = cb.window;

  if (periods > 0) {
    std::vector<CSegment> zero = {CSegment::zero(n, N, m.h)};
    CFlow yflow = propagate_linear<Cplx>(cx.kern, m.h, zero, s - periods * W,
                                         s + W, disc, nu, cx.forcing);
    return hyp_reconstruct(cb, cx, yflow);
  }

  // window map of the lag-scaled kernel on nodal coordinates
  std::vector<CSegment> basis(n * (N + 1), CSegment::zero(n, N, m.h));
  for (int b = 0; b < n * (N + 1); ++b) basis[b].values(b % n, b / n) = 1.0;
  CFlow bflow = propagate_linear<Cplx>(cx.kern, m.h, basis, s, s + W, disc, nu);
  CMat Mmod = bflow.state_matrix(s + W);

  std::vector<CSegment> zero = {CSegment::zero(n, N, m.h)};
  CFlow pflow = propagate_linear<Cplx>(cx.kern, m.h, zero, s, s + W, disc, nu,
                                       cx.forcing);
  CVec bp = pack_segment(pflow.segment(s + W, 0));

  // periodic closure (I - M) y0 = b with the neutral directions deflated
  CMat lhs = CMat::Identity(Mmod.rows(), Mmod.cols()) - Mmod;
  Eigen::JacobiSVD<CMat> svd(lhs, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vec sv = svd.singularValues();
  double cut = hopt.deflate_rel * sv[0];
  CVec ub = svd.matrixU().adjoint() * bp;
  for (int i = 0; i < sv.size(); ++i)
    ub[i] = sv[i] > cut ? ub[i] / sv[i] : Cplx(0.0, 0.0);
  CVec y0 = svd.matrixV() * ub;

  std::vector<CSegment> init = {unpack_segment<Cplx>(n, N, m.h, y0)};
  CFlow yflow = propagate_linear<Cplx>(cx.kern, m.h, init, s, s + W, disc, nu,
                                       cx.forcing);
  return hyp_reconstruct(cb, cx, yflow);
}

void solve_homological_hyperbolic(const DdeModel& m, const PeriodicOrbit& o,
                                  const CenterBasis& cb, const ForcingTable& R,
                                  const CenterProjection& pr,
                                  MonomialCoefficients& out,
                                  const Discretization& disc,
                                  const HyperbolicOptions& hopt) {
  int A = R.mono.count(), M = cb.mesh();
  bool filt = cb.window > 1.5 * cb.T;
  for (int c = 0; c < cb.n0; ++c) filt = filt && cb.conj_of[c] == c;

  out.hh.assign(A, {});
  for (int a = 0; a < A; ++a) {
    out.hh[a] = hyperbolic_raw(m, o, cb, deflated_row(cb, R, pr, a),
                               monomial_exponent(cb, R.mono.idx[a]), 0, disc,
                               hopt);
    if (!filt) continue;
    // project onto the definite parity of the monomial across the half-window
    double sgn = anti_degree(cb, R.mono.idx[a]) ? -1.0 : 1.0;
    for (int k = 0; k < M / 2; ++k) {
      CMat avg =
          0.5 * (out.hh[a][k].values + sgn * out.hh[a][k + M / 2].values);
      out.hh[a][k].values = avg;
      out.hh[a][k + M / 2].values = sgn * avg;
    }
  }
}

std::vector<CSegment> hyperbolic_truncated(
    const DdeModel& m, const PeriodicOrbit& o, const CenterBasis& cb,
    const ForcingTable& R, const CenterProjection& pr, int alpha_index,
    int periods, const Discretization& disc, const HyperbolicOptions& hopt) {
  return hyperbolic_raw(m, o, cb, deflated_row(cb, R, pr, alpha_index),
                        monomial_exponent(cb, R.mono.idx[alpha_index]),
                        periods, disc, hopt);
}

// ---------------------------------------------------------------------------
// Order-q forcing

namespace {

// A monomial whose derivative terms cancel analytically still accumulates
// roundoff; snap it to exact zero so the solve returns the true zero branch.
void snap_zero_rows(ForcingTable& R) {
  std::vector<double> fs(R.val.size(), 0.0);
  double g = 0.0;
  for (size_t a = 0; a < R.val.size(); ++a) {
    for (const auto& v : R.val[a])
      fs[a] = std::max(fs[a],
                       v.atom.cwiseAbs().maxCoeff() + v.seg.norm_inf());
    g = std::max(g, fs[a]);
  }
  for (size_t a = 0; a < R.val.size(); ++a)
    if (fs[a] < 1e-13 * g)
      for (auto& v : R.val[a]) {
        v.atom.setZero();
        v.seg.values.setZero();
      }
}

}  // namespace

ForcingTable assemble_forcing(const DdeModel& m, const PeriodicOrbit& o,
                              const CenterBasis& cb,
                              const std::vector<MonomialCoefficients>& lower,
                              int q) {
  if (q < 2 || q > 3) throw std::runtime_error("order must be 2 or 3");
  if (q == 3 && lower.empty())
    throw std::runtime_error("order 3 needs the solved order 2");
  int M = cb.mesh(), n0 = cb.n0, n = m.n;
  int N = n0 > 0 ? cb.Phi[0][0].degree() : cb.gdot[0].degree();
  double s = cb.s;

  ForcingTable R;
  R.mono = Monomials::all(n0, q);
  R.val.assign(R.mono.count(), std::vector<SunStarValue>(M));
  for (auto& row : R.val)
    for (auto& v : row) {
      v.atom = CVec::Zero(n);
      v.seg = CSegment::zero(n, N, cb.gdot[0].h);
    }

  auto eidx = [&](int i) {
    std::array<int, 4> a{0, 0, 0, 0};
    a[i] = 1;
    return a;
  };
  auto add2 = [&](const std::array<int, 4>& x, const std::array<int, 4>& y) {
    std::array<int, 4> a{0, 0, 0, 0};
    for (int i = 0; i < 4; ++i) a[i] = x[i] + y[i];
    return a;
  };

  if (q == 2) {
    for (int i = 0; i < n0; ++i)
      for (int j = i; j < n0; ++j) {
        double fac = i == j ? 0.5 : 1.0;
        int a = R.mono.find(add2(eidx(i), eidx(j)));
        for (int k = 0; k < M; ++k)
          R.val[a][k].atom +=
              fac * eval_multilinear(m, o, s + cb.tau[k],
                                     {cb.Phi[i][k], cb.Phi[j][k]});
      }
    if (cb.star) {
      // time-rescaling cross term of the generalized trivial direction
      for (int kc = 0; kc < n0; ++kc) {
        if (cb.V(0, kc) == Cplx(0.0, 0.0)) continue;
        for (int l = 0; l < n0; ++l) {
          int a = R.mono.find(add2(eidx(kc), eidx(l)));
          for (int k = 0; k < M; ++k)
            R.val[a][k].seg.values -=
                cb.V(0, kc) *
                (cb.dPhi[l][k].values + cb.mu[l] * cb.Phi[l][k].values);
        }
      }
    }
    snap_zero_rows(R);
    return R;
  }

  const MonomialCoefficients& m2 = lower[0];
  int A2 = m2.mono.count();

  // quadratic form across orders (1,2) and cubic form on the basis columns
  for (int i = 0; i < n0; ++i)
    for (int b = 0; b < A2; ++b) {
      int a = R.mono.find(add2(eidx(i), m2.mono.idx[b]));
      for (int k = 0; k < M; ++k)
        R.val[a][k].atom += eval_multilinear(m, o, s + cb.tau[k],
                                             {cb.Phi[i][k], m2.h[b][k]});
    }
  for (int i = 0; i < n0; ++i)
    for (int j = i; j < n0; ++j)
      for (int l = j; l < n0; ++l) {
        double fac;
        if (i == j && j == l)
          fac = 1.0 / 6.0;
        else if (i == j || j == l)
          fac = 0.5;
        else
          fac = 1.0;
        int a = R.mono.find(add2(add2(eidx(i), eidx(j)), eidx(l)));
        for (int k = 0; k < M; ++k)
          R.val[a][k].atom += fac * eval_multilinear(
                                        m, o, s + cb.tau[k],
                                        {cb.Phi[i][k], cb.Phi[j][k],
                                         cb.Phi[l][k]});
      }

  // phase-polynomial cross term p2 (Q' + Q M0) xi
  for (int b = 0; b < A2; ++b) {
    if (m2.p_mode[b] == INT_MIN) continue;
    for (int l = 0; l < n0; ++l) {
      int a = R.mono.find(add2(m2.mono.idx[b], eidx(l)));
      for (int k = 0; k < M; ++k)
        R.val[a][k].seg.values -=
            m2.p_sample(cb, b, cb.tau[k]) *
            (cb.dPhi[l][k].values + cb.mu[l] * cb.Phi[l][k].values);
    }
  }

  // amplitude feed-through D_eta H2 . P2
  for (int b = 0; b < A2; ++b)
    for (int c = 0; c < n0; ++c) {
      int bc = m2.mono.idx[b][c];
      if (bc == 0) continue;
      std::array<int, 4> bm = m2.mono.idx[b];
      bm[c] -= 1;
      for (int bp = 0; bp < A2; ++bp) {
        if (m2.P_mode(c, bp) == INT_MIN) continue;
        int a = R.mono.find(add2(bm, m2.mono.idx[bp]));
        for (int k = 0; k < M; ++k)
          R.val[a][k].seg.values -= double(bc) *
                                    m2.P_sample(cb, bp, cb.tau[k])[c] *
                                    m2.h[b][k].values;
      }
    }

  if (cb.star) {
    for (int kc = 0; kc < n0; ++kc) {
      if (cb.V(0, kc) == Cplx(0.0, 0.0)) continue;
      // xi_1 (d/dtau H2 + D_eta H2 . D eta)
      for (int b = 0; b < A2; ++b) {
        Cplx nub = monomial_exponent(cb, m2.mono.idx[b]);
        int a = R.mono.find(add2(eidx(kc), m2.mono.idx[b]));
        for (int k = 0; k < M; ++k)
          R.val[a][k].seg.values -=
              cb.V(0, kc) * (m2.dh[b][k].values + nub * m2.h[b][k].values);
      }
      // xi_1 Q P2
      for (int bp = 0; bp < A2; ++bp) {
        int a = R.mono.find(add2(eidx(kc), m2.mono.idx[bp]));
        for (int k = 0; k < M; ++k) {
          CVec Ps = m2.P_sample(cb, bp, cb.tau[k]);
          for (int l = 0; l < n0; ++l)
            if (Ps[l] != Cplx(0.0, 0.0))
              R.val[a][k].seg.values -=
                  cb.V(0, kc) * Ps[l] * cb.Phi[l][k].values;
        }
      }
    }
  }
  snap_zero_rows(R);
  return R;
}

// ---------------------------------------------------------------------------
// Assembly and residual of one order

void finalize_order(const DdeModel& m, const PeriodicOrbit& o,
                    const CenterBasis& cb, const ForcingTable& R,
                    MonomialCoefficients& out) {
  int M = cb.mesh(), A = out.mono.count(), n0 = cb.n0;
  out.h.assign(A, std::vector<CSegment>(M));
  out.dh.assign(A, std::vector<CSegment>(M));
  out.residual.assign(A, 0.0);
  if (A == 0) return;

  int n = m.n, N = out.hh[0][0].degree();
  Fourier fr(M, cb.window);
  CMat Dm = fr.deriv_matrix();

  // per-monomial forcing scales, floored by the order-wide scale so that a
  // monomial whose forcing cancels to roundoff does not report noise/noise
  std::vector<double> fscale(A, kTiny);
  double gscale = kTiny;
  for (int a = 0; a < A; ++a) {
    for (int k = 0; k < M; ++k)
      fscale[a] = std::max(fscale[a], R.val[a][k].atom.cwiseAbs().maxCoeff() +
                                          R.val[a][k].seg.norm_inf());
    gscale = std::max(gscale, fscale[a]);
  }

  for (int a = 0; a < A; ++a) {
    for (int k = 0; k < M; ++k) {
      CSegment hseg = out.hh[a][k];
      hseg.values += out.h00(a, k) * cb.gdot[k].values.cast<Cplx>();
      for (int l = 0; l < n0; ++l)
        hseg.values += out.h0t[a](l, k) * cb.Phi[l][k].values;
      out.h[a][k] = std::move(hseg);
    }
    // spectral tau-derivative of the sampled family
    CMat big(M, n * (N + 1));
    for (int k = 0; k < M; ++k)
      big.row(k) =
          Eigen::Map<const CVec>(out.h[a][k].values.data(), n * (N + 1))
              .transpose();
    CMat dbig = Dm * big;
    for (int k = 0; k < M; ++k) {
      out.dh[a][k] = CSegment::zero(n, N, out.h[a][k].h);
      Eigen::Map<CVec>(out.dh[a][k].values.data(), n * (N + 1)) =
          dbig.row(k).transpose();
    }

    Cplx nu = monomial_exponent(cb, out.mono.idx[a]);

    double scale = std::max(fscale[a], 1e-12 * gscale), res = 0.0;

    // head trajectory derivative
    CMat ys(M, n);
    for (int k = 0; k < M; ++k) ys.row(k) = out.h[a][k].head().transpose();
    CMat dys = Dm * ys;

    for (int k = 0; k < M; ++k) {
      Cplx pk = out.p_sample(cb, a, cb.tau[k]);
      CVec Pk = out.P_sample(cb, a, cb.tau[k]);

      CSegment fres = out.h[a][k].deriv();
      fres.values -= out.dh[a][k].values;
      fres.values -= nu * out.h[a][k].values;
      fres.values -= pk * cb.gdot[k].values.cast<Cplx>();
      for (int l = 0; l < n0; ++l) fres.values -= Pk[l] * cb.Phi[l][k].values;
      fres.values += R.val[a][k].seg.values;
      res = std::max(res, fres.norm_inf());

      Kernel kr = eval_linearization(m, o, cb.s + cb.tau[k]);
      CVec hres = -dys.row(k).transpose();
      for (int j = 0; j <= m.lags(); ++j)
        hres += kr.A[j].cast<Cplx>() * out.h[a][k].eval(-m.lag(j));
      hres -= nu * out.h[a][k].head();
      hres -= pk * cb.gdot[k].head().cast<Cplx>();
      for (int l = 0; l < n0; ++l) hres -= Pk[l] * cb.Phi[l][k].head();
      hres += R.val[a][k].atom + R.val[a][k].seg.head();
      res = std::max(res, hres.cwiseAbs().maxCoeff());
    }
    out.residual[a] = res / scale;
  }
}

// ---------------------------------------------------------------------------
// Report evaluations

double NormalFormReport::p_eval(double tau, const Vec& xi) const {
  CVec eta = basis.to_eta(xi);
  Cplx acc = 0.0;
  for (const auto& mc : orders)
    for (int a = 0; a < mc.mono.count(); ++a)
      acc += mc.p_sample(basis, a, tau) *
             monomial_value(eta, mc.mono.idx[a], basis.n0);
  return acc.real();
}

Vec NormalFormReport::P_eval(double tau, const Vec& xi) const {
  CVec eta = basis.to_eta(xi);
  CVec acc = CVec::Zero(basis.n0);
  for (const auto& mc : orders)
    for (int a = 0; a < mc.mono.count(); ++a)
      acc += mc.P_sample(basis, a, tau) *
             monomial_value(eta, mc.mono.idx[a], basis.n0);
  return (basis.V * acc).real();
}

CSegment NormalFormReport::H_eval_mesh(int k, const Vec& xi) const {
  CVec eta = basis.to_eta(xi);
  // no center coordinates: the field has no monomials and is identically zero
  const Segment& g = basis.gdot.at(k);
  CSegment acc = CSegment::zero(g.n(), g.degree(), g.h);
  for (const auto& mc : orders)
    for (int a = 0; a < mc.mono.count(); ++a)
      acc.values += monomial_value(eta, mc.mono.idx[a], basis.n0) *
                    mc.h[a][k].values;
  return acc;
}

Vec NormalFormReport::S0_flip(const Vec& xi) const {
  Vec out = xi;
  // conjugate pairs occupy two adjacent real coordinates and are never
  // antiperiodic; antiperiodic columns are real and flip sign
  for (int c = 0; c < basis.n0; ++c)
    if (basis.anti[c]) out[c] = -out[c];
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

NormalFormReport normal_form_coefficients(const DdeModel& m,
                                          const PeriodicOrbit& o,
                                          const std::string& type, int order,
                                          const Discretization& disc,
                                          const FloquetOptions& fopt,
                                          int mesh) {
  if (order < 2 || order > 3)
    throw std::runtime_error("normal-form order must be 2 or 3");

  NormalFormReport rep;
  rep.basis = center_basis(m, o, 0.0, disc, fopt, mesh);
  const CenterBasis& cb = rep.basis;
  rep.s = cb.s;
  rep.T = cb.T;
  rep.window = cb.window;
  rep.n0 = cb.n0;
  rep.order = order;

  bool anti = false, pair = false;
  for (int c = 0; c < cb.n0; ++c) {
    anti = anti || cb.anti[c];
    pair = pair || cb.conj_of[c] != c;
  }
  if (cb.n0 == 0)
    rep.label = "hyperbolic";
  else if (cb.star && !anti && !pair)
    rep.label = "fold";
  else if (anti && !cb.star && !pair)
    rep.label = "period_doubling";
  else if (pair && !cb.star && !anti)
    rep.label = "neimark_sacker";
  else
    rep.label = "generic";

  if (type == "pd" && rep.label != "period_doubling")
    throw std::runtime_error("no multiplier in unit band near -1");
  if (type == "ns" && rep.label != "neimark_sacker")
    throw std::runtime_error("no conjugate multiplier pair in the unit band");
  if (type == "fold" && rep.label != "fold")
    throw std::runtime_error(
        "no generalized direction at the trivial multiplier");

  for (int q = 2; q <= order; ++q) {
    ForcingTable R = assemble_forcing(m, o, cb, rep.orders, q);
    CenterProjection pr = project_center(cb, R);
    MonomialCoefficients mc;
    solve_homological_center(cb, pr, mc);
    solve_homological_hyperbolic(m, o, cb, R, pr, mc, disc);
    finalize_order(m, o, cb, R, mc);
    rep.orders.push_back(std::move(mc));
  }
  for (const auto& mc : rep.orders)
    for (double r : mc.residual)
      rep.max_residual = std::max(rep.max_residual, r);

  // named resonant coefficients
  auto push_coeff = [&](const std::string& name, int q, std::array<int, 4> a,
                        int comp) {
    const auto& mc = rep.orders[q - 2];
    int ai = mc.mono.find(a);
    if (ai < 0) return;
    NormalFormCoefficient c;
    c.name = name;
    c.alpha = a;
    c.component = comp;
    c.residual = mc.residual[ai];
    c.value = comp < 0 ? mc.p_hat[ai] : mc.P_hat(comp, ai);
    rep.coeffs.push_back(c);
  };
  if (rep.label == "fold") {
    push_coeff("phase_quadratic", 2, {2, 0, 0, 0}, -1);
    push_coeff("amplitude_quadratic", 2, {2, 0, 0, 0}, 0);
  } else if (rep.label == "period_doubling") {
    push_coeff("phase_quadratic", 2, {2, 0, 0, 0}, -1);
    if (order >= 3) push_coeff("amplitude_cubic", 3, {3, 0, 0, 0}, 0);
  } else if (rep.label == "neimark_sacker") {
    push_coeff("phase_shear", 2, {1, 1, 0, 0}, -1);
    if (order >= 3) push_coeff("amplitude_cubic", 3, {2, 1, 0, 0}, 0);
  } else {
    for (int q = 2; q <= order; ++q) {
      const auto& mc = rep.orders[q - 2];
      for (int a = 0; a < mc.mono.count(); ++a) {
        if (mc.p_mode[a] != INT_MIN)
          push_coeff("p_" + std::to_string(q) + "_" + std::to_string(a), q,
                     mc.mono.idx[a], -1);
        for (int l = 0; l < cb.n0; ++l)
          if (mc.P_mode(l, a) != INT_MIN)
            push_coeff("P_" + std::to_string(q) + "_" + std::to_string(a) +
                           "_" + std::to_string(l),
                       q, mc.mono.idx[a], l);
      }
    }
  }

  if (cb.n0 == 0) return rep;

  // rotating-frame constancy of the resonant polynomials
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double pscale = kTiny, Pscale = kTiny;
  Mat M0T = cb.M0t.transpose();
  for (int trial = 0; trial < 50; ++trial) {
    double tau = uni(rng) * cb.window;
    Vec xi(cb.n0);
    for (int i = 0; i < cb.n0; ++i) xi[i] = 2.0 * uni(rng) - 1.0;
    xi *= 0.1 / std::max(1e-12, xi.norm());
    double d = 1e-4 * cb.T;
    auto fp = [&](double t) {
      return rep.p_eval(t, (expm(-t * M0T) * xi).eval());
    };
    auto fP = [&](double t) {
      return (expm(t * M0T) * rep.P_eval(t, (expm(-t * M0T) * xi).eval()))
          .eval();
    };
    pscale = std::max(pscale, std::abs(fp(tau)));
    Pscale = std::max(Pscale, fP(tau).cwiseAbs().maxCoeff());
    rep.invariance_defect = std::max(
        rep.invariance_defect, std::abs(fp(tau + d) - fp(tau - d)) / (2 * d));
    rep.invariance_defect =
        std::max(rep.invariance_defect,
                 ((fP(tau + d) - fP(tau - d)) / (2 * d)).cwiseAbs().maxCoeff());

    // imaginary leakage at real coordinates
    CVec eta = cb.to_eta(xi);
    Cplx pacc = 0.0;
    CVec Pacc = CVec::Zero(cb.n0);
    for (const auto& mc : rep.orders)
      for (int a = 0; a < mc.mono.count(); ++a) {
        Cplx mv = monomial_value(eta, mc.mono.idx[a], cb.n0);
        pacc += mc.p_sample(cb, a, tau) * mv;
        Pacc += mc.P_sample(cb, a, tau) * mv;
      }
    CVec Pre = cb.V * Pacc;
    rep.reality_defect = std::max(rep.reality_defect, std::abs(pacc.imag()));
    rep.reality_defect =
        std::max(rep.reality_defect, Pre.imag().cwiseAbs().maxCoeff());
  }
  rep.invariance_defect /= std::max(pscale, Pscale) / cb.T + kTiny;
  rep.reality_defect /= std::max(pscale, Pscale) + kTiny;

  // doubled-window symmetry: advancing by T equals flipping the
  // antiperiodic coordinates
  if (cb.window > 1.5 * cb.T) {
    int M = cb.mesh();
    double scale = kTiny, defect = 0.0;
    for (int trial = 0; trial < 4; ++trial) {
      Vec xi(cb.n0);
      for (int i = 0; i < cb.n0; ++i) xi[i] = 2.0 * uni(rng) - 1.0;
      xi *= 0.1 / std::max(1e-12, xi.norm());
      Vec xf = rep.S0_flip(xi);
      for (int k = 0; k < M; ++k) {
        CSegment av = rep.H_eval_mesh((k + M / 2) % M, xi);
        CSegment bv = rep.H_eval_mesh(k, xf);
        scale = std::max(scale, av.norm_inf());
        av.values -= bv.values;
        defect = std::max(defect, av.norm_inf());
      }
    }
    rep.symmetry_defect = defect / scale;
  }
  return rep;
}

}  // namespace flq
