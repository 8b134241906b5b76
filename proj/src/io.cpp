#include "flq/io.hpp"

#include <climits>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace flq {

using nlohmann::json;

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string metadata_header(const DdeModel& m, const Discretization& disc) {
  std::ostringstream os;
  os << "# " << kToolVersion << "\n";
  os << "# model " << m.name << " hash=" << model_hash(m) << "\n";
  os << "# discretization N=" << disc.N << " deg=" << disc.deg
     << " dt=" << (disc.dt > 0.0 ? format_double(disc.dt) : "auto") << "\n";
  return os.str();
}

std::string csv_text(const std::string& meta,
                     const std::vector<std::string>& columns,
                     const std::vector<std::vector<double>>& rows) {
  std::ostringstream os;
  os << meta;
  for (size_t i = 0; i < columns.size(); ++i)
    os << columns[i] << (i + 1 < columns.size() ? "," : "\n");
  for (const auto& r : rows) {
    if (r.size() != columns.size())
      throw std::invalid_argument("csv row width mismatch");
    for (size_t i = 0; i < r.size(); ++i)
      os << format_double(r[i]) << (i + 1 < r.size() ? "," : "\n");
  }
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

std::string multipliers_csv(const DdeModel& m, const Discretization& disc,
                            const std::vector<FloquetMultiplier>& ms) {
  std::vector<std::vector<double>> rows;
  for (const auto& ml : ms)
    rows.push_back({ml.lambda.real(), ml.lambda.imag(), std::abs(ml.lambda),
                    ml.sigma.real(), ml.sigma.imag(), double(ml.alg),
                    ml.residual, ml.unit_band ? 1.0 : 0.0});
  return csv_text(metadata_header(m, disc),
                  {"re", "im", "modulus", "sigma_re", "sigma_im", "alg_mult",
                   "residual", "center"},
                  rows);
}

std::string trajectory_csv(const DdeModel& m, const Discretization& disc,
                           const Trajectory& tr, double t0, double t1,
                           int samples) {
  std::vector<std::string> cols = {"t"};
  for (int i = 0; i < m.n; ++i) cols.push_back("x" + std::to_string(i));
  std::vector<std::vector<double>> rows;
  for (int k = 0; k < samples; ++k) {
    double t = t0 + (t1 - t0) * k / (samples - 1);
    Vec x = tr.eval(t);
    std::vector<double> r = {t};
    for (int i = 0; i < m.n; ++i) r.push_back(x[i]);
    rows.push_back(std::move(r));
  }
  return csv_text(metadata_header(m, disc), cols, rows);
}

namespace {

json meta_json(const DdeModel& m, const Discretization& disc) {
  json j;
  j["tool"] = kToolVersion;
  j["model"] = m.name;
  j["hash"] = model_hash(m);
  j["N"] = disc.N;
  j["deg"] = disc.deg;
  j["dt"] = disc.dt;
  return j;
}

json cplx_json(Cplx z) { return json::array({z.real(), z.imag()}); }

json segment_json(const CSegment& seg) {
  json v = json::array();
  for (int i = 0; i < seg.n(); ++i) {
    json re = json::array(), im = json::array();
    for (int k = 0; k <= seg.degree(); ++k) {
      re.push_back(seg.values(i, k).real());
      im.push_back(seg.values(i, k).imag());
    }
    v.push_back(json{{"re", re}, {"im", im}});
  }
  return v;
}

json dual_json(const CDual& d) {
  json head_re = json::array(), head_im = json::array();
  for (int i = 0; i < d.head.cols(); ++i) {
    head_re.push_back(d.head(0, i).real());
    head_im.push_back(d.head(0, i).imag());
  }
  json panels = json::array();
  for (const auto& p : d.density.panels) {
    json pre = json::array(), pim = json::array();
    for (int i = 0; i < p.rows(); ++i)
      for (int k = 0; k < p.cols(); ++k) {
        pre.push_back(p(i, k).real());
        pim.push_back(p(i, k).imag());
      }
    panels.push_back(json{{"re", pre}, {"im", pim}});
  }
  return json{{"head_re", head_re},
              {"head_im", head_im},
              {"breaks", d.density.breaks},
              {"deg", d.density.deg},
              {"panels", panels}};
}

}  // namespace

std::string eigensystem_json(const DdeModel& m, const Discretization& disc,
                             const PeriodicEigensystem& eig) {
  json j;
  j["meta"] = meta_json(m, disc);
  j["lambda"] = cplx_json(eig.lambda);
  j["sigma"] = cplx_json(eig.sigma);
  j["antiperiodic"] = eig.antiperiodic;
  j["window"] = eig.window;
  j["chain_length"] = eig.m;
  j["closure"] = eig.closure;
  j["ode_residual"] = eig.ode_residual;
  j["transport_residual"] = eig.transport_residual;
  j["domain_defect"] = eig.domain_defect;
  j["tau"] = eig.tau;
  json fam = json::array();
  for (int i = 0; i < eig.m; ++i) {
    json col = json::array();
    for (const auto& seg : eig.phi[i]) col.push_back(segment_json(seg));
    fam.push_back(col);
  }
  j["phi"] = fam;
  return j.dump(1) + "\n";
}

std::string adjoint_json(const DdeModel& m, const Discretization& disc,
                         const AdjointEigensystem& adj) {
  json j;
  j["meta"] = meta_json(m, disc);
  j["lambda"] = cplx_json(adj.lambda);
  j["sigma"] = cplx_json(adj.sigma);
  j["antiperiodic"] = adj.antiperiodic;
  j["window"] = adj.window;
  j["chain_length"] = adj.m;
  j["closure"] = adj.closure;
  j["ode_residual"] = adj.ode_residual;
  j["tau"] = adj.tau;
  json fam = json::array();
  for (int i = 0; i < adj.m; ++i) {
    json col = json::array();
    for (const auto& d : adj.psi[i]) col.push_back(dual_json(d));
    fam.push_back(col);
  }
  j["psi"] = fam;
  return j.dump(1) + "\n";
}

std::string normalform_json(const DdeModel& m, const Discretization& disc,
                            const NormalFormReport& rep) {
  json j;
  j["meta"] = meta_json(m, disc);
  j["label"] = rep.label;
  j["s"] = rep.s;
  j["T"] = rep.T;
  j["window"] = rep.window;
  j["n0"] = rep.n0;
  j["order"] = rep.order;
  j["pairing_defect"] = rep.basis.pairing_defect;
  j["basis_residual"] = rep.basis.basis_residual;
  j["invariance_defect"] = rep.invariance_defect;
  j["symmetry_defect"] = rep.symmetry_defect;
  j["reality_defect"] = rep.reality_defect;
  j["max_residual"] = rep.max_residual;

  json coeffs = json::array();
  for (const auto& c : rep.coeffs)
    coeffs.push_back(json{{"name", c.name},
                          {"alpha", c.alpha},
                          {"component", c.component},
                          {"value", cplx_json(c.value)},
                          {"residual", c.residual}});
  j["coefficients"] = coeffs;

  json orders = json::array();
  for (const auto& mc : rep.orders) {
    json o;
    o["q"] = mc.q;
    o["parity_defect"] = mc.parity_defect;
    json monos = json::array(), res = json::array(), p = json::array(),
         P = json::array();
    for (int a = 0; a < mc.mono.count(); ++a) {
      monos.push_back(mc.mono.idx[a]);
      res.push_back(mc.residual[a]);
      p.push_back(json{{"value", cplx_json(mc.p_hat[a])},
                       {"mode", mc.p_mode[a] == INT_MIN ? json() : json(mc.p_mode[a])}});
      json Pa = json::array();
      for (int l = 0; l < rep.n0; ++l)
        Pa.push_back(json{{"value", cplx_json(mc.P_hat(l, a))},
                          {"mode", mc.P_mode(l, a) == INT_MIN
                                       ? json()
                                       : json(mc.P_mode(l, a))}});
      P.push_back(Pa);
    }
    o["monomials"] = monos;
    o["residual"] = res;
    o["p"] = p;
    o["P"] = P;
    orders.push_back(o);
  }
  j["orders"] = orders;
  return j.dump(1) + "\n";
}

std::string normalform_h_csv(const DdeModel& m, const Discretization& disc,
                             const NormalFormReport& rep, const Vec& xi) {
  std::vector<std::string> cols = {"tau", "theta"};
  for (int i = 0; i < m.n; ++i) cols.push_back("h" + std::to_string(i));
  std::vector<std::vector<double>> rows;
  int M = rep.basis.mesh();
  for (int k = 0; k < M; ++k) {
    CSegment Hk = rep.H_eval_mesh(k, xi);
    for (int l = 0; l <= Hk.degree(); ++l) {
      std::vector<double> r = {rep.basis.tau[k], Hk.node(l)};
      for (int i = 0; i < m.n; ++i) r.push_back(Hk.values(i, l).real());
      rows.push_back(std::move(r));
    }
  }
  std::ostringstream meta;
  meta << metadata_header(m, disc) << "# xi";
  for (int i = 0; i < xi.size(); ++i) meta << " " << format_double(xi[i]);
  meta << "\n";
  return csv_text(meta.str(), cols, rows);
}

}  // namespace flq
