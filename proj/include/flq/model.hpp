#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "flq/chebyshev.hpp"

namespace flq {

// Values of a candidate solution at the lag points: column j holds x(t-tau_j)
// with tau_0 = 0, so column 0 is the current state and column j>=1 matches
// delays[j-1].
using LagValues = Mat;

// A delay differential equation x'(t) = F(x(t), x(t-tau_1), ..., x(t-tau_m))
// together with its first three derivatives in closed form.  The derivative
// callbacks receive direction tuples of the same n x (m+1) shape as the base
// point; d2/d3 are the symmetric bi-/trilinear forms D^2 F and D^3 F.
struct DdeModel {
  std::string name;
  int n = 0;
  std::vector<double> delays;  // positive lags, ascending
  double h = 0.0;              // history horizon, >= max delay, > 0
  std::map<std::string, double> params;

  std::function<Vec(const LagValues&)> rhs;
  std::function<std::vector<Mat>(const LagValues&)> jac;
  std::function<Vec(const LagValues&, const LagValues&, const LagValues&)> d2;
  std::function<Vec(const LagValues&, const LagValues&, const LagValues&,
                    const LagValues&)>
      d3;

  int lags() const { return int(delays.size()); }
  double lag(int j) const { return j == 0 ? 0.0 : delays[j - 1]; }
  double param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }
};

// Builtin model factory.  Known names: mstar, mackey_glass, delayed_logistic,
// null, ode_vdp, ode_fold, ode_ns, ode_rotation.  `delays` overrides the
// builtin default lags (must keep the builtin's lag count).
DdeModel make_builtin(const std::string& builtin,
                      const std::map<std::string, double>& params = {},
                      const std::vector<double>& delays = {});

// Model I/O against the JSON schema {name, n, delays, params, builtin}.
DdeModel load_model(const std::string& path);
DdeModel model_from_json_text(const std::string& text);
std::string model_to_json_text(const DdeModel& m);

// Stable content hash of the model definition, for output provenance lines.
std::string model_hash(const DdeModel& m);

}  // namespace flq
