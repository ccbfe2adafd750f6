#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "discrete.hpp"
#include "equilibrium.hpp"
#include "model.hpp"

namespace stdpavg {

using json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// FunctionSpec <-> JSON. A bare number is a constant.

inline json to_json(const FunctionSpec& f) {
  json j;
  j["kind"] = to_string(f.kind);
  switch (f.kind) {
    case FunctionKind::constant: j["a"] = f.a; break;
    case FunctionKind::affine:
      j["a"] = f.a;
      j["b"] = f.b;
      break;
    case FunctionKind::affine_clipped:
      j["a"] = f.a;
      j["b"] = f.b;
      if (std::isfinite(f.cutoff)) j["cutoff"] = f.cutoff;
      break;
    case FunctionKind::saturating: j["c"] = f.c; break;
    case FunctionKind::piecewise_linear: {
      json k = json::array();
      for (const auto& [x, y] : f.knots) k.push_back({x, y});
      j["knots"] = k;
      break;
    }
  }
  if (!f.weights.empty()) j["weights"] = f.weights;
  return j;
}

inline FunctionSpec function_from_json(const json& j, const std::string& where) {
  if (j.is_number()) return FunctionSpec::constant(j.get<double>());
  if (!j.is_object() || !j.contains("kind")) throw ConfigError(where + ": expected a number or an object with 'kind'");
  FunctionSpec f;
  try {
    f.kind = function_kind_from_string(j.at("kind").get<std::string>());
  } catch (const std::exception&) {
    throw ConfigError(where + ": unknown function kind " + j.at("kind").dump());
  }
  f.a = j.value("a", 0.0);
  f.b = j.value("b", 0.0);
  f.c = j.value("c", 0.0);
  f.cutoff = j.contains("cutoff") ? j.at("cutoff").get<double>() : -kInf;
  if (j.contains("knots")) {
    std::vector<std::pair<double, double>> k;
    for (const auto& p : j.at("knots")) k.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    f = FunctionSpec::piecewise_linear(std::move(k));
  }
  if (j.contains("weights")) f.weights = j.at("weights").get<std::vector<double>>();
  return f;
}

inline double number_or_inf(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
    throw ConfigError(std::string(key) + ": expected a number or \"inf\"");
  }
  return v.get<double>();
}

inline json inf_or_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

// ---------------------------------------------------------------------------
// Model section

inline ModelSpec general_from_json(const json& m) {
  ModelSpec s;
  s.name = m.value("name", std::string("general"));
  s.lambda = m.value("lambda", 1.0);
  s.gamma = m.at("gamma").get<std::vector<double>>();
  const std::size_t ell = s.gamma.size();
  s.k0 = m.contains("k0") ? m.at("k0").get<std::vector<double>>() : std::vector<double>(ell, 0.0);
  auto fvec = [&](const char* key) {
    std::vector<FunctionSpec> v;
    if (!m.contains(key)) return std::vector<FunctionSpec>(ell, FunctionSpec::constant(0.0));
    for (std::size_t i = 0; i < m.at(key).size(); ++i)
      v.push_back(function_from_json(m.at(key)[i], std::string(key) + "[" + std::to_string(i) + "]"));
    return v;
  };
  s.k1 = fvec("k1");
  s.k2 = fvec("k2");
  s.beta = m.contains("beta") ? function_from_json(m.at("beta"), "beta") : FunctionSpec::constant(0.0);
  s.g = m.contains("g") ? function_from_json(m.at("g"), "g") : FunctionSpec::constant(0.0);
  static const char* keys[2][3] = {{"n_p0", "n_p1", "n_p2"}, {"n_d0", "n_d1", "n_d2"}};
  const json n = m.value("n", json::object());
  for (int a = 0; a < 2; ++a)
    for (int j = 0; j < 3; ++j)
      s.n[a][j] = n.contains(keys[a][j]) ? function_from_json(n.at(keys[a][j]), keys[a][j]) : FunctionSpec::constant(0.0);
  s.alpha = m.value("alpha", 1.0);
  const json M = m.value("M", json::object());
  s.M_p = M.contains("p") ? function_from_json(M.at("p"), "M.p") : FunctionSpec::constant(0.0);
  s.M_d = M.contains("d") ? function_from_json(M.at("d"), "M.d") : FunctionSpec::constant(0.0);
  s.delta = M.value("delta", 0.0);
  const std::string rule = m.value("weight_rule", std::string("drift"));
  if (rule != "drift" && rule != "jump") throw ConfigError("weight_rule must be 'drift' or 'jump'");
  s.weight_rule = rule == "jump" ? WeightRule::jump : WeightRule::drift;
  const json b = m.value("bounds", json::object());
  s.bounds.c_beta = b.value("c_beta", 0.0);
  s.bounds.C_beta = b.value("C_beta", 0.0);
  s.bounds.c_g = b.value("c_g", 0.0);
  s.bounds.C_k = b.value("C_k", 0.0);
  s.bounds.C_n = b.value("C_n", 0.0);
  s.bounds.C_M = b.value("C_M", 0.0);
  const json kw = m.value("KW", json::object());
  s.KW.lo = number_or_inf(kw, "lo", -kInf);
  s.KW.hi = number_or_inf(kw, "hi", kInf);
  return s;
}

inline SimpleParams simple_from_json(const json& m) {
  SimpleParams p;
  p.lambda = m.value("lambda", p.lambda);
  p.beta0 = m.value("beta0", p.beta0);
  p.nu = m.value("nu", p.nu);
  p.B1 = m.value("B1", p.B1);
  p.B2 = m.value("B2", p.B2);
  p.gamma = m.value("gamma", p.gamma);
  return p;
}

inline DominatingConstants dominating_from_json(const json& m) {
  DominatingConstants c;
  c.lambda = m.value("lambda", c.lambda);
  c.gamma = m.value("gamma", c.gamma);
  c.alpha = m.value("alpha", c.alpha);
  c.C_k = m.value("C_k", c.C_k);
  c.C_n = m.value("C_n", c.C_n);
  c.C_M = m.value("C_M", c.C_M);
  c.C_beta = m.value("C_beta", c.C_beta);
  c.ell = m.value("ell", c.ell);
  return c;
}

inline DiscreteParams discrete_from_json(const json& m) {
  DiscreteParams p;
  p.name = m.value("name", p.name);
  p.lambda = m.value("lambda", p.lambda);
  p.beta = m.value("beta", p.beta);
  p.gamma = m.value("gamma", p.gamma);
  p.delta = m.value("delta", p.delta);
  p.alpha = m.value("alpha", p.alpha);
  if (m.contains("B1")) p.B1 = m.at("B1").get<std::vector<std::int64_t>>();
  if (m.contains("B2")) p.B2 = m.at("B2").get<std::vector<std::int64_t>>();
  p.A_p = m.value("A_p", p.A_p);
  p.A_d = m.value("A_d", p.A_d);
  p.C_n = m.value("C_n", p.C_n);
  static const char* keys[2][3] = {{"n_p0", "n_p1", "n_p2"}, {"n_d0", "n_d1", "n_d2"}};
  const json n = m.value("n", json::object());
  for (int a = 0; a < 2; ++a)
    for (int j = 0; j < 3; ++j)
      p.n[a][j] = n.contains(keys[a][j]) ? function_from_json(n.at(keys[a][j]), keys[a][j]) : FunctionSpec::constant(0.0);
  return p;
}

// ---------------------------------------------------------------------------
// Whole run configuration

struct RunSettings {
  std::uint64_t seed = 1;
  std::size_t replicas = 1;
  double horizon = 1.0;
  double epsilon = 1.0;
  std::size_t stride = 1;
  std::size_t event_budget = 10'000'000;
  double K = kInf;  // truncation level for the dominating process
  std::string kind = "scaled";  // simulate: full | scaled | dominating | truncated | discrete
};

struct EquilibriumSection {
  std::vector<double> w_grid{1.0};
  double burnin = 0.0;
  double horizon = 0.0;
  std::size_t replicas = 32;
};

struct LimitSection {
  double horizon = 1.0;
  double step = 1e-3;
  std::string rhs = "auto";  // auto | closed-form | monte-carlo
  double ceiling = 1e6;
  double max_rel_se = 0.05;
};

struct BlowupSection {
  std::optional<LinearLimitCoefficients> coeffs;  // defaults to the simple-model coefficients
  double w0 = 1.0;
  std::size_t points = 21;
  double fraction = 0.9;  // table covers [0, fraction*S0]
};

struct SweepSection {
  std::vector<double> epsilons{0.1, 0.03, 0.01};
  double horizon = 0.4;
  std::size_t replicas = 64;
  std::size_t grid_points = 41;
};

struct Config {
  json source;  // echoed in every output header
  std::string type;  // general | simple | dominating | discrete
  std::optional<ModelSpec> model;
  std::optional<DiscreteParams> discrete;
  SystemState initial;
  DiscreteState discrete_initial;
  RunSettings run;
  EquilibriumSection equilibrium;
  LimitSection limit;
  BlowupSection blowup;
  SweepSection sweep;
};

inline Config config_from_json(const json& j) {
  Config c;
  c.source = j;
  try {
    const json& m = j.at("model");
    c.type = m.value("type", std::string("general"));
    if (c.type == "simple") {
      const std::string rule = m.value("weight_rule", std::string("jump"));
      c.model = simple_model(simple_from_json(m), rule == "drift" ? WeightRule::drift : WeightRule::jump,
                             m.value("alpha", 1.0));
    } else if (c.type == "dominating") {
      c.model = dominating_spec(dominating_from_json(m));
    } else if (c.type == "general") {
      c.model = general_from_json(m);
    } else if (c.type == "discrete") {
      c.discrete = discrete_from_json(m);
    } else {
      throw ConfigError("unknown model type '" + c.type + "'");
    }

    const json init = j.value("initial", json::object());
    const std::size_t ell = c.model ? c.model->ell() : c.discrete->ell();
    if (c.model) {
      c.initial = initial_state(*c.model, init.value("x", 0.0), init.value("w", 0.0));
      if (init.contains("z")) c.initial.z = init.at("z").get<std::vector<double>>();
      c.initial.omega_p = init.value("omega_p", 0.0);
      c.initial.omega_d = init.value("omega_d", 0.0);
    } else {
      c.discrete_initial = stdpavg::discrete_initial(*c.discrete, init.value("x", std::int64_t{0}),
                                                     init.value("w", std::int64_t{0}));
      if (init.contains("z")) c.discrete_initial.z = init.at("z").get<std::vector<std::int64_t>>();
      c.discrete_initial.omega_p = init.value("omega_p", 0.0);
      c.discrete_initial.omega_d = init.value("omega_d", 0.0);
    }
    if ((c.model ? c.initial.z.size() : c.discrete_initial.z.size()) != ell)
      throw ConfigError("initial.z must have " + std::to_string(ell) + " entries");

    const json r = j.value("run", json::object());
    c.run.seed = r.value("seed", c.run.seed);
    c.run.replicas = r.value("replicas", c.run.replicas);
    c.run.horizon = r.value("horizon", c.run.horizon);
    c.run.epsilon = r.value("epsilon", c.run.epsilon);
    c.run.stride = r.value("stride", c.run.stride);
    c.run.event_budget = r.value("event_budget", c.run.event_budget);
    c.run.K = number_or_inf(r, "K", kInf);
    c.run.kind = r.value("kind", c.type == "discrete" ? std::string("discrete") : c.run.kind);

    const json e = j.value("equilibrium", json::object());
    if (e.contains("w_grid")) c.equilibrium.w_grid = e.at("w_grid").get<std::vector<double>>();
    c.equilibrium.burnin = e.value("burnin", c.equilibrium.burnin);
    c.equilibrium.horizon = e.value("horizon", c.equilibrium.horizon);
    c.equilibrium.replicas = e.value("replicas", c.equilibrium.replicas);

    const json l = j.value("limit_ode", json::object());
    c.limit.horizon = l.value("horizon", c.limit.horizon);
    c.limit.step = l.value("step", c.limit.step);
    c.limit.rhs = l.value("rhs", c.limit.rhs);
    c.limit.ceiling = l.value("ceiling", c.limit.ceiling);
    c.limit.max_rel_se = l.value("max_rel_se", c.limit.max_rel_se);

    const json b = j.value("blowup", json::object());
    if (b.contains("Lambda")) {
      const auto v = b.at("Lambda").get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("blowup.Lambda must list (Lambda2, Lambda1, Lambda0)");
      c.blowup.coeffs = LinearLimitCoefficients{v[0], v[1], v[2]};
    }
    c.blowup.w0 = b.value("w0", c.model ? c.initial.w : 1.0);
    c.blowup.points = b.value("points", c.blowup.points);
    c.blowup.fraction = b.value("fraction", c.blowup.fraction);

    const json s = j.value("sweep", json::object());
    if (s.contains("epsilons")) c.sweep.epsilons = s.at("epsilons").get<std::vector<double>>();
    c.sweep.horizon = s.value("horizon", c.sweep.horizon);
    c.sweep.replicas = s.value("replicas", c.sweep.replicas);
    c.sweep.grid_points = s.value("grid_points", c.sweep.grid_points);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Bundled presets

inline std::vector<std::string> preset_names() {
  return {"simple", "dominating", "truncated-K", "discrete", "linear-blowup-pos", "linear-blowup-zero",
          "linear-blowup-neg"};
}

inline json preset(const std::string& name) {
  auto simple = [](double nu, double B1) {
    return json{{"type", "simple"}, {"lambda", 1.0}, {"beta0", 1.0}, {"nu", nu},
                {"B1", B1},         {"B2", 1.0},     {"gamma", 1.0}, {"weight_rule", "jump"}};
  };
  json j;
  if (name == "simple" || name == "linear-blowup-zero") {
    j["model"] = simple(0.0, 0.0);
  } else if (name == "linear-blowup-pos") {
    j["model"] = simple(0.0, 1.0);
  } else if (name == "linear-blowup-neg") {
    j["model"] = simple(0.5, 0.0);
  } else if (name == "dominating" || name == "truncated-K") {
    j["model"] = {{"type", "dominating"}, {"lambda", 1.0}, {"gamma", 1.0}, {"alpha", 1.0}, {"C_k", 1.0},
                  {"C_n", 1.0},           {"C_M", 1.0},    {"C_beta", 1.0}, {"ell", 1.0}};
  } else if (name == "discrete") {
    j["model"] = {{"type", "discrete"},
                  {"lambda", 1.0},
                  {"beta", 1.0},
                  {"gamma", 1.0},
                  {"delta", 0.5},
                  {"alpha", 1.0},
                  {"B1", json::array({1})},
                  {"B2", json::array({1})},
                  {"A_p", 1},
                  {"A_d", 1},
                  {"C_n", 1.0},
                  {"n", {{"n_p2", {{"kind", "saturating"}, {"c", 1.0}}}, {"n_d1", {{"kind", "saturating"}, {"c", 1.0}}}}}};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  const bool discrete = name == "discrete";
  j["initial"] = {{"x", discrete ? json(0) : json(0.0)}, {"w", discrete ? json(2) : json(1.0)}};
  j["run"] = {{"seed", 1},
              {"replicas", 4},
              {"horizon", discrete ? 2.0 : 0.4},
              {"epsilon", discrete ? 0.1 : 0.05},
              {"stride", 1},
              {"K", name == "truncated-K" ? json(2.0) : json("inf")},
              {"kind", discrete ? "discrete" : (name == "truncated-K" ? "truncated" : "scaled")}};
  j["equilibrium"] = {{"w_grid", discrete ? json({0, 1, 2, 3}) : json({0.5, 1.0, 2.0})}, {"replicas", 32}};
  j["limit_ode"] = {{"horizon", name == "dominating" || name == "truncated-K" ? 0.2 : 0.4},
                    {"step", 1e-3},
                    {"rhs", "auto"}};
  j["blowup"] = {{"w0", 1.0}, {"points", 21}, {"fraction", 0.9}};
  j["sweep"] = {{"epsilons", {0.1, 0.03, 0.01}}, {"horizon", 0.4}, {"replicas", 64}, {"grid_points", 41}};
  return j;
}

}  // namespace stdpavg
