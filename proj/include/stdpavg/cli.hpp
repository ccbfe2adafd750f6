#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "csv.hpp"
#include "digest.hpp"
#include "discrete.hpp"
#include "equilibrium.hpp"
#include "limit_ode.hpp"
#include "model.hpp"
#include "simulator.hpp"

namespace stdpavg {

inline constexpr const char* kToolName = "stdpavg";
inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kValidationFailed = 2,
  kOrderViolated = 3,
  kBudgetExhausted = 4,
  kPrecisionFailed = 5,
  kUsage = 64,
};

inline std::vector<std::string> subcommands() {
  return {"simulate", "couple", "equilibrium", "limit-ode", "blowup", "sweep", "validate"};
}

// Command-line overrides; unset fields keep the config value.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<double> horizon;
  std::optional<double> epsilon;
  std::optional<std::size_t> stride;
  std::optional<std::string> kind;
};

// Writes the overrides into the config tree so the echo shows what ran.
inline json apply_overrides(json j, const std::string& cmd, const Overrides& o) {
  auto& run = j["run"];
  if (o.seed) run["seed"] = *o.seed;
  if (o.replicas) run["replicas"] = *o.replicas;
  if (o.horizon) run["horizon"] = *o.horizon;
  if (o.epsilon) run["epsilon"] = *o.epsilon;
  if (o.stride) run["stride"] = *o.stride;
  if (o.kind) run["kind"] = *o.kind;
  if (cmd == "equilibrium") {
    if (o.replicas) j["equilibrium"]["replicas"] = *o.replicas;
    if (o.horizon) j["equilibrium"]["horizon"] = *o.horizon;
  } else if (cmd == "limit-ode") {
    if (o.replicas) j["equilibrium"]["replicas"] = *o.replicas;
    if (o.horizon) j["limit_ode"]["horizon"] = *o.horizon;
  } else if (cmd == "sweep") {
    if (o.replicas) j["sweep"]["replicas"] = *o.replicas;
    if (o.horizon) j["sweep"]["horizon"] = *o.horizon;
    if (o.epsilon) j["sweep"]["epsilons"] = json::array({*o.epsilon});
  }
  return j;
}

struct RunResult {
  int exit_code = kOk;
  std::string message;
  std::vector<std::string> files;  // relative to the output directory
};

namespace detail {

class Outputs {
 public:
  Outputs(std::string dir, const Config& cfg, std::string cmd)
      : dir_(std::move(dir)), cfg_(cfg), cmd_(std::move(cmd)) {}

  CsvTable table(std::vector<std::string> columns) const {
    CsvTable t(std::move(columns));
    t.comment(std::string(kToolName) + " " + kToolVersion + " " + cmd_);
    t.comment("config: " + cfg_.source.dump());
    t.comment("seed: " + std::to_string(cfg_.run.seed));
    return t;
  }
  void write(const std::string& name, const CsvTable& t) {
    t.write((std::filesystem::path(dir_) / name).string());
    files.push_back(name);
  }

  std::vector<std::string> files;

 private:
  std::string dir_;
  const Config& cfg_;
  std::string cmd_;
};

inline std::vector<std::string> state_columns(std::size_t ell) {
  std::vector<std::string> c{"replica", "t", "event", "x"};
  for (std::size_t i = 0; i < ell; ++i) c.push_back("z_" + std::to_string(i + 1));
  c.insert(c.end(), {"omega_p", "omega_d", "w"});
  return c;
}

inline std::vector<std::string> state_row(std::size_t r, const SystemState& s, const std::string& ev) {
  std::vector<std::string> row{cell(r), cell(s.t), ev, cell(s.x)};
  for (double z : s.z) row.push_back(cell(z));
  row.insert(row.end(), {cell(s.omega_p), cell(s.omega_d), cell(s.w)});
  return row;
}

inline std::vector<std::string> state_row(std::size_t r, const DiscreteState& s, const std::string& ev) {
  std::vector<std::string> row{cell(r), cell(s.t), ev, cell(s.x)};
  for (auto z : s.z) row.push_back(cell(z));
  row.insert(row.end(), {cell(s.omega_p), cell(s.omega_d), cell(s.w)});
  return row;
}

inline void require_continuous(const Config& c, const std::string& cmd) {
  if (!c.model) throw ConfigError(cmd + " needs a continuous model");
}

// The jump-rule simple model is coupled through its drift form, where the
// post-spike input reaches W through Omega_p with a finite C_M.
inline ModelSpec coupling_model(const ModelSpec& m) {
  if (m.weight_rule == WeightRule::drift) return m;
  if (m.simple) return simple_model(*m.simple, WeightRule::drift, m.alpha);
  throw ConfigError("coupling needs the drift weight rule");
}

inline RunResult cmd_validate(const Config& c, Outputs& out) {
  ValidationReport rep;
  if (c.model) {
    rep = validate_spec(*c.model).report;
  } else {
    rep = validate_discrete(*c.discrete);
  }
  CsvTable t = out.table({"assumption", "function", "passed", "method", "probe"});
  t.comment("grid: " + rep.grid);
  auto quote = [](std::string s) {
    for (auto& ch : s)
      if (ch == ',') ch = ';';
    return s;
  };
  for (const auto& ch : rep.checks) t.row(quote(ch.assumption), quote(ch.function), ch.passed, ch.method, quote(ch.probe));
  out.write("validation.csv", t);
  RunResult r;
  r.exit_code = rep.ok() ? kOk : kValidationFailed;
  r.message = rep.ok() ? "all assumptions satisfied" : "validation failed:\n" + rep.summary();
  return r;
}

inline RunResult cmd_simulate(const Config& c, Outputs& out, unsigned threads) {
  const auto& run = c.run;
  const std::size_t stride = std::max<std::size_t>(1, run.stride);
  RunResult res;
  CsvTable summary = out.table({"replica", "events", "pre_spikes", "post_spikes", "clamps", "truncated", "final_w"});
  if (run.kind == "discrete" || c.discrete) {
    if (!c.discrete) throw ConfigError("simulate kind 'discrete' needs a discrete model");
    require_valid(*c.discrete);
    DiscreteOptions o;
    o.epsilon = run.epsilon;
    o.horizon = run.horizon;
    o.event_budget = run.event_budget;
    const auto trs = parallel_map(run.replicas, threads, [&](std::size_t r) {
      return simulate_discrete(*c.discrete, c.discrete_initial, o, run.seed, r);
    });
    CsvTable t = out.table(state_columns(c.discrete->ell()));
    for (std::size_t r = 0; r < trs.size(); ++r) {
      const auto& tr = trs[r];
      t.add(state_row(r, tr.initial, "initial"));
      std::size_t pre = 0, post = 0;
      for (std::size_t i = 0; i < tr.events.size(); ++i) {
        const auto& e = tr.events[i];
        pre += e.kind == EventKind::pre_spike;
        post += e.kind == EventKind::post_spike;
        if (i % stride) continue;
        DiscreteState s;
        s.t = e.t;
        s.x = e.x;
        s.z = e.z;
        s.omega_p = e.omega_p;
        s.omega_d = e.omega_d;
        s.w = e.w;
        t.add(state_row(r, s, to_string(e.kind)));
      }
      t.add(state_row(r, tr.final_state, "end"));
      summary.row(r, tr.event_count, pre, post, std::size_t{0}, tr.truncated, tr.final_state.w);
      if (tr.truncated) res.exit_code = kBudgetExhausted;
    }
    out.write("trajectory.csv", t);
    out.write("simulate_summary.csv", summary);
    return res;
  }

  require_continuous(c, "simulate");
  SimOptions o;
  o.epsilon = run.kind == "full" ? 1.0 : run.epsilon;
  o.horizon = run.horizon;
  o.event_budget = run.event_budget;
  std::optional<ValidatedModel> model;
  SystemState u0 = c.initial;
  if (run.kind == "full" || run.kind == "scaled") {
    model = require_valid(*c.model);
  } else if (run.kind == "dominating" || run.kind == "truncated") {
    const ModelSpec dom = c.model->dominating ? *c.model : dominating_spec(*c.model);
    model = require_valid(dom);
    if (!c.model->dominating) u0 = dominating_initial(u0);
    if (run.kind == "truncated") {
      if (!(run.K >= 0.0)) throw ConfigError("truncation level K must be non-negative");
      o.pre_jump_cap = run.K;
    }
  } else {
    throw ConfigError("unknown simulate kind '" + run.kind + "'");
  }
  const auto trs = parallel_map(run.replicas, threads, [&](std::size_t r) { return simulate(*model, u0, o, run.seed, r); });
  CsvTable t = out.table(state_columns((*model)->ell()));
  for (std::size_t r = 0; r < trs.size(); ++r) {
    const auto& tr = trs[r];
    t.add(state_row(r, tr.initial, "initial"));
    for (std::size_t i = 0; i < tr.events.size(); i += stride)
      t.add(state_row(r, tr.state_after(i), to_string(tr.events[i].kind)));
    t.add(state_row(r, tr.final_state, "end"));
    summary.row(r, tr.events.size(), tr.pre_count, tr.post_count, tr.clamp_count, tr.truncated, tr.final_state.w);
    if (tr.truncated) res.exit_code = kBudgetExhausted;
  }
  out.write("trajectory.csv", t);
  out.write("simulate_summary.csv", summary);
  if (res.exit_code == kBudgetExhausted) res.message = "event budget exhausted on at least one replica";
  return res;
}

inline RunResult cmd_couple(const Config& c, Outputs& out, unsigned threads) {
  const auto& run = c.run;
  RunResult res;
  CsvTable audit = out.table({"replica", "t", "x", "x_bar", "z_max", "z_bar", "omega_max", "omega_bar", "w", "w_bar",
                              "ordered"});
  CsvTable summary = out.table({"replica", "checks", "violations", "truncated"});
  std::size_t bad = 0;
  if (c.discrete) {
    require_valid(*c.discrete);
    DiscreteOptions o;
    o.epsilon = run.epsilon;
    o.horizon = run.horizon;
    o.event_budget = run.event_budget;
    o.record_events = false;
    for (std::size_t k = 1; k <= 100; ++k) o.sample_times.push_back(run.horizon * static_cast<double>(k) / 100.0);
    const auto pairs = parallel_map(run.replicas, threads, [&](std::size_t r) {
      return simulate_discrete_coupled(*c.discrete, c.discrete_initial, o, run.seed, r);
    });
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      const auto& p = pairs[r];
      for (std::size_t k = 0; k < p.original_samples.size(); ++k) {
        const auto& u = p.original_samples[k];
        const auto& d = p.dominating_samples[k];
        std::int64_t zmax = 0, zbar = 0;
        for (auto v : u.z) zmax = std::max(zmax, v);
        for (auto v : d.z) zbar = std::max(zbar, v);
        audit.row(r, u.t, u.x, d.x, zmax, zbar, std::max(u.omega_p, u.omega_d), d.omega, u.w, d.w,
                  discrete_ordered(u, d));
      }
      summary.row(r, p.checks, p.violations, p.original.truncated);
      bad += p.violations;
    }
  } else {
    require_continuous(c, "couple");
    const ValidatedModel model = require_valid(coupling_model(*c.model));
    SimOptions o;
    o.epsilon = run.epsilon;
    o.horizon = run.horizon;
    o.event_budget = run.event_budget;
    o.record_events = false;
    CouplingOptions co;
    co.throw_on_violation = false;
    const auto pairs = parallel_map(run.replicas, threads, [&](std::size_t r) {
      return simulate_coupled(model, c.initial, o, run.seed, r, co);
    });
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      const auto& p = pairs[r];
      for (const auto& [u, d] : p.samples) {
        double zmax = 0.0;
        for (double v : u.z) zmax = std::max(zmax, v);
        audit.row(r, u.t, u.x, d.x, zmax, d.z[0], std::max(u.omega_p, u.omega_d), d.omega_p, std::abs(u.w), d.w,
                  !order_violation(u, d).has_value());
      }
      summary.row(r, p.checks, p.violations, p.original.truncated || p.dominating.truncated);
      bad += p.violations;
    }
  }
  out.write("couple_audit.csv", audit);
  out.write("couple_summary.csv", summary);
  if (bad) {
    res.exit_code = kOrderViolated;
    res.message = std::to_string(bad) + " order violations";
  }
  return res;
}

inline RunResult cmd_equilibrium(const Config& c, Outputs& out, unsigned threads) {
  EquilibriumSettings s;
  s.burnin = c.equilibrium.burnin;
  s.horizon = c.equilibrium.horizon;
  s.replicas = c.equilibrium.replicas;
  s.seed = c.run.seed;
  s.threads = threads;
  CsvTable t = out.table({"w", "functional", "estimate", "se", "replicas", "horizon", "reference"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (c.discrete) {
    require_valid(*c.discrete);
    for (double wv : c.equilibrium.w_grid) {
      const auto w = static_cast<std::int64_t>(std::llround(wv));
      const auto e = estimate_discrete_pi(w, *c.discrete, s);
      t.row(w, "psi_p", e.psi[0].mean, e.psi[0].se, e.replicas, e.horizon, nan);
      t.row(w, "psi_d", e.psi[1].mean, e.psi[1].se, e.replicas, e.horizon, nan);
      t.row(w, "EX", e.ex.mean, e.ex.se, e.replicas, e.horizon,
            c.discrete->lambda * static_cast<double>(w) / (1.0 + c.discrete->beta));
      for (std::size_t i = 0; i < e.ez.size(); ++i)
        t.row(w, "EZ_" + std::to_string(i + 1), e.ez[i].mean, e.ez[i].se, e.replicas, e.horizon, nan);
    }
    out.write("equilibrium.csv", t);
    return {};
  }
  require_continuous(c, "equilibrium");
  const ValidatedModel model = require_valid(*c.model);
  const ModelSpec& m = model.spec();
  for (double w : c.equilibrium.w_grid) {
    const auto e = estimate_pi(w, model, s);
    std::optional<DominatingMoments> dm;
    if (m.dominating) dm = dominating_moments(w, m.dominating->lambda, m.dominating->C_k, m.dominating->C_beta, m.gamma[0]);
    double psi_ref[2]{nan, nan};
    if (auto psi = closed_form_psi(m)) {
      const auto v = (*psi)(w);
      psi_ref[0] = v[0];
      psi_ref[1] = v[1];
    }
    static const char* ch[2] = {"p", "d"};
    for (int a = 0; a < 2; ++a) {
      t.row(w, std::string("n0_") + ch[a], e.n0[a].mean, e.n0[a].se, e.replicas, e.horizon, nan);
      t.row(w, std::string("n1_") + ch[a], e.n1[a].mean, e.n1[a].se, e.replicas, e.horizon, nan);
      t.row(w, std::string("n2_") + ch[a], e.n2[a].mean, e.n2[a].se, e.replicas, e.horizon, nan);
      t.row(w, std::string("psi_") + ch[a], e.psi[a].mean, e.psi[a].se, e.replicas, e.horizon, psi_ref[a]);
    }
    t.row(w, "EX", e.ex.mean, e.ex.se, e.replicas, e.horizon, dm ? dm->ex : nan);
    t.row(w, "EX2", e.ex2.mean, e.ex2.se, e.replicas, e.horizon, dm ? dm->ex2 : nan);
    for (std::size_t i = 0; i < e.ez.size(); ++i) {
      t.row(w, "EZ_" + std::to_string(i + 1), e.ez[i].mean, e.ez[i].se, e.replicas, e.horizon, dm ? dm->ez : nan);
      t.row(w, "EXZ_" + std::to_string(i + 1), e.exz[i].mean, e.exz[i].se, e.replicas, e.horizon,
            dm ? dm->exz : nan);
    }
  }
  out.write("equilibrium.csv", t);
  return {};
}

inline RunResult cmd_limit_ode(const Config& c, Outputs& out, unsigned threads) {
  RunResult res;
  EquilibriumSettings s;
  s.burnin = c.equilibrium.burnin;
  s.horizon = c.equilibrium.horizon;
  s.replicas = c.equilibrium.replicas;
  s.seed = c.run.seed;
  s.threads = threads;
  if (c.discrete) {
    require_valid(*c.discrete);
    DiscretePsiCache cache(*c.discrete, s);
    std::vector<double> grid;
    const auto n = static_cast<std::size_t>(std::ceil(c.limit.horizon / c.limit.step - 1e-9));
    for (std::size_t k = 0; k <= n; ++k) grid.push_back(std::min(c.limit.horizon, static_cast<double>(k) * c.limit.step));
    CsvTable t = out.table({"replica", "t", "omega_p", "omega_d", "w"});
    const DiscreteLimitState init{0.0, c.discrete_initial.omega_p, c.discrete_initial.omega_d, c.discrete_initial.w};
    for (std::size_t r = 0; r < c.run.replicas; ++r) {
      const auto path = simulate_discrete_limit(*c.discrete, init, c.limit.horizon, cache, c.run.seed, r, grid);
      for (const auto& q : path.samples) t.row(r, q.t, q.omega_p, q.omega_d, q.w);
    }
    t.comment("source: discrete limit with cached Monte-Carlo Psi");
    out.write("limit_ode.csv", t);
    CsvTable psi = out.table({"w", "psi_p", "psi_d"});
    for (const auto& [w, v] : cache.values()) psi.row(w, v[0], v[1]);
    out.write("psi_cache.csv", psi);
    return res;
  }
  require_continuous(c, "limit-ode");
  const ValidatedModel model = require_valid(*c.model);
  const LimitState init{c.initial.omega_p, c.initial.omega_d, c.initial.w};
  LimitSolution sol;
  const auto psi = closed_form_psi(model.spec());
  const bool mc = c.limit.rhs == "monte-carlo" || (c.limit.rhs == "auto" && !psi);
  if (c.limit.rhs != "auto" && c.limit.rhs != "monte-carlo" && c.limit.rhs != "closed-form")
    throw ConfigError("limit_ode.rhs must be auto, closed-form or monte-carlo");
  if (!mc && !psi) throw ConfigError("no closed-form right-hand side for this model");
  if (mc) {
    MCRhsSettings ms;
    ms.pi = s;
    ms.max_rel_se = c.limit.max_rel_se;
    sol = solve_limit_ode_mc(model, init, c.limit.horizon, c.limit.step, ms, c.limit.ceiling);
  } else {
    sol = solve_limit_ode(model.spec(), init, c.limit.horizon, *psi, c.limit.step, c.limit.ceiling);
  }
  CsvTable t = out.table({"t", "omega_p", "omega_d", "w", "rhs_se"});
  t.comment("source: " + sol.source);
  t.comment("ceiling: " + fmt_real(sol.ceiling));
  t.comment("blowup_time: " + (sol.blowup_time ? fmt_real(*sol.blowup_time) : std::string("none")));
  for (std::size_t k = 0; k < sol.t.size(); ++k)
    t.row(sol.t[k], sol.omega_p[k], sol.omega_d[k], sol.w[k],
          k == 0 || sol.rhs_se.empty() ? 0.0 : sol.rhs_se[k - 1]);
  out.write("limit_ode.csv", t);
  return res;
}

inline RunResult cmd_blowup(const Config& c, Outputs& out) {
  LinearLimitCoefficients L;
  if (c.blowup.coeffs) {
    L = *c.blowup.coeffs;
  } else if (c.model && c.model->simple) {
    L = simple_model_coefficients(*c.model->simple);
  } else {
    throw ConfigError("blowup needs blowup.Lambda or a simple model");
  }
  const BlowupSolution b = blowup_solution(L, c.blowup.w0);
  CsvTable summary = out.table({"Lambda2", "Lambda1", "Lambda0", "Delta", "case", "w0", "S0"});
  summary.row(L.L2, L.L1, L.L0, L.delta(), to_string(b.kind), b.w0, b.S0);
  out.write("blowup_summary.csv", summary);
  CsvTable t = out.table({"t", "w"});
  const double end = std::isfinite(b.S0) ? c.blowup.fraction * b.S0 : c.run.horizon;
  const std::size_t n = std::max<std::size_t>(2, c.blowup.points);
  for (std::size_t k = 0; k < n; ++k) {
    const double tt = end * static_cast<double>(k) / static_cast<double>(n - 1);
    t.row(tt, b(tt));
  }
  out.write("blowup.csv", t);
  return {};
}

inline RunResult cmd_sweep(const Config& c, Outputs& out, unsigned threads) {
  SweepReport rep;
  if (c.discrete) {
    require_valid(*c.discrete);
    DiscreteSweepSettings s;
    s.epsilons = c.sweep.epsilons;
    s.horizon = c.sweep.horizon;
    s.replicas = c.sweep.replicas;
    s.limit_replicas = 4 * c.sweep.replicas;
    s.grid_points = c.sweep.grid_points;
    s.seed = c.run.seed;
    s.threads = threads;
    s.pi.replicas = c.equilibrium.replicas;
    s.pi.burnin = c.equilibrium.burnin;
    s.pi.horizon = c.equilibrium.horizon;
    rep = discrete_convergence_sweep(*c.discrete, c.discrete_initial, s);
  } else {
    require_continuous(c, "sweep");
    const ValidatedModel model = require_valid(*c.model);
    SweepSettings s;
    s.epsilons = c.sweep.epsilons;
    s.horizon = c.sweep.horizon;
    s.replicas = c.sweep.replicas;
    s.grid_points = c.sweep.grid_points;
    s.seed = c.run.seed;
    s.threads = threads;
    s.ode_step = std::min(1e-4, c.limit.step);
    s.mc.pi.replicas = c.equilibrium.replicas;
    s.mc.pi.seed = c.run.seed;
    s.mc.pi.threads = threads;
    rep = convergence_sweep(model, c.initial, s);
  }
  CsvTable t = out.table({"epsilon", "t", "mean_W", "sd_W", "limit_w", "abs_error"});
  t.comment("limit: " + rep.limit_source);
  for (const auto& r : rep.rows) t.row(r.epsilon, r.t, r.mean_w, r.sd_w, r.limit_w, r.abs_error);
  out.write("sweep.csv", t);
  CsvTable s = out.table({"epsilon", "sup_error", "mean_path_sup_error", "truncated"});
  for (const auto& r : rep.summary) s.row(r.epsilon, r.sup_error, r.mean_path_sup, r.truncated);
  out.write("sweep_summary.csv", s);
  RunResult res;
  for (const auto& r : rep.summary)
    if (r.truncated) {
      res.exit_code = kBudgetExhausted;
      res.message = "event budget exhausted in the sweep";
    }
  return res;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

// Runs one subcommand, writes its CSVs and a manifest.json into out_dir.
// Errors become exit codes; the manifest is written in every case.
inline RunResult run_command(const std::string& cmd, const json& config_tree, const std::string& out_dir,
                             unsigned threads = 1) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_at = detail::utc_now();
  std::filesystem::create_directories(out_dir);
  RunResult res;
  std::optional<Config> cfg;
  std::vector<std::string> files;
  try {
    cfg = config_from_json(config_tree);
    detail::Outputs out(out_dir, *cfg, cmd);
    if (cmd == "validate") res = detail::cmd_validate(*cfg, out);
    else if (cmd == "simulate") res = detail::cmd_simulate(*cfg, out, threads);
    else if (cmd == "couple") res = detail::cmd_couple(*cfg, out, threads);
    else if (cmd == "equilibrium") res = detail::cmd_equilibrium(*cfg, out, threads);
    else if (cmd == "limit-ode") res = detail::cmd_limit_ode(*cfg, out, threads);
    else if (cmd == "blowup") res = detail::cmd_blowup(*cfg, out);
    else if (cmd == "sweep") res = detail::cmd_sweep(*cfg, out, threads);
    else throw ConfigError("unknown subcommand '" + cmd + "'");
    files = out.files;
  } catch (const ValidationError& e) {
    res = {kValidationFailed, e.what(), {}};
  } catch (const BudgetExceeded& e) {
    res = {kBudgetExhausted, e.what(), {}};
  } catch (const MCPrecisionError& e) {
    res = {kPrecisionFailed, e.what(), {}};
  } catch (const CouplingViolation& e) {
    res = {kOrderViolated, e.what(), {}};
  } catch (const ConfigError& e) {
    res = {kUsage, e.what(), {}};
  } catch (const std::exception& e) {
    res = {kFailure, e.what(), {}};
  }
  res.files = files;

  json manifest;
  manifest["tool"] = kToolName;
  manifest["version"] = kToolVersion;
  manifest["subcommand"] = cmd;
  manifest["config"] = config_tree;
  if (cfg) {
    manifest["resolved"] = {{"seed", cfg->run.seed},       {"replicas", cfg->run.replicas},
                            {"horizon", cfg->run.horizon}, {"epsilon", cfg->run.epsilon},
                            {"stride", cfg->run.stride},   {"kind", cfg->run.kind},
                            {"K", inf_or_number(cfg->run.K)}, {"threads", threads}};
  }
  json outputs = json::array();
  for (const auto& f : files) {
    const std::string data = read_file((std::filesystem::path(out_dir) / f).string());
    outputs.push_back({{"file", f}, {"sha256", sha256_hex(data)}, {"bytes", data.size()}});
  }
  manifest["outputs"] = outputs;
  manifest["exit_code"] = res.exit_code;
  manifest["message"] = res.message;
  manifest["started_at"] = started_at;
  manifest["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::ofstream((std::filesystem::path(out_dir) / "manifest.json").string()) << manifest.dump(2) << "\n";
  return res;
}

}  // namespace stdpavg
