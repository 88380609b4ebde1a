#include "cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "otmpc/bench.hpp"
#include "otmpc/controllers.hpp"
#include "otmpc/envs.hpp"
#include "otmpc/errors.hpp"
#include "otmpc/transport.hpp"

namespace otmpc::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

// Options shared by the config-driven subcommands.
struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::int64_t seed = 0;
  int workers = 1;
  std::string out_dir;
  bool verbose = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
};

void add_common(CLI::App* app, CommonOptions& o, bool with_config, const std::string& default_out) {
  if (with_config) {
    app->add_option("--config", o.config_path, "benchmark config file (JSON)")->check(CLI::ExistingFile);
  }
  app->add_option("--set", o.sets, "override a config key, key=value (repeatable)")->take_all();
  o.seed_opt = app->add_option("--seed", o.seed, "root seed (sets harness.base_seed)")->check(CLI::NonNegativeNumber);
  o.workers_opt = app->add_option("--workers", o.workers, "parallel trial workers")->check(CLI::PositiveNumber);
  o.out_dir = default_out;
  app->add_option("--out", o.out_dir, "output directory")->capture_default_str();
  app->add_flag("--verbose,-v", o.verbose, "per-cycle diagnostics on stderr");
}

ConfigMap load_config(const CommonOptions& o, const std::vector<std::string>& fixed = {}) {
  ConfigMap m = o.config_path.empty() ? ConfigMap{} : ConfigMap::from_file(o.config_path);
  m.apply_overrides(fixed);
  m.apply_overrides(o.sets);
  if (o.seed_opt && o.seed_opt->count()) m.set("harness.base_seed", o.seed);
  if (o.workers_opt && o.workers_opt->count()) m.set("harness.workers", std::int64_t{o.workers});
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_file(const std::string& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = e.byte > 0 ? e.byte - 1 : 0;
    for (std::size_t i = 0; i < end && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path + ": invalid JSON at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
}

std::vector<double> to_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return {v.data(), v.data() + v.size()};
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Eigen::RowVectorXd r = m.row(i);
    rows.push_back(std::vector<double>(r.data(), r.data() + r.size()));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// transport

struct TransportOptions {
  std::string cost_path;
  std::string marginals_path;
  std::string out_path = "coupling.json";
  double epsilon = 0.0;
  double tolerance = 1e-6;
  int max_iterations = 500;
  CLI::Option* epsilon_opt = nullptr;
  CLI::Option* tolerance_opt = nullptr;
  CLI::Option* iterations_opt = nullptr;
};

Eigen::MatrixXd parse_cost(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": 'cost' must be a non-empty array of rows");
  std::size_t cols = 0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = where + ": cost[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].empty()) throw ConfigError(at + " must be a non-empty array of numbers");
    if (i == 0) cols = j[i].size();
    if (j[i].size() != cols) {
      throw ConfigError(at + " has " + std::to_string(j[i].size()) + " entries, expected " + std::to_string(cols));
    }
  }
  Eigen::MatrixXd c(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) {
        throw ConfigError(where + ": cost[" + std::to_string(i) + "][" + std::to_string(k) + "] is not a number");
      }
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  }
  return c;
}

Simplex parse_marginal(const json& j, const std::string& field, Eigen::Index n, const std::string& where) {
  if (!j.contains(field)) return Simplex::uniform(n);
  const json& v = j[field];
  if (!v.is_array() || v.size() != static_cast<std::size_t>(n)) {
    throw ConfigError(where + ": '" + field + "' must be an array of " + std::to_string(n) + " numbers");
  }
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number()) {
      throw ConfigError(where + ": " + field + "[" + std::to_string(i) + "] is not a number");
    }
    w[i] = v[static_cast<std::size_t>(i)].get<double>();
  }
  try {
    return Simplex(w);
  } catch (const Error& e) {
    throw ConfigError(where + ": '" + field + "': " + e.what());
  }
}

double number_field(const json& j, const std::string& field, const std::string& where) {
  if (!j[field].is_number()) throw ConfigError(where + ": '" + field + "' must be a number");
  return j[field].get<double>();
}

int run_transport(const TransportOptions& o, std::ostream& out, std::ostream& err) {
  const json doc = parse_json_file(o.cost_path);
  if (!doc.is_object() || !doc.contains("cost")) {
    throw ConfigError(o.cost_path + ": expected an object with a 'cost' field");
  }
  const CostMatrix cost(parse_cost(doc["cost"], o.cost_path));
  const json marg = o.marginals_path.empty() ? doc : parse_json_file(o.marginals_path);
  const std::string marg_where = o.marginals_path.empty() ? o.cost_path : o.marginals_path;
  const Simplex q = parse_marginal(marg, "q", cost.rows(), marg_where);
  const Simplex p = parse_marginal(marg, "p", cost.cols(), marg_where);

  SinkhornConfig cfg;
  if (o.epsilon_opt->count()) {
    cfg.epsilon = o.epsilon;
  } else if (doc.contains("epsilon")) {
    cfg.epsilon = number_field(doc, "epsilon", o.cost_path);
  } else {
    throw ConfigError(o.cost_path + ": no epsilon given; pass --epsilon or set 'epsilon'");
  }
  cfg.tolerance = o.tolerance;
  if (!o.tolerance_opt->count() && doc.contains("tolerance")) {
    cfg.tolerance = number_field(doc, "tolerance", o.cost_path);
  }
  cfg.max_iterations = o.max_iterations;
  if (!o.iterations_opt->count() && doc.contains("max_iterations")) {
    cfg.max_iterations = static_cast<int>(number_field(doc, "max_iterations", o.cost_path));
  }
  cfg.validate(cost.rows(), cost.cols());

  const Coupling c = sinkhorn(cost, q, p, cfg);
  const double objective = eot_objective(cost, c.plan, c.epsilon);

  ordered_json j;
  j["plan"] = matrix_json(c.plan);
  j["epsilon"] = c.epsilon;
  j["objective"] = objective;
  j["iterations"] = c.iterations_used;
  j["converged"] = c.converged;
  j["log_domain"] = c.log_domain;
  j["row_marginal_error"] = c.row_marginal_error;
  j["col_marginal_error"] = c.col_marginal_error;
  j["q"] = to_vector(q.weights());
  j["p"] = to_vector(p.weights());
  write_text(o.out_path, j.dump(2) + "\n");

  out << std::setprecision(17);
  out << "objective: " << objective << "\n"
      << "iterations: " << c.iterations_used << "\n"
      << "row_marginal_error: " << c.row_marginal_error << "\n"
      << "col_marginal_error: " << c.col_marginal_error << "\n"
      << "log_domain: " << (c.log_domain ? "true" : "false") << "\n"
      << "converged: " << (c.converged ? "true" : "false") << "\n"
      << "coupling: " << o.out_path << "\n";
  if (!c.converged) {
    err << "NOT CONVERGED: iteration cap " << cfg.max_iterations << " reached\n";
    return kNotConverged;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// episode

void print_cycle(std::ostream& err, int step, const StateVector& x, const CycleResult& r) {
  err << "step " << step << " x=(";
  for (Eigen::Index i = 0; i < x.size(); ++i) err << (i ? "," : "") << x[i];
  err << ") u=(";
  for (Eigen::Index i = 0; i < r.action.size(); ++i) err << (i ? "," : "") << r.action[i];
  err << ") " << r.diagnostics.to_json() << "\n";
}

int run_episode(const CommonOptions& o, int trial, std::ostream& out, std::ostream& err) {
  const BenchmarkConfig cfg = BenchmarkConfig::from_map(load_config(o));
  TrialObserver obs;
  if (o.verbose) {
    obs.on_cycle = [&err](int step, const StateVector& x, const CycleResult& r, const Controller&) {
      print_cycle(err, step, x, r);
    };
  }
  const TrialRun run = run_trial_full(cfg, trial, &obs);
  const TrialRecord& rec = run.record;
  out << "outcome: " << to_string(rec.outcome) << "\n"
      << "steps_taken: " << rec.steps_taken << "\n";
  if (rec.final_goal_distance) out << "final_goal_distance: " << *rec.final_goal_distance << "\n";
  out << "seed: " << rec.seed << "\n"
      << "config_hash: " << rec.config_hash << "\n";
  if (!o.out_dir.empty()) {
    const fs::path dir(o.out_dir);
    write_text(dir / "record.json", rec.to_json() + "\n");
    write_text(dir / "trajectory.json", trajectory_json(trial, run.trace, run.field) + "\n");
    out << "wrote " << (dir / "trajectory.json").string() << "\n";
  }
  if (rec.error) err << "error: " << *rec.error << "\n";
  if (rec.outcome == Outcome::kGenerationError) return kUserError;
  if (rec.outcome == Outcome::kFault) return kInternalFault;
  return kOk;
}

// ---------------------------------------------------------------------------
// bench and compare

int run_bench(const CommonOptions& o, std::ostream& out, std::ostream& err) {
  const BenchmarkConfig cfg = BenchmarkConfig::from_map(load_config(o));
  std::function<void(const TrialRecord&)> progress;
  if (o.verbose) {
    progress = [&err](const TrialRecord& r) {
      err << "trial " << r.trial_index << " " << to_string(r.outcome) << " steps " << r.steps_taken << "\n";
    };
  }
  const BenchmarkResult result = run_benchmark(cfg, progress);
  write_benchmark(cfg, result, o.out_dir);
  out << result.summary.to_text() << "config_hash: " << cfg.config_hash << "\n"
      << "wrote " << o.out_dir << "\n";
  return kOk;
}

int run_compare(const CommonOptions& o, const std::string& path_a, const std::string& path_b,
                std::ostream& out) {
  CommonOptions oa = o, ob = o;
  oa.config_path = path_a;
  ob.config_path = path_b;
  const BenchmarkConfig a = BenchmarkConfig::from_map(load_config(oa));
  const BenchmarkConfig b = BenchmarkConfig::from_map(load_config(ob));
  const ComparisonReport rep = compare_controllers(a, b);
  out << rep.to_text();
  if (!o.out_dir.empty()) {
    write_text(fs::path(o.out_dir) / "comparison.json", rep.to_json() + "\n");
    write_text(fs::path(o.out_dir) / "comparison.txt", rep.to_text());
    out << "wrote " << o.out_dir << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// demo-bimodal

ordered_json demo_run(const CommonOptions& o, const std::string& controller) {
  const BenchmarkConfig cfg = BenchmarkConfig::from_map(
      load_config(o, {"environment.id=bimodal", "controller.id=" + controller, "harness.num_trials=1"}));
  // The toy is deterministic, so one environment serves every candidate rollout.
  Rng unused(0);
  const std::unique_ptr<Environment> env = make_environment(cfg, unused);
  const int m = env->control_dim();

  ordered_json cycles = ordered_json::array();
  TrialObserver obs;
  obs.on_cycle = [&](int step, const StateVector& x, const CycleResult& r, const Controller&) {
    ordered_json c;
    c["step"] = step;
    c["state"] = std::vector<double>(x.data(), x.data() + x.size());
    c["action"] = std::vector<double>(r.action.data(), r.action.data() + r.action.size());
    ordered_json cands = ordered_json::array();
    for (Eigen::Index i = 0; i < r.planned.rows(); ++i) {
      const RolloutResult ro = rollout(*env, x, unflatten(r.planned.row(i), m));
      ordered_json path = ordered_json::array();
      for (Eigen::Index t = 0; t < ro.states.rows(); ++t) {
        path.push_back({ro.states(t, 0), ro.states(t, 1)});
      }
      cands.push_back(path);
    }
    c["candidates"] = cands;
    cycles.push_back(c);
  };
  const TrialRun run = run_trial_full(cfg, 0, &obs);

  ordered_json j = ordered_json::parse(trajectory_json(0, run.trace, run.field));
  j["controller"] = controller;
  j["seed"] = run.record.seed;
  j["config_hash"] = cfg.config_hash;
  j["outcome"] = to_string(run.record.outcome);
  j["steps_taken"] = run.record.steps_taken;
  j["cycles"] = cycles;
  return j;
}

int run_demo(const CommonOptions& o, std::ostream& out) {
  for (const std::string controller : {"otmpc", "mppi"}) {
    const ordered_json j = demo_run(o, controller);
    const fs::path path = fs::path(o.out_dir) / (controller + ".json");
    write_text(path, j.dump() + "\n");
    out << controller << ": " << j["outcome"].get<std::string>() << " after " << j["steps_taken"].get<int>()
        << " steps -> " << path.string() << "\n";
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal-transport MPC toolkit: transport solves, episodes, benchmarks."};
  app.name("otmpc");
  app.require_subcommand(1);
  app.footer(config_reference());

  TransportOptions topt;
  CLI::App* transport = app.add_subcommand("transport", "solve one entropic transport problem");
  transport->add_option("cost", topt.cost_path, "JSON file with 'cost' rows and optional q, p, epsilon")
      ->required();
  transport->add_option("--marginals", topt.marginals_path, "JSON file with 'q' and 'p' (default uniform)");
  topt.epsilon_opt = transport->add_option("--epsilon", topt.epsilon, "entropic regularization")
                         ->check(CLI::PositiveNumber);
  topt.tolerance_opt = transport->add_option("--tol", topt.tolerance, "L1 row-marginal tolerance")
                           ->check(CLI::PositiveNumber)
                           ->capture_default_str();
  topt.iterations_opt = transport->add_option("--max-iterations", topt.max_iterations, "iteration cap")
                            ->check(CLI::PositiveNumber)
                            ->capture_default_str();
  transport->add_option("--out", topt.out_path, "coupling output file (dense JSON)")->capture_default_str();

  CommonOptions eopt;
  int trial = 0;
  CLI::App* episode = app.add_subcommand("episode", "run one seeded episode");
  add_common(episode, eopt, true, "");
  episode->add_option("--trial", trial, "trial index (seed derives from base seed and index)")
      ->check(CLI::NonNegativeNumber);
  episode->footer(config_reference());

  CommonOptions bopt;
  CLI::App* bench = app.add_subcommand("bench", "run a seeded Monte Carlo benchmark");
  add_common(bench, bopt, true, "bench_out");
  bench->footer(config_reference());

  CommonOptions copt;
  std::string path_a, path_b;
  CLI::App* compare = app.add_subcommand("compare", "paired-seed comparison of two configs");
  compare->add_option("config_a", path_a, "first config")->required()->check(CLI::ExistingFile);
  compare->add_option("config_b", path_b, "second config")->required()->check(CLI::ExistingFile);
  add_common(compare, copt, false, "");
  compare->footer(config_reference());

  CommonOptions dopt;
  CLI::App* demo = app.add_subcommand("demo-bimodal", "OT-MPC and MPPI on the bimodal toy, with per-cycle candidates");
  add_common(demo, dopt, false, "demo_bimodal");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUserError;
  }

  try {
    if (*transport) return run_transport(topt, out, err);
    if (*episode) return run_episode(eopt, trial, out, err);
    if (*bench) return run_bench(bopt, out, err);
    if (*compare) return run_compare(copt, path_a, path_b, out);
    if (*demo) return run_demo(dopt, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const SolverFailure& e) {
    err << "solver failure: " << e.what() << "\n";
    return kNotConverged;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const std::exception& e) {
    err << "internal fault: " << e.what() << "\n";
    return kInternalFault;
  }
  return kInternalFault;
}

}  // namespace otmpc::cli
