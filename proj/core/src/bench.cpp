#include "otmpc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "otmpc/errors.hpp"
#include "otmpc/parallel.hpp"

namespace otmpc {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Schema

namespace {

const std::vector<std::string> kOtMpc{"otmpc"};
const std::vector<std::string> kOtMpcMppi{"otmpc", "mppi"};
const std::vector<std::string> kCem{"cem"};

ConfigKey base_key(std::string key, ValueType type, std::string unit, std::string doc) {
  ConfigKey k;
  k.key = std::move(key);
  k.type = type;
  k.unit = std::move(unit);
  k.doc = std::move(doc);
  return k;
}

ConfigKey real_key(std::string key, std::string unit, std::string doc, std::optional<double> min = {},
                   std::optional<double> max = {}, bool min_exclusive = false,
                   std::vector<std::string> controllers = {}) {
  ConfigKey k = base_key(std::move(key), ValueType::kReal, std::move(unit), std::move(doc));
  k.min = min;
  k.max = max;
  k.min_exclusive = min_exclusive;
  k.controllers = std::move(controllers);
  return k;
}

ConfigKey int_key(std::string key, std::string unit, std::string doc, std::optional<double> min,
                  std::vector<std::string> controllers = {}) {
  ConfigKey k = base_key(std::move(key), ValueType::kInt, std::move(unit), std::move(doc));
  k.min = min;
  k.controllers = std::move(controllers);
  return k;
}

ConfigKey string_key(std::string key, std::string doc, std::vector<std::string> choices,
                     std::vector<std::string> controllers = {}) {
  ConfigKey k = base_key(std::move(key), ValueType::kString, "", std::move(doc));
  k.choices = std::move(choices);
  k.controllers = std::move(controllers);
  return k;
}

ConfigKey vector_key(std::string key, std::string unit, std::string doc,
                     std::vector<std::string> controllers) {
  ConfigKey k = base_key(std::move(key), ValueType::kVector, std::move(unit), std::move(doc));
  k.min = 0.0;
  k.min_exclusive = true;
  k.controllers = std::move(controllers);
  return k;
}

std::vector<ConfigKey> build_schema() {
  std::vector<ConfigKey> s;
  s.push_back(string_key("environment.id", "task environment",
                         {"bicycle", "bimodal", "double_integrator"}));
  s.push_back(string_key("environment.difficulty", "obstacle field preset (randomized environments)",
                         {"easy", "hard"}));
  s.push_back(int_key("environment.obstacle_count", "",
                      "fixed obstacle count; -1 draws it per trial", -1));
  s.push_back(real_key("environment.inflation", "m", "added to obstacle radii for collision", 0.0));
  s.push_back(real_key("environment.dt", "s", "integration step", 0.0, {}, true));
  s.push_back(real_key("environment.wheelbase", "m", "bicycle wheelbase", 0.0, {}, true));
  s.push_back(real_key("environment.accel_limit", "m/s^2", "acceleration bound", 0.0, {}, true));
  s.push_back(real_key("environment.steer_limit", "rad", "steering bound (bicycle)", 0.0, 1.4, true));
  s.push_back(real_key("environment.v_max", "m/s", "speed bound (bicycle)", 0.0, {}, true));
  s.push_back(real_key("environment.start_speed", "m/s", "initial forward speed", 0.0));
  s.push_back(real_key("environment.success_radius", "m",
                       "goal distance that counts as success (strict)", 0.0, {}, true));

  s.push_back(real_key("cost.w_goal", "1/m^2", "weight on squared goal distance", 0.0));
  s.push_back(real_key("cost.w_obstacle", "", "crash indicator weight", 0.0));
  s.push_back(real_key("cost.w_control", "", "weight on squared control", 0.0));

  s.push_back(string_key("controller.id", "controller", {"otmpc", "mppi", "cem"}));
  s.push_back(int_key("controller.horizon", "steps", "planning horizon t_f", 1));
  s.push_back(int_key("controller.iterations", "", "sampling iterations per cycle", 1));
  s.push_back(int_key("controller.num_samples", "",
                      "proposals (otmpc) or samples (mppi, cem) per iteration", 1));
  s.push_back(real_key("controller.beta", "1/cost", "inverse temperature", 0.0, {}, true, kOtMpcMppi));
  s.push_back(int_key("controller.num_particles", "", "ensemble size N", 1, kOtMpc));
  s.push_back(string_key("controller.epsilon_rule",
                         "entropic epsilon: multiple of median(C), of max(C), or absolute",
                         {"median", "max", "absolute"}, kOtMpc));
  s.push_back(real_key("controller.epsilon", "",
                       "epsilon multiplier, or cost units for the absolute rule", 0.0, {}, true,
                       kOtMpc));
  s.push_back(real_key("controller.eta", "", "particle step toward the barycenter", 0.0, 1.0, true,
                       kOtMpc));
  s.push_back(real_key("controller.sinkhorn_tolerance", "", "L1 marginal tolerance", 0.0, {}, true,
                       kOtMpc));
  s.push_back(int_key("controller.sinkhorn_max_iterations", "", "Sinkhorn iteration cap", 1, kOtMpc));
  s.push_back(string_key("controller.init", "initial ensemble", {"zeros", "random_smooth"}, kOtMpc));
  s.push_back(real_key("controller.rho", "", "probability of a global proposal", 0.0, 1.0, false,
                       kOtMpcMppi));
  s.push_back(vector_key("controller.local_sigma", "control units",
                         "local proposal std per control dim (default 0.3 x limits)", kOtMpcMppi));
  s.push_back(real_key("controller.temporal_correlation", "", "AR(1) coefficient of the noise", 0.0,
                       0.999999));
  s.push_back(string_key("controller.global_kind", "global proposal component",
                         {"uniform", "broad_gaussian"}, kOtMpcMppi));
  s.push_back(vector_key("controller.global_scale", "control units",
                         "broad-gaussian std per control dim (default = limits)", kOtMpcMppi));
  s.push_back(real_key("controller.elite_fraction", "", "share of samples kept as elites", 0.0, 1.0,
                       true, kCem));
  s.push_back(real_key("controller.alpha", "", "weight on the new elite statistics", 0.0, 1.0, false,
                       kCem));
  s.push_back(real_key("controller.std_floor", "control units", "minimum sampling std", 0.0, {},
                       false, kCem));
  s.push_back(vector_key("controller.initial_std", "control units",
                         "sampling std per control dim (default = limits)", kCem));

  s.push_back(int_key("harness.num_trials", "", "Monte Carlo trials", 1));
  s.push_back(int_key("harness.base_seed", "", "root seed; trial seeds derive from it", 0));
  s.push_back(int_key("harness.step_cap", "steps", "episode length limit", 1));
  ConfigKey workers = int_key("harness.workers", "", "parallel trial workers", 1);
  workers.hashed = false;
  s.push_back(workers);
  ConfigKey dump = base_key("harness.dump_trajectories", ValueType::kBool, "",
                 "write trajectories/trial_NNNN.json");
  dump.hashed = false;
  s.push_back(dump);
  return s;
}

const ConfigKey* find_key(const std::string& key) {
  for (const auto& k : config_schema()) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

std::string valid_keys_list() {
  std::string out;
  for (const auto& k : config_schema()) out += "\n  " + k.key;
  return out;
}

std::string type_name(ValueType t) {
  switch (t) {
    case ValueType::kBool: return "bool";
    case ValueType::kInt: return "int";
    case ValueType::kReal: return "real";
    case ValueType::kString: return "string";
    case ValueType::kVector: return "vector";
  }
  return "?";
}

bool applies(const ConfigKey& k, const std::string& controller_id) {
  return k.controllers.empty() ||
         std::find(k.controllers.begin(), k.controllers.end(), controller_id) != k.controllers.end();
}

// Per-controller values for the car task.
struct ControllerDefaults {
  double w_goal, w_control, w_obstacle;
  std::int64_t horizon, iterations, samples;
  double beta;
};

ControllerDefaults car_defaults(const std::string& controller_id) {
  if (controller_id == "mppi") return {4.854, 0.046, 281.1, 30, 8, 500, 1.019};
  if (controller_id == "cem") return {1.623, 0.020, 397.3, 70, 5, 800, 0.0};
  return {0.704, 0.08, 479.0, 70, 8, 200, 0.460};
}

struct BimodalControl {
  std::int64_t horizon, iterations, particles, proposals;
  double beta, rho;
  std::int64_t step_cap;
};

constexpr BimodalControl kBimodalControl{30, 2, 8, 200, 0.015, 0.1, 50};

std::string format_value(const ConfigValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          if (x.empty()) return "(derived)";
          std::string s = "[";
          for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + json(x[i]).dump();
          return s + "]";
        } else {
          return json(x).dump();
        }
      },
      v);
}

json value_json(const ConfigValue& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

// Checks type and range; returns a message or "".
std::string check_value(const ConfigKey& k, const ConfigValue& v) {
  const auto bad_range = [&](double x) {
    if (!std::isfinite(x)) return true;
    if (k.min && (k.min_exclusive ? !(x > *k.min) : !(x >= *k.min))) return true;
    if (k.max && !(x <= *k.max)) return true;
    return false;
  };
  const auto range_text = [&] {
    std::string r;
    if (k.min) r += (k.min_exclusive ? "> " : ">= ") + json(*k.min).dump();
    if (k.max) r += std::string(r.empty() ? "" : " and ") + "<= " + json(*k.max).dump();
    return r;
  };
  switch (k.type) {
    case ValueType::kBool:
      if (!std::holds_alternative<bool>(v)) return k.key + ": expected bool";
      return "";
    case ValueType::kInt:
      if (!std::holds_alternative<std::int64_t>(v)) return k.key + ": expected integer";
      if (bad_range(static_cast<double>(std::get<std::int64_t>(v)))) {
        return k.key + ": must be " + range_text();
      }
      return "";
    case ValueType::kReal: {
      double x;
      if (std::holds_alternative<double>(v)) {
        x = std::get<double>(v);
      } else if (std::holds_alternative<std::int64_t>(v)) {
        x = static_cast<double>(std::get<std::int64_t>(v));
      } else {
        return k.key + ": expected number";
      }
      if (bad_range(x)) return k.key + ": must be " + range_text();
      return "";
    }
    case ValueType::kString: {
      if (!std::holds_alternative<std::string>(v)) return k.key + ": expected string";
      const auto& s = std::get<std::string>(v);
      if (!k.choices.empty() && std::find(k.choices.begin(), k.choices.end(), s) == k.choices.end()) {
        std::string c;
        for (const auto& x : k.choices) c += (c.empty() ? "" : ", ") + x;
        return k.key + ": '" + s + "' is not one of " + c;
      }
      return "";
    }
    case ValueType::kVector: {
      if (!std::holds_alternative<std::vector<double>>(v)) return k.key + ": expected array of numbers";
      for (double x : std::get<std::vector<double>>(v)) {
        if (bad_range(x)) return k.key + ": entries must be " + range_text();
      }
      return "";
    }
  }
  return "";
}

// Normalizes int-typed input given for real keys.
ConfigValue coerce(const ConfigKey& k, ConfigValue v) {
  if (k.type == ValueType::kReal && std::holds_alternative<std::int64_t>(v)) {
    return static_cast<double>(std::get<std::int64_t>(v));
  }
  return v;
}

std::optional<ConfigValue> from_json_value(const json& j) {
  if (j.is_boolean()) return ConfigValue(j.get<bool>());
  if (j.is_number_integer()) return ConfigValue(j.get<std::int64_t>());
  if (j.is_number()) return ConfigValue(j.get<double>());
  if (j.is_string()) return ConfigValue(j.get<std::string>());
  if (j.is_array()) {
    std::vector<double> out;
    for (const auto& e : j) {
      if (!e.is_number()) return std::nullopt;
      out.push_back(e.get<double>());
    }
    return ConfigValue(std::move(out));
  }
  return std::nullopt;
}

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out[key] = *it;
    }
  }
}

void throw_violations(const std::vector<std::string>& errors, bool list_keys = false) {
  if (errors.empty()) return;
  std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                    (errors.size() == 1 ? "" : "s") + "):";
  for (const auto& e : errors) msg += "\n  " + e;
  if (list_keys) msg += "\nvalid keys:" + valid_keys_list();
  throw ConfigError(msg);
}

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = build_schema();
  return schema;
}

ConfigValue default_value(const std::string& key, const std::string& env_id,
                          const std::string& controller_id) {
  const ControllerDefaults car = car_defaults(controller_id);
  const bool toy = env_id == "bimodal";
  static const std::map<std::string, ConfigValue> fixed{
      {"environment.id", std::string("bicycle")},
      {"environment.difficulty", std::string("easy")},
      {"environment.obstacle_count", std::int64_t{-1}},
      {"environment.inflation", 0.0},
      {"environment.dt", 0.1},
      {"environment.wheelbase", 1.0},
      {"environment.accel_limit", 2.0},
      {"environment.steer_limit", 0.6},
      {"environment.v_max", 3.0},
      {"environment.success_radius", 0.3},
      {"controller.id", std::string("otmpc")},
      {"controller.num_particles", std::int64_t{20}},
      {"controller.epsilon_rule", std::string("median")},
      {"controller.epsilon", 0.05},
      {"controller.eta", 0.5},
      {"controller.sinkhorn_tolerance", 1e-6},
      {"controller.sinkhorn_max_iterations", std::int64_t{500}},
      {"controller.init", std::string("random_smooth")},
      {"controller.temporal_correlation", 0.8},
      {"controller.global_kind", std::string("uniform")},
      {"controller.local_sigma", std::vector<double>{}},
      {"controller.global_scale", std::vector<double>{}},
      {"controller.initial_std", std::vector<double>{}},
      {"controller.elite_fraction", 0.1},
      {"controller.alpha", 1.0},
      {"controller.std_floor", 1e-3},
      {"harness.num_trials", std::int64_t{100}},
      {"harness.base_seed", std::int64_t{0}},
      {"harness.step_cap", std::int64_t{200}},
      {"harness.workers", std::int64_t{1}},
      {"harness.dump_trajectories", false},
  };
  if (toy) {
    // Matched budget: N x M proposals for OT-MPC equal the sampling baselines' samples.
    if (key == "controller.horizon") return kBimodalControl.horizon;
    if (key == "controller.iterations") return kBimodalControl.iterations;
    if (key == "controller.num_particles") return kBimodalControl.particles;
    if (key == "controller.num_samples") {
      return controller_id == "otmpc" ? kBimodalControl.proposals
                                      : kBimodalControl.particles * kBimodalControl.proposals;
    }
    if (key == "controller.beta") return kBimodalControl.beta;
    if (key == "controller.rho") return kBimodalControl.rho;
    if (key == "harness.step_cap") return kBimodalControl.step_cap;
    if (key == "environment.success_radius") return kBimodalSuccessRadius;
  }
  if (auto it = fixed.find(key); it != fixed.end()) return it->second;
  if (key == "environment.start_speed") return toy ? kBimodalStartSpeed : 0.0;
  if (key == "cost.w_goal") return toy ? kBimodalWeights.w_goal : car.w_goal;
  if (key == "cost.w_control") return toy ? kBimodalWeights.w_control : car.w_control;
  if (key == "cost.w_obstacle") return toy ? kBimodalWeights.w_obstacle : car.w_obstacle;
  if (key == "controller.horizon") return car.horizon;
  if (key == "controller.iterations") return car.iterations;
  if (key == "controller.num_samples") return car.samples;
  if (key == "controller.beta") return car.beta;
  if (key == "controller.rho") return controller_id == "mppi" ? 0.0 : 0.1;
  throw ConfigError("no default for unknown key '" + key + "'");
}

// ---------------------------------------------------------------------------
// ConfigMap

ConfigMap ConfigMap::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON at " + line_col(text, e.byte > 0 ? e.byte - 1 : 0) +
                      ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::map<std::string, json> flat;
  flatten(j, "", flat);

  ConfigMap m;
  std::vector<std::string> errors;
  for (const auto& [key, value] : flat) {
    const ConfigKey* k = find_key(key);
    if (!k) {
      errors.push_back("unknown key '" + key + "'");
      continue;
    }
    auto v = from_json_value(value);
    if (!v) {
      errors.push_back(key + ": unsupported value " + value.dump());
      continue;
    }
    ConfigValue cv = coerce(*k, std::move(*v));
    if (auto msg = check_value(*k, cv); !msg.empty()) {
      errors.push_back(msg);
      continue;
    }
    m.values_[key] = std::move(cv);
  }
  throw_violations(errors, std::any_of(errors.begin(), errors.end(), [](const std::string& e) {
                      return e.rfind("unknown key", 0) == 0;
                    }));
  return m;
}

ConfigMap ConfigMap::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void ConfigMap::set(const std::string& key, ConfigValue value) {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown key '" + key + "'; valid keys:" + valid_keys_list());
  value = coerce(*k, std::move(value));
  if (auto msg = check_value(*k, value); !msg.empty()) throw ConfigError(msg);
  values_[key] = std::move(value);
}

void ConfigMap::apply_overrides(const std::vector<std::string>& assignments) {
  std::vector<std::string> errors;
  bool unknown = false;
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) {
      errors.push_back("override '" + a + "' is not key=value");
      continue;
    }
    const std::string key = a.substr(0, eq);
    const std::string text = a.substr(eq + 1);
    const ConfigKey* k = find_key(key);
    if (!k) {
      errors.push_back("unknown key '" + key + "'");
      unknown = true;
      continue;
    }
    std::optional<ConfigValue> v;
    switch (k->type) {
      case ValueType::kBool:
        if (text == "true" || text == "1") v = true;
        if (text == "false" || text == "0") v = false;
        break;
      case ValueType::kInt: {
        std::size_t used = 0;
        try {
          const long long x = std::stoll(text, &used);
          if (used == text.size()) v = static_cast<std::int64_t>(x);
        } catch (const std::exception&) {
        }
        break;
      }
      case ValueType::kReal: {
        std::size_t used = 0;
        try {
          const double x = std::stod(text, &used);
          if (used == text.size()) v = x;
        } catch (const std::exception&) {
        }
        break;
      }
      case ValueType::kString:
        v = text;
        break;
      case ValueType::kVector: {
        std::string body = text;
        if (!body.empty() && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
        std::vector<double> xs;
        std::stringstream ss(body);
        std::string part;
        bool ok = true;
        while (std::getline(ss, part, ',')) {
          std::size_t used = 0;
          try {
            xs.push_back(std::stod(part, &used));
            while (used < part.size() && std::isspace(static_cast<unsigned char>(part[used]))) ++used;
            ok = ok && used == part.size();
          } catch (const std::exception&) {
            ok = false;
          }
        }
        if (ok && !xs.empty()) v = std::move(xs);
        break;
      }
    }
    if (!v) {
      errors.push_back(key + ": cannot parse '" + text + "' as " + type_name(k->type));
      continue;
    }
    if (auto msg = check_value(*k, *v); !msg.empty()) {
      errors.push_back(msg);
      continue;
    }
    values_[key] = std::move(*v);
  }
  throw_violations(errors, unknown);
}

ConfigMap ConfigMap::resolved() const {
  const std::string env_id =
      has("environment.id") ? std::get<std::string>(at("environment.id")) : "bicycle";
  const std::string ctrl_id =
      has("controller.id") ? std::get<std::string>(at("controller.id")) : "otmpc";
  ConfigMap out;
  std::vector<std::string> errors;
  for (const auto& k : config_schema()) {
    const bool set = has(k.key);
    if (!applies(k, ctrl_id)) {
      if (set) errors.push_back(k.key + ": does not apply to controller.id=" + ctrl_id);
      continue;
    }
    out.values_[k.key] = set ? at(k.key) : default_value(k.key, env_id, ctrl_id);
  }
  throw_violations(errors);

  // Vector defaults derive from the control limits.
  const bool bicycle_like = env_id != "double_integrator";
  const double a = std::get<double>(out.at("environment.accel_limit"));
  const double second = bicycle_like ? std::get<double>(out.at("environment.steer_limit")) : a;
  const std::vector<double> limits{a, second};
  const auto fill = [&](const std::string& key, double scale) {
    auto it = out.values_.find(key);
    if (it == out.values_.end()) return;
    auto& v = std::get<std::vector<double>>(it->second);
    if (v.empty()) {
      v = {scale * limits[0], scale * limits[1]};
    } else if (v.size() != limits.size()) {
      errors.push_back(key + ": needs " + std::to_string(limits.size()) + " entries (one per control)");
    }
  };
  fill("controller.local_sigma", 0.3);
  fill("controller.global_scale", 1.0);
  fill("controller.initial_std", 1.0);

  if (ctrl_id == "cem") {
    const double m = static_cast<double>(std::get<std::int64_t>(out.at("controller.num_samples")));
    if (std::floor(m * std::get<double>(out.at("controller.elite_fraction")) + 1e-9) < 1.0) {
      errors.push_back("controller.elite_fraction: num_samples * elite_fraction must be >= 1");
    }
  }
  throw_violations(errors);
  return out;
}

const ConfigValue& ConfigMap::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config key '" + key + "' is not set");
  return it->second;
}

double ConfigMap::real(const std::string& key) const {
  const auto& v = at(key);
  if (std::holds_alternative<std::int64_t>(v)) return static_cast<double>(std::get<std::int64_t>(v));
  return std::get<double>(v);
}
std::int64_t ConfigMap::integer(const std::string& key) const { return std::get<std::int64_t>(at(key)); }
bool ConfigMap::boolean(const std::string& key) const { return std::get<bool>(at(key)); }
const std::string& ConfigMap::string(const std::string& key) const {
  return std::get<std::string>(at(key));
}
const std::vector<double>& ConfigMap::vector(const std::string& key) const {
  return std::get<std::vector<double>>(at(key));
}

std::string ConfigMap::canonical_json() const {
  json j = json::object();
  for (const auto& [key, value] : values_) {
    const ConfigKey* k = find_key(key);
    if (k && !k->hashed) continue;
    j[json::json_pointer("/" + std::string(key).replace(key.find('.'), 1, "/"))] = value_json(value);
  }
  return j.dump();
}

std::string ConfigMap::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_json())));
  return buf;
}

std::string config_reference() {
  std::ostringstream os;
  os << "Config keys (JSON file, nested or dotted; override with --set key=value).\n"
        "Defaults shown for environment.id=bicycle; controller-specific keys list\n"
        "their controllers and defaults per controller.\n";
  for (const auto& k : config_schema()) {
    os << "\n  " << k.key << " (" << type_name(k.type);
    if (!k.unit.empty()) os << ", " << k.unit;
    os << ")";
    if (!k.controllers.empty()) {
      os << " [";
      for (std::size_t i = 0; i < k.controllers.size(); ++i) os << (i ? "," : "") << k.controllers[i];
      os << "]";
    }
    os << "\n      " << k.doc;
    if (!k.choices.empty()) {
      os << "; one of";
      for (const auto& c : k.choices) os << " " << c;
    }
    os << "\n      default:";
    const std::vector<std::string> ids =
        k.controllers.empty() ? std::vector<std::string>{"otmpc", "mppi", "cem"} : k.controllers;
    std::vector<std::string> shown;
    for (const auto& id : ids) shown.push_back(format_value(default_value(k.key, "bicycle", id)));
    if (std::all_of(shown.begin(), shown.end(), [&](const auto& s) { return s == shown[0]; })) {
      os << " " << shown[0];
    } else {
      for (std::size_t i = 0; i < ids.size(); ++i) os << " " << ids[i] << "=" << shown[i];
    }
  }
  os << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Benchmark config and factories

BenchmarkConfig BenchmarkConfig::from_map(const ConfigMap& map) {
  BenchmarkConfig c;
  c.config = map.resolved();
  c.env_id = c.config.string("environment.id");
  c.controller_id = c.config.string("controller.id");
  c.num_trials = static_cast<int>(c.config.integer("harness.num_trials"));
  c.base_seed = static_cast<std::uint64_t>(c.config.integer("harness.base_seed"));
  c.step_cap = static_cast<int>(c.config.integer("harness.step_cap"));
  c.workers = static_cast<int>(c.config.integer("harness.workers"));
  c.dump_trajectories = c.config.boolean("harness.dump_trajectories");
  c.config_hash = c.config.hash();
  return c;
}

namespace {

TaskCostWeights weights_of(const ConfigMap& m) {
  return {m.real("cost.w_goal"), m.real("cost.w_obstacle"), m.real("cost.w_control")};
}

Eigen::VectorXd eigen_of(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ProposalConfig proposal_of(const ConfigMap& m) {
  ProposalConfig p;
  p.rho = m.real("controller.rho");
  p.local_sigma = eigen_of(m.vector("controller.local_sigma"));
  p.temporal_correlation = m.real("controller.temporal_correlation");
  p.global_kind = global_kind_from_string(m.string("controller.global_kind"));
  p.global_scale = eigen_of(m.vector("controller.global_scale"));
  return p;
}

}  // namespace

std::unique_ptr<Environment> make_environment(const BenchmarkConfig& cfg, Rng& rng) {
  const ConfigMap& m = cfg.config;
  BicycleParams bp;
  bp.dt = m.real("environment.dt");
  bp.wheelbase = m.real("environment.wheelbase");
  bp.accel_limit = m.real("environment.accel_limit");
  bp.steer_limit = m.real("environment.steer_limit");
  bp.v_max = m.real("environment.v_max");
  bp.inflation = m.real("environment.inflation");
  bp.success_radius = m.real("environment.success_radius");
  const double v0 = m.real("environment.start_speed");

  if (cfg.env_id == "bimodal") return bimodal_toy(weights_of(m), bp, v0);

  FieldSpec spec = FieldSpec::for_difficulty(difficulty_from_string(m.string("environment.difficulty")));
  if (const auto n = m.integer("environment.obstacle_count"); n >= 0) spec.obstacle_count = static_cast<int>(n);
  ObstacleField field = generate_obstacle_field(spec, rng);
  field.start_speed = v0;
  if (cfg.env_id == "double_integrator") {
    DoubleIntegratorParams dp;
    dp.dt = bp.dt;
    dp.accel_limit = bp.accel_limit;
    dp.success_radius = bp.success_radius;
    return std::make_unique<DoubleIntegratorEnv>(std::move(field), weights_of(m), dp);
  }
  return std::make_unique<BicycleEnv>(std::move(field), weights_of(m), bp);
}

std::unique_ptr<Controller> make_controller(const BenchmarkConfig& cfg, const Environment& env, Rng& rng) {
  const ConfigMap& m = cfg.config;
  const int horizon = static_cast<int>(m.integer("controller.horizon"));
  const int iterations = static_cast<int>(m.integer("controller.iterations"));
  const int samples = static_cast<int>(m.integer("controller.num_samples"));
  if (cfg.controller_id == "mppi") {
    MppiConfig c;
    c.horizon = horizon;
    c.iterations = iterations;
    c.num_samples = samples;
    c.beta = m.real("controller.beta");
    c.proposal = proposal_of(m);
    return std::make_unique<MppiController>(c, env);
  }
  if (cfg.controller_id == "cem") {
    CemConfig c;
    c.horizon = horizon;
    c.iterations = iterations;
    c.num_samples = samples;
    c.cem.elite_fraction = m.real("controller.elite_fraction");
    c.cem.alpha = m.real("controller.alpha");
    c.cem.std_floor = m.real("controller.std_floor");
    c.initial_std = eigen_of(m.vector("controller.initial_std"));
    c.temporal_correlation = m.real("controller.temporal_correlation");
    return std::make_unique<CemController>(c, env);
  }
  OtMpcConfig c;
  c.horizon = horizon;
  c.inner_iterations = iterations;
  c.num_proposals = samples;
  c.num_particles = static_cast<int>(m.integer("controller.num_particles"));
  c.beta = m.real("controller.beta");
  const std::string rule = m.string("controller.epsilon_rule");
  c.scd.epsilon_rule = rule == "median" ? EpsilonRule::kMedianMultiple
                       : rule == "max"  ? EpsilonRule::kMaxMultiple
                                        : EpsilonRule::kAbsolute;
  c.scd.epsilon_multiplier = m.real("controller.epsilon");
  c.scd.epsilon = m.real("controller.epsilon");
  c.scd.eta = m.real("controller.eta");
  c.scd.sinkhorn.tolerance = m.real("controller.sinkhorn_tolerance");
  c.scd.sinkhorn.max_iterations = static_cast<int>(m.integer("controller.sinkhorn_max_iterations"));
  c.init = m.string("controller.init") == "zeros" ? InitKind::kZeros : InitKind::kRandomSmooth;
  c.proposal = proposal_of(m);
  return std::make_unique<OtMpcController>(c, env, rng);
}

// ---------------------------------------------------------------------------
// Records

std::string TrialRecord::to_json() const {
  ordered_json j;
  j["trial_index"] = trial_index;
  j["seed"] = seed;
  j["outcome"] = otmpc::to_string(outcome);
  j["steps_taken"] = steps_taken;
  j["final_goal_distance"] = final_goal_distance ? json(*final_goal_distance) : json(nullptr);
  j["config_hash"] = config_hash;
  if (error) j["error"] = *error;
  return j.dump();
}

TrialRecord TrialRecord::from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("record is not valid JSON: ") + e.what());
  }
  TrialRecord r;
  try {
    r.trial_index = j.at("trial_index").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    r.steps_taken = j.at("steps_taken").get<int>();
    if (!j.at("final_goal_distance").is_null()) r.final_goal_distance = j["final_goal_distance"].get<double>();
    r.config_hash = j.at("config_hash").get<std::string>();
    if (j.contains("error")) r.error = j["error"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("record field error: ") + e.what());
  }
  return r;
}

TrialRun run_trial_full(const BenchmarkConfig& cfg, int trial_index, const TrialObserver* observer) {
  const auto t0 = std::chrono::steady_clock::now();
  TrialRun run;
  TrialRecord& rec = run.record;
  rec.trial_index = trial_index;
  rec.seed = derive_seed(cfg.base_seed, static_cast<std::uint64_t>(trial_index));
  rec.config_hash = cfg.config_hash;
  Rng rng(rec.seed);

  try {
    const std::unique_ptr<Environment> env = make_environment(cfg, rng);
    if (const auto* b = dynamic_cast<const BicycleEnv*>(env.get())) run.field = b->field();
    if (const auto* d = dynamic_cast<const DoubleIntegratorEnv*>(env.get())) run.field = d->field();
    const std::unique_ptr<Controller> ctl = make_controller(cfg, *env, rng);

    StateVector x = env->initial_state();
    run.trace.states.push_back(x);
    int steps = 0;
    while (!env->in_collision(x) && !(env->goal_distance(x) < env->success_radius()) &&
           steps < cfg.step_cap) {
      const CycleResult r = ctl->cycle(*env, x, rng);
      if (observer && observer->on_cycle) observer->on_cycle(steps, x, r, *ctl);
      x = env->step(x, r.action);
      run.trace.states.push_back(x);
      run.trace.controls.push_back(r.action);
      ++steps;
    }
    rec.steps_taken = steps;
    rec.outcome = success_check(run.trace, *env, cfg.step_cap);
    rec.final_goal_distance = env->goal_distance(x);
  } catch (const GenerationError& e) {
    rec.outcome = Outcome::kGenerationError;
    rec.error = e.what();
  } catch (const Error& e) {
    rec.outcome = Outcome::kFault;
    rec.error = e.what();
  }
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

TrialRecord run_trial(const BenchmarkConfig& cfg, int trial_index) {
  return run_trial_full(cfg, trial_index).record;
}

// ---------------------------------------------------------------------------
// Aggregation

SummaryRow aggregate(const std::vector<TrialRecord>& records, const std::string& task,
                     const std::string& controller) {
  SummaryRow row;
  row.task = task;
  row.controller = controller;
  row.trials = static_cast<int>(records.size());
  std::vector<double> steps, dists;
  for (const auto& r : records) {
    switch (r.outcome) {
      case Outcome::kSuccess:
        ++row.successes;
        steps.push_back(r.steps_taken);
        break;
      case Outcome::kCrash: ++row.crashes; break;
      case Outcome::kTimeout: ++row.timeouts; break;
      case Outcome::kGenerationError:
      case Outcome::kFault: ++row.generation_errors; break;
    }
    if (r.final_goal_distance) dists.push_back(*r.final_goal_distance);
  }
  row.success_percent = row.trials ? 100.0 * row.successes / row.trials : 0.0;
  if (!steps.empty()) {
    const double mean = std::accumulate(steps.begin(), steps.end(), 0.0) / static_cast<double>(steps.size());
    row.avg_steps_mean = mean;
    if (steps.size() >= 2) {
      double ss = 0.0;
      for (double s : steps) ss += (s - mean) * (s - mean);
      row.avg_steps_std = std::sqrt(ss / static_cast<double>(steps.size() - 1));
    }
  }
  if (!dists.empty()) {
    std::sort(dists.begin(), dists.end());
    const std::size_t n = dists.size();
    row.median_final_distance = n % 2 ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
  }
  return row;
}

std::string task_label(const BenchmarkConfig& cfg) {
  if (cfg.env_id == "bimodal") return "bimodal";
  return cfg.env_id + "/" + cfg.config.string("environment.difficulty");
}

std::string SummaryTable::to_text() const {
  const auto fixed = [](double x, int prec) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << x;
    return os.str();
  };
  std::vector<std::vector<std::string>> cells{
      {"Task", "Controller", "Trials", "Success (%)", "Avg. Steps", "Median Goal Dist. (m)"}};
  for (const auto& r : rows) {
    std::string steps = "-";
    if (r.avg_steps_mean) {
      steps = fixed(*r.avg_steps_mean, 1);
      if (r.avg_steps_std) steps += " +- " + fixed(*r.avg_steps_std, 1);
    }
    cells.push_back({r.task, r.controller, std::to_string(r.trials), fixed(r.success_percent, 2), steps,
                     r.median_final_distance ? fixed(*r.median_final_distance, 3) : "-"});
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      // Text columns left-aligned, numbers right-aligned.
      if (c < 2) {
        os << std::left << std::setw(static_cast<int>(width[c])) << cells[i][c];
      } else {
        os << std::right << std::setw(static_cast<int>(width[c])) << cells[i][c];
      }
      os << (c + 1 < cells[i].size() ? "  " : "\n");
    }
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << "\n";
    }
  }
  return os.str();
}

std::string SummaryTable::to_json(const std::string& config_hash) const {
  const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  ordered_json j;
  j["config_hash"] = config_hash;
  auto& arr = j["rows"] = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json o;
    o["task"] = r.task;
    o["controller"] = r.controller;
    o["trials"] = r.trials;
    o["successes"] = r.successes;
    o["crashes"] = r.crashes;
    o["timeouts"] = r.timeouts;
    o["generation_errors"] = r.generation_errors;
    o["success_percent"] = r.success_percent;
    o["avg_steps_mean"] = opt(r.avg_steps_mean);
    o["avg_steps_std"] = opt(r.avg_steps_std);
    o["median_final_goal_distance"] = opt(r.median_final_distance);
    arr.push_back(o);
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Running and persistence

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg,
                              const std::function<void(const TrialRecord&)>& progress) {
  const auto n = static_cast<std::size_t>(cfg.num_trials);
  BenchmarkResult out;
  out.records.resize(n);
  if (cfg.dump_trajectories) {
    out.traces.resize(n);
    out.fields.resize(n);
  }
  std::mutex mu;
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    TrialRun run = run_trial_full(cfg, static_cast<int>(i));
    if (progress) {
      std::lock_guard<std::mutex> lock(mu);
      progress(run.record);
    }
    if (cfg.dump_trajectories) {
      out.traces[i] = std::move(run.trace);
      out.fields[i] = std::move(run.field);
    }
    out.records[i] = std::move(run.record);
  });
  out.summary.rows.push_back(aggregate(out.records, task_label(cfg), cfg.controller_id));
  return out;
}

std::string trajectory_json(int trial_index, const EpisodeTrace& trace,
                            const std::optional<ObstacleField>& field) {
  ordered_json j;
  j["trial_index"] = trial_index;
  auto& states = j["states"] = ordered_json::array();
  for (const auto& s : trace.states) states.push_back(std::vector<double>(s.data(), s.data() + s.size()));
  auto& controls = j["controls"] = ordered_json::array();
  for (const auto& u : trace.controls) controls.push_back(std::vector<double>(u.data(), u.data() + u.size()));
  j["field"] = field ? ordered_json::parse(field->to_json()) : ordered_json(nullptr);
  return j.dump();
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
}

}  // namespace

void write_benchmark(const BenchmarkConfig& cfg, const BenchmarkResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + out_dir + "': " + ec.message());

  std::string records, timings;
  for (const auto& r : result.records) {
    records += r.to_json() + "\n";
    ordered_json t;
    t["trial_index"] = r.trial_index;
    t["wall_time"] = r.wall_time;
    timings += t.dump() + "\n";
  }
  write_file(dir / "records.jsonl", records);
  write_file(dir / "timings.jsonl", timings);

  ordered_json summary = ordered_json::parse(result.summary.to_json(cfg.config_hash));
  summary["config"] = ordered_json::parse(cfg.config.canonical_json());
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  write_file(dir / "summary.txt", result.summary.to_text());

  json full = json::object();
  for (const auto& [key, value] : cfg.config.values()) full[key] = value_json(value);
  write_file(dir / "config.json", full.dump(2) + "\n");

  if (cfg.dump_trajectories) {
    fs::create_directories(dir / "trajectories", ec);
    for (std::size_t i = 0; i < result.traces.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "trial_%04zu.json", i);
      write_file(dir / "trajectories" / name,
                 trajectory_json(static_cast<int>(i), result.traces[i], result.fields[i]) + "\n");
    }
  }
}

std::vector<TrialRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open records file '" + path + "'");
  std::vector<TrialRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(TrialRecord::from_json(line));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison

double sign_test_p_value(int wins_a, int wins_b) {
  const int n = wins_a + wins_b;
  if (n == 0) return 1.0;
  const int k = std::min(wins_a, wins_b);
  // P(X <= k) for X ~ Binomial(n, 1/2), summed in log space.
  const double log_half_n = -n * std::log(2.0);
  double tail = 0.0;
  for (int i = 0; i <= k; ++i) {
    tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + log_half_n);
  }
  return std::min(1.0, 2.0 * tail);
}

ComparisonReport compare_records(const std::vector<TrialRecord>& a, const std::vector<TrialRecord>& b,
                                 const std::string& label_a, const std::string& label_b) {
  if (a.size() != b.size()) {
    throw ConfigError("paired comparison needs equal trial counts (" + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()) + ")");
  }
  ComparisonReport rep;
  rep.label_a = label_a;
  rep.label_b = label_b;
  int succ_a = 0, succ_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].trial_index != b[i].trial_index || a[i].seed != b[i].seed) {
      throw ConfigError("records at position " + std::to_string(i) + " are not paired (trial/seed differ)");
    }
    PairedOutcome p{a[i].trial_index, a[i].seed, a[i].outcome, b[i].outcome, 0};
    const bool sa = p.a == Outcome::kSuccess, sb = p.b == Outcome::kSuccess;
    succ_a += sa;
    succ_b += sb;
    p.winner = sa == sb ? 0 : (sa ? 1 : -1);
    if (p.winner > 0) ++rep.wins_a;
    else if (p.winner < 0) ++rep.wins_b;
    else ++rep.ties;
    rep.pairs.push_back(p);
  }
  const double n = a.empty() ? 1.0 : static_cast<double>(a.size());
  rep.success_a = 100.0 * succ_a / n;
  rep.success_b = 100.0 * succ_b / n;
  rep.difference = rep.success_a - rep.success_b;
  rep.p_value = sign_test_p_value(rep.wins_a, rep.wins_b);
  return rep;
}

ComparisonReport compare_controllers(const BenchmarkConfig& a, const BenchmarkConfig& b) {
  std::vector<std::string> errors;
  for (const auto& [key, value] : a.config.values()) {
    const bool shared = key.rfind("environment.", 0) == 0 || key == "harness.num_trials" ||
                        key == "harness.base_seed" || key == "harness.step_cap";
    if (shared && (!b.config.has(key) || b.config.at(key) != value)) {
      errors.push_back(key + " differs between the two configs");
    }
  }
  throw_violations(errors);
  std::string la = a.controller_id, lb = b.controller_id;
  if (la == lb) {
    la += " (a)";
    lb += " (b)";
  }
  return compare_records(run_benchmark(a).records, run_benchmark(b).records, la, lb);
}

std::string ComparisonReport::to_json() const {
  ordered_json j;
  j["label_a"] = label_a;
  j["label_b"] = label_b;
  j["trials"] = pairs.size();
  j["success_percent_a"] = success_a;
  j["success_percent_b"] = success_b;
  j["difference_percent"] = difference;
  j["wins_a"] = wins_a;
  j["wins_b"] = wins_b;
  j["ties"] = ties;
  j["sign_test_p_value"] = p_value;
  auto& arr = j["pairs"] = ordered_json::array();
  for (const auto& p : pairs) {
    arr.push_back({{"trial_index", p.trial_index},
                   {"seed", p.seed},
                   {"a", otmpc::to_string(p.a)},
                   {"b", otmpc::to_string(p.b)},
                   {"winner", p.winner}});
  }
  return j.dump(2);
}

std::string ComparisonReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "paired trials: " << pairs.size() << "\n"
     << label_a << " success: " << success_a << "%\n"
     << label_b << " success: " << success_b << "%\n"
     << "difference: " << difference << " points\n"
     << "wins " << label_a << ": " << wins_a << ", wins " << label_b << ": " << wins_b << ", ties: " << ties
     << "\n"
     << std::setprecision(6) << std::scientific << "sign test p-value: " << p_value << "\n";
  return os.str();
}

}  // namespace otmpc
