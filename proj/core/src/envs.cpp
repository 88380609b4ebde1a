#include "otmpc/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "otmpc/errors.hpp"

namespace otmpc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Obstacle fields

namespace {

json vec2_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

Eigen::Vector2d vec2_from(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError("field '" + field + "' must be an array of two numbers");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

double number_from(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key) || !obj[key].is_number()) {
    throw ConfigError("field '" + where + key + "' must be a number");
  }
  return obj[key].get<double>();
}

}  // namespace

std::string ObstacleField::to_json() const {
  nlohmann::ordered_json j;
  j["bounds"] = {{"x_min", bounds.x_min}, {"x_max", bounds.x_max},
                 {"y_min", bounds.y_min}, {"y_max", bounds.y_max}};
  j["start"] = vec2_json(start);
  j["goal"] = vec2_json(goal);
  j["start_heading"] = start_heading;
  j["start_speed"] = start_speed;
  auto& obs = j["obstacles"] = nlohmann::ordered_json::array();
  for (const auto& o : obstacles) {
    obs.push_back({{"center", vec2_json(o.center)}, {"radius", o.radius}});
  }
  return j.dump(2);
}

ObstacleField ObstacleField::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("obstacle field JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("obstacle field JSON must be an object");
  ObstacleField f;
  if (!j.contains("bounds") || !j["bounds"].is_object()) {
    throw ConfigError("field 'bounds' must be an object");
  }
  const json& b = j["bounds"];
  f.bounds = {number_from(b, "x_min", "bounds."), number_from(b, "x_max", "bounds."),
              number_from(b, "y_min", "bounds."), number_from(b, "y_max", "bounds.")};
  if (!j.contains("start")) throw ConfigError("missing field 'start'");
  if (!j.contains("goal")) throw ConfigError("missing field 'goal'");
  f.start = vec2_from(j["start"], "start");
  f.goal = vec2_from(j["goal"], "goal");
  f.start_heading = j.contains("start_heading") ? number_from(j, "start_heading", "") : 0.0;
  f.start_speed = j.contains("start_speed") ? number_from(j, "start_speed", "") : 0.0;
  if (j.contains("obstacles")) {
    if (!j["obstacles"].is_array()) throw ConfigError("field 'obstacles' must be an array");
    for (std::size_t i = 0; i < j["obstacles"].size(); ++i) {
      const json& o = j["obstacles"][i];
      const std::string where = "obstacles[" + std::to_string(i) + "].";
      if (!o.is_object() || !o.contains("center")) {
        throw ConfigError("field '" + where + "center' is missing");
      }
      Obstacle ob{vec2_from(o["center"], where + "center"), number_from(o, "radius", where)};
      if (!(ob.radius >= 0.0)) throw ConfigError("field '" + where + "radius' must be >= 0");
      f.obstacles.push_back(ob);
    }
  }
  return f;
}

std::string to_string(Difficulty d) { return d == Difficulty::kEasy ? "easy" : "hard"; }

Difficulty difficulty_from_string(const std::string& s) {
  if (s == "easy") return Difficulty::kEasy;
  if (s == "hard") return Difficulty::kHard;
  throw ConfigError("unknown difficulty '" + s + "' (expected easy or hard)");
}

FieldSpec FieldSpec::for_difficulty(Difficulty d) {
  FieldSpec s;
  if (d == Difficulty::kHard) {
    s.radius_max = 0.6;
    s.clearance = 0.5;
  }
  return s;
}

ObstacleField generate_obstacle_field(const FieldSpec& spec, Rng& rng) {
  const Workspace& w = spec.bounds;
  ObstacleField f;
  f.bounds = w;
  f.start = {rng.uniform(w.x_min + spec.start_band, w.x_min + 2.0 * spec.start_band),
             rng.uniform(w.y_min + 1.0, w.y_max - 1.0)};
  f.goal = {rng.uniform(w.x_max - 2.0 * spec.goal_band, w.x_max - spec.goal_band),
            rng.uniform(w.y_min + 1.0, w.y_max - 1.0)};
  const Eigen::Vector2d d = f.goal - f.start;
  f.start_heading =
      wrap_angle(std::atan2(d.y(), d.x()) + rng.uniform(-spec.heading_jitter, spec.heading_jitter));

  const int count = spec.obstacle_count
                        ? *spec.obstacle_count
                        : spec.min_obstacles +
                              static_cast<int>(rng.index(static_cast<std::size_t>(
                                  spec.max_obstacles - spec.min_obstacles + 1)));

  int rejected = 0;
  while (static_cast<int>(f.obstacles.size()) < count) {
    Obstacle o;
    o.radius = rng.uniform(spec.radius_min, spec.radius_max);
    o.center = {rng.uniform(w.x_min + o.radius, w.x_max - o.radius),
                rng.uniform(w.y_min + o.radius, w.y_max - o.radius)};
    bool ok = (o.center - f.start).norm() - o.radius >= spec.endpoint_clearance &&
              (o.center - f.goal).norm() - o.radius >= spec.endpoint_clearance;
    for (const auto& other : f.obstacles) {
      if (!ok) break;
      ok = (o.center - other.center).norm() - o.radius - other.radius >= spec.clearance;
    }
    if (ok) {
      f.obstacles.push_back(o);
    } else if (++rejected >= spec.max_attempts) {
      throw GenerationError("obstacle placement failed after " + std::to_string(rejected) +
                                " rejected candidates",
                            rng.seed());
    }
  }
  return f;
}

ObstacleField generate_obstacle_field(Difficulty d, Rng& rng) {
  return generate_obstacle_field(FieldSpec::for_difficulty(d), rng);
}

ObstacleField bimodal_field(double start_speed) {
  ObstacleField f;
  f.bounds = {-1.0, 6.0, -3.0, 3.0};
  f.start = {0.0, 0.0};
  f.goal = {5.0, 0.0};
  f.start_heading = 0.0;
  f.start_speed = start_speed;
  f.obstacles.push_back({{2.5, 0.0}, 0.8});
  return f;
}

// ---------------------------------------------------------------------------
// Collision

bool point_in_collision(const ObstacleField& field, const Eigen::Vector2d& position,
                        double inflation) {
  for (const auto& o : field.obstacles) {
    const double r = o.radius + inflation;
    if ((position - o.center).squaredNorm() < r * r) return true;
  }
  return false;
}

CollisionGrid::CollisionGrid(const ObstacleField& field, double inflation, double cell_size) {
  if (field.obstacles.empty()) return;
  double xlo = field.obstacles[0].center.x(), xhi = xlo;
  double ylo = field.obstacles[0].center.y(), yhi = ylo;
  double rmax = 0.0;
  for (const auto& o : field.obstacles) {
    const double r = o.radius + inflation;
    xlo = std::min(xlo, o.center.x() - r);
    xhi = std::max(xhi, o.center.x() + r);
    ylo = std::min(ylo, o.center.y() - r);
    yhi = std::max(yhi, o.center.y() + r);
    rmax = std::max(rmax, r);
    ox_.push_back(o.center.x());
    oy_.push_back(o.center.y());
    r2_.push_back(r * r);
  }
  x0_ = xlo;
  y0_ = ylo;
  inv_cell_ = 1.0 / cell_size;
  nx_ = std::max(1, static_cast<int>(std::ceil((xhi - xlo) * inv_cell_)));
  ny_ = std::max(1, static_cast<int>(std::ceil((yhi - ylo) * inv_cell_)));

  std::vector<std::vector<int>> cells(static_cast<std::size_t>(nx_) * ny_);
  for (int i = 0; i < static_cast<int>(ox_.size()); ++i) {
    const double r = std::sqrt(r2_[i]);
    const int ix0 = std::clamp(static_cast<int>((ox_[i] - r - x0_) * inv_cell_), 0, nx_ - 1);
    const int ix1 = std::clamp(static_cast<int>((ox_[i] + r - x0_) * inv_cell_), 0, nx_ - 1);
    const int iy0 = std::clamp(static_cast<int>((oy_[i] - r - y0_) * inv_cell_), 0, ny_ - 1);
    const int iy1 = std::clamp(static_cast<int>((oy_[i] + r - y0_) * inv_cell_), 0, ny_ - 1);
    for (int iy = iy0; iy <= iy1; ++iy) {
      for (int ix = ix0; ix <= ix1; ++ix) cells[static_cast<std::size_t>(iy) * nx_ + ix].push_back(i);
    }
  }
  cell_start_.reserve(cells.size() + 1);
  cell_start_.push_back(0);
  for (const auto& c : cells) {
    cell_items_.insert(cell_items_.end(), c.begin(), c.end());
    cell_start_.push_back(static_cast<int>(cell_items_.size()));
  }
}

bool CollisionGrid::hit(double px, double py) const noexcept {
  if (nx_ == 0) return false;
  const double fx = (px - x0_) * inv_cell_;
  const double fy = (py - y0_) * inv_cell_;
  // Everything outside the padded bounding box is free; also rejects NaN.
  if (!(fx >= 0.0 && fy >= 0.0 && fx < nx_ && fy < ny_)) return false;
  const std::size_t cell = static_cast<std::size_t>(fy) * nx_ + static_cast<std::size_t>(fx);
  for (int k = cell_start_[cell]; k < cell_start_[cell + 1]; ++k) {
    const int i = cell_items_[k];
    const double dx = px - ox_[i], dy = py - oy_[i];
    if (dx * dx + dy * dy < r2_[i]) return true;
  }
  return false;
}

double task_cost(const ObstacleField& field, const Eigen::Vector2d& position,
                 const ControlVector& control, const TaskCostWeights& w, double inflation) {
  const double crash = point_in_collision(field, position, inflation) ? 1.0 : 0.0;
  return w.w_goal * (position - field.goal).squaredNorm() + w.w_obstacle * crash +
         w.w_control * control.squaredNorm();
}

// ---------------------------------------------------------------------------
// Bicycle

double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * std::numbers::pi);
  return r <= -std::numbers::pi ? r + 2.0 * std::numbers::pi : r;
}

StateVector BicycleState::to_vector() const {
  StateVector s(4);
  s << x, y, theta, v;
  return s;
}

BicycleState BicycleState::from_vector(const StateVector& s) {
  if (s.size() != 4) throw DomainError("bicycle state needs 4 entries");
  return {s[0], s[1], s[2], s[3]};
}

BicycleState bicycle_step(const BicycleState& s, double accel, double steer, double dt,
                          double wheelbase, double v_min, double v_max) {
  const double d = std::clamp(steer, -kSteerSingularityMargin, kSteerSingularityMargin);
  BicycleState n;
  n.x = s.x + dt * s.v * std::cos(s.theta);
  n.y = s.y + dt * s.v * std::sin(s.theta);
  n.theta = wrap_angle(s.theta + dt * s.v / wheelbase * std::tan(d));
  n.v = std::clamp(s.v + dt * accel, v_min, v_max);
  return n;
}

namespace {

ControlBounds symmetric_bounds(double a, double b) {
  ControlBounds cb;
  cb.lower = Eigen::Vector2d(-a, -b);
  cb.upper = Eigen::Vector2d(a, b);
  return cb;
}

void check_weights(const TaskCostWeights& w) {
  if (!(w.w_goal >= 0.0 && w.w_obstacle >= 0.0 && w.w_control >= 0.0)) {
    throw ConfigError("task cost weights must be nonnegative");
  }
}

}  // namespace

BicycleEnv::BicycleEnv(ObstacleField field, TaskCostWeights weights, BicycleParams params)
    : field_(std::move(field)),
      weights_(weights),
      params_(params),
      bounds_(symmetric_bounds(params.accel_limit, params.steer_limit)),
      grid_(field_, params.inflation) {
  check_weights(weights_);
  if (!(params_.dt > 0.0) || !(params_.wheelbase > 0.0)) {
    throw ConfigError("bicycle dt and wheelbase must be > 0");
  }
  if (!(params_.steer_limit > 0.0 && params_.steer_limit <= kSteerSingularityMargin)) {
    throw ConfigError("bicycle steer limit must lie in (0, 1.4]");
  }
  if (!(params_.v_min <= params_.v_max)) throw ConfigError("bicycle v_min exceeds v_max");
}

StateVector BicycleEnv::initial_state() const {
  const double v = std::clamp(field_.start_speed, params_.v_min, params_.v_max);
  return BicycleState{field_.start.x(), field_.start.y(), wrap_angle(field_.start_heading), v}
      .to_vector();
}

StateVector BicycleEnv::step(const StateVector& x, const ControlVector& u) const {
  return bicycle_step(BicycleState::from_vector(x), u[0], u[1], params_.dt, params_.wheelbase,
                      params_.v_min, params_.v_max)
      .to_vector();
}

double BicycleEnv::running_cost(const StateVector& x, const ControlVector& u) const {
  return terminal_cost(x) + weights_.w_control * u.squaredNorm();
}

double BicycleEnv::terminal_cost(const StateVector& x) const {
  const double dx = x[0] - field_.goal.x(), dy = x[1] - field_.goal.y();
  return weights_.w_goal * (dx * dx + dy * dy) +
         (grid_.hit(x[0], x[1]) ? weights_.w_obstacle : 0.0);
}

bool BicycleEnv::in_collision(const StateVector& x) const { return grid_.hit(x[0], x[1]); }

double BicycleEnv::goal_distance(const StateVector& x) const {
  return std::hypot(x[0] - field_.goal.x(), x[1] - field_.goal.y());
}

double BicycleEnv::sequence_cost(const StateVector& x0, const double* controls, int horizon) const {
  // Same arithmetic as the generic loop, without the virtual dispatch.
  BicycleState s = BicycleState::from_vector(x0);
  const double gx = field_.goal.x(), gy = field_.goal.y();
  bool crashed = false;
  double total = 0.0;
  for (int t = 0; t < horizon; ++t) {
    const double a = controls[2 * t], d = controls[2 * t + 1];
    const bool hit = grid_.hit(s.x, s.y);
    const double dx = s.x - gx, dy = s.y - gy;
    total += weights_.w_goal * (dx * dx + dy * dy) + (hit ? weights_.w_obstacle : 0.0) +
             weights_.w_control * (a * a + d * d);
    crashed = crashed || hit;
    if (!crashed) {
      s = bicycle_step(s, a, d, params_.dt, params_.wheelbase, params_.v_min, params_.v_max);
      if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.theta) ||
          !std::isfinite(s.v)) {
        throw EnvironmentFault("non-finite state from dynamics", t);
      }
    }
  }
  const double dx = s.x - gx, dy = s.y - gy;
  return total + weights_.w_goal * (dx * dx + dy * dy) +
         (grid_.hit(s.x, s.y) ? weights_.w_obstacle : 0.0);
}

std::unique_ptr<BicycleEnv> bimodal_toy(TaskCostWeights weights, BicycleParams params,
                                        double start_speed) {
  return std::make_unique<BicycleEnv>(bimodal_field(start_speed), weights, params);
}

// ---------------------------------------------------------------------------
// Double integrator

DoubleIntegratorEnv::DoubleIntegratorEnv(ObstacleField field, TaskCostWeights weights,
                                         DoubleIntegratorParams params)
    : field_(std::move(field)),
      weights_(weights),
      params_(params),
      bounds_(symmetric_bounds(params.accel_limit, params.accel_limit)),
      grid_(field_, 0.0) {
  check_weights(weights_);
  if (!(params_.dt > 0.0)) throw ConfigError("double integrator dt must be > 0");
}

StateVector DoubleIntegratorEnv::initial_state() const {
  StateVector s(4);
  s << field_.start.x(), field_.start.y(), field_.start_speed * std::cos(field_.start_heading),
      field_.start_speed * std::sin(field_.start_heading);
  return s;
}

StateVector DoubleIntegratorEnv::step(const StateVector& x, const ControlVector& u) const {
  const double dt = params_.dt;
  StateVector n(4);
  n << x[0] + dt * x[2], x[1] + dt * x[3], x[2] + dt * u[0], x[3] + dt * u[1];
  return n;
}

double DoubleIntegratorEnv::running_cost(const StateVector& x, const ControlVector& u) const {
  return terminal_cost(x) + weights_.w_control * u.squaredNorm();
}

double DoubleIntegratorEnv::terminal_cost(const StateVector& x) const {
  const double dx = x[0] - field_.goal.x(), dy = x[1] - field_.goal.y();
  return weights_.w_goal * (dx * dx + dy * dy) +
         (grid_.hit(x[0], x[1]) ? weights_.w_obstacle : 0.0);
}

bool DoubleIntegratorEnv::in_collision(const StateVector& x) const {
  return grid_.hit(x[0], x[1]);
}

double DoubleIntegratorEnv::goal_distance(const StateVector& x) const {
  return std::hypot(x[0] - field_.goal.x(), x[1] - field_.goal.y());
}

// ---------------------------------------------------------------------------
// Scoring

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::kSuccess: return "success";
    case Outcome::kCrash: return "crash";
    case Outcome::kTimeout: return "timeout";
    case Outcome::kGenerationError: return "generation_error";
    case Outcome::kFault: return "fault";
  }
  return "unknown";
}

Outcome outcome_from_string(const std::string& s) {
  if (s == "success") return Outcome::kSuccess;
  if (s == "crash") return Outcome::kCrash;
  if (s == "timeout") return Outcome::kTimeout;
  if (s == "generation_error") return Outcome::kGenerationError;
  if (s == "fault") return Outcome::kFault;
  throw ConfigError("unknown outcome '" + s + "'");
}

Outcome success_check(const EpisodeTrace& trace, const Environment& env, int step_cap) {
  const std::size_t last = std::min(trace.states.size(), static_cast<std::size_t>(step_cap) + 1);
  for (std::size_t t = 0; t < last; ++t) {
    if (env.in_collision(trace.states[t])) return Outcome::kCrash;
    if (env.goal_distance(trace.states[t]) < env.success_radius()) return Outcome::kSuccess;
  }
  return Outcome::kTimeout;
}

}  // namespace otmpc
