#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "otmpc/environment.hpp"
#include "otmpc/random.hpp"

namespace otmpc {

// ---------------------------------------------------------------------------
// Obstacle fields

struct Obstacle {
  Eigen::Vector2d center;
  double radius = 0.0;
};

struct Workspace {
  double x_min = 0.0, x_max = 14.0;
  double y_min = 0.0, y_max = 12.0;
};

struct ObstacleField {
  std::vector<Obstacle> obstacles;
  Workspace bounds;
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  /// Initial heading of the vehicle, radians.
  double start_heading = 0.0;
  /// Initial forward speed, m/s.
  double start_speed = 0.0;

  std::string to_json() const;
  static ObstacleField from_json(const std::string& text);
};

enum class Difficulty { kEasy, kHard };

std::string to_string(Difficulty d);
Difficulty difficulty_from_string(const std::string& s);

/// Placement rules for randomized fields.
struct FieldSpec {
  double radius_min = 0.2;
  double radius_max = 0.5;
  double clearance = 0.75;      // minimum surface-to-surface gap between obstacles
  int min_obstacles = 25;
  int max_obstacles = 50;
  double endpoint_clearance = 1.0;  // surface gap from start and goal
  Workspace bounds;
  double start_band = 1.0;      // start x in [x_min + band, x_min + 2 band]
  double goal_band = 1.0;       // goal x in [x_max - 2 band, x_max - band]
  double heading_jitter = 0.5235987755982988;  // +- pi/6 around the goal bearing
  int max_attempts = 10000;
  std::optional<int> obstacle_count;  // overrides the random count (0 allowed)

  static FieldSpec for_difficulty(Difficulty d);
};

/// Rejection-samples a field; deterministic per rng state.
/// Throws GenerationError after spec.max_attempts rejected candidates.
ObstacleField generate_obstacle_field(const FieldSpec& spec, Rng& rng);
ObstacleField generate_obstacle_field(Difficulty d, Rng& rng);

/// The fixed symmetric two-homotopy-class task: start (0,0) heading +x,
/// goal (5,0), one disk of radius 0.8 at (2.5,0).
ObstacleField bimodal_field(double start_speed = 0.0);

// ---------------------------------------------------------------------------
// Kinematic bicycle

struct BicycleState {
  double x = 0.0, y = 0.0;
  double theta = 0.0;  // wrapped to (-pi, pi]
  double v = 0.0;

  StateVector to_vector() const;
  static BicycleState from_vector(const StateVector& s);
};

struct BicycleParams {
  double dt = 0.1;
  double wheelbase = 1.0;
  double accel_limit = 2.0;
  double steer_limit = 0.6;
  double v_min = 0.0;
  double v_max = 3.0;
  double inflation = 0.0;       // added to every obstacle radius for collision checks
  double success_radius = 0.3;
};

/// Largest steering magnitude accepted by the step (tan singularity margin).
inline constexpr double kSteerSingularityMargin = 1.4;

/// Explicit Euler step of x' = v cos th, y' = v sin th, th' = v/L tan d, v' = a.
/// Steering is clamped to kSteerSingularityMargin and v to [v_min, v_max].
BicycleState bicycle_step(const BicycleState& s, double accel, double steer, double dt,
                          double wheelbase, double v_min, double v_max);

double wrap_angle(double a);

/// Per-step cost shared by the planar environments.
double task_cost(const ObstacleField& field, const Eigen::Vector2d& position,
                 const ControlVector& control, const TaskCostWeights& w, double inflation = 0.0);

bool point_in_collision(const ObstacleField& field, const Eigen::Vector2d& position,
                        double inflation = 0.0);

/// Uniform-grid index over inflated obstacle disks. Answers the same
/// question as point_in_collision, typically touching one or two disks.
class CollisionGrid {
 public:
  CollisionGrid() = default;
  CollisionGrid(const ObstacleField& field, double inflation, double cell_size = 0.5);

  bool hit(double px, double py) const noexcept;

 private:
  double x0_ = 0.0, y0_ = 0.0, inv_cell_ = 1.0;
  int nx_ = 0, ny_ = 0;
  std::vector<int> cell_start_;  // CSR offsets, size nx*ny + 1
  std::vector<int> cell_items_;
  std::vector<double> ox_, oy_, r2_;
};

class BicycleEnv final : public Environment {
 public:
  BicycleEnv(ObstacleField field, TaskCostWeights weights, BicycleParams params = {});

  std::string id() const override { return "bicycle"; }
  int state_dim() const override { return 4; }
  int control_dim() const override { return 2; }
  const ControlBounds& bounds() const override { return bounds_; }
  StateVector initial_state() const override;
  StateVector step(const StateVector& x, const ControlVector& u) const override;
  double running_cost(const StateVector& x, const ControlVector& u) const override;
  double terminal_cost(const StateVector& x) const override;
  bool in_collision(const StateVector& x) const override;
  double goal_distance(const StateVector& x) const override;
  double success_radius() const override { return params_.success_radius; }
  Eigen::Vector2d position(const StateVector& x) const override { return {x[0], x[1]}; }
  double sequence_cost(const StateVector& x0, const double* controls, int horizon) const override;

  const ObstacleField& field() const noexcept { return field_; }
  const TaskCostWeights& weights() const noexcept { return weights_; }
  const BicycleParams& params() const noexcept { return params_; }

 private:
  ObstacleField field_;
  TaskCostWeights weights_;
  BicycleParams params_;
  ControlBounds bounds_;
  CollisionGrid grid_;
};

// ---------------------------------------------------------------------------
// Double integrator

struct DoubleIntegratorParams {
  double dt = 0.1;
  double accel_limit = 2.0;
  double success_radius = 0.3;
};

/// State (px, py, vx, vy), control (ax, ay); explicit Euler.
class DoubleIntegratorEnv final : public Environment {
 public:
  DoubleIntegratorEnv(ObstacleField field, TaskCostWeights weights,
                      DoubleIntegratorParams params = {});

  std::string id() const override { return "double_integrator"; }
  int state_dim() const override { return 4; }
  int control_dim() const override { return 2; }
  const ControlBounds& bounds() const override { return bounds_; }
  StateVector initial_state() const override;
  StateVector step(const StateVector& x, const ControlVector& u) const override;
  double running_cost(const StateVector& x, const ControlVector& u) const override;
  double terminal_cost(const StateVector& x) const override;
  bool in_collision(const StateVector& x) const override;
  double goal_distance(const StateVector& x) const override;
  double success_radius() const override { return params_.success_radius; }
  Eigen::Vector2d position(const StateVector& x) const override { return {x[0], x[1]}; }

  const ObstacleField& field() const noexcept { return field_; }

 private:
  ObstacleField field_;
  TaskCostWeights weights_;
  DoubleIntegratorParams params_;
  ControlBounds bounds_;
  CollisionGrid grid_;
};

/// Cost weights, start speed and goal radius used for the bimodal task.
inline constexpr TaskCostWeights kBimodalWeights{1.0, 1000.0, 0.05};
inline constexpr double kBimodalStartSpeed = 0.0;
inline constexpr double kBimodalSuccessRadius = 0.5;

/// Bicycle on the bimodal field.
std::unique_ptr<BicycleEnv> bimodal_toy(TaskCostWeights weights, BicycleParams params = {},
                                        double start_speed = 0.0);

// ---------------------------------------------------------------------------
// Episode scoring

/// kGenerationError and kFault mark trials that never produced an episode
/// (field placement failed, or the controller/environment raised).
enum class Outcome { kSuccess, kCrash, kTimeout, kGenerationError, kFault };

std::string to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

/// Visited states of an executed episode (states[0] is the initial state).
struct EpisodeTrace {
  std::vector<StateVector> states;
  std::vector<ControlVector> controls;
};

/// Crash if any visited state penetrates an obstacle; success if the goal
/// distance drops strictly below the success radius within `step_cap`
/// executed steps and before any crash; timeout otherwise.
Outcome success_check(const EpisodeTrace& trace, const Environment& env, int step_cap);

}  // namespace otmpc
