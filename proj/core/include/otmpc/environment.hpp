#pragma once

#include <memory>
#include <string>

#include <Eigen/Dense>

namespace otmpc {

// Small fixed-capacity vectors keep the rollout inner loop allocation-free.
inline constexpr int kMaxStateDim = 8;
inline constexpr int kMaxControlDim = 4;
using StateVector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxStateDim, 1>;
using ControlVector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxControlDim, 1>;

/// Box constraints on one control vector.
struct ControlBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index dim() const noexcept { return lower.size(); }
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& u) const;
  double clamp(Eigen::Index j, double value) const {
    return value < lower[j] ? lower[j] : (value > upper[j] ? upper[j] : value);
  }
  /// Clamps a flattened sequence laid out as [t * dim + j] in place.
  void clamp_sequence(Eigen::Ref<Eigen::VectorXd> flat) const;
};

/// Task cost weights: w_goal ||p - goal||^2 + w_obstacle 1[crash] + w_control ||u||^2.
struct TaskCostWeights {
  double w_goal = 1.0;
  double w_obstacle = 100.0;
  double w_control = 0.0;
};

/// Deterministic discrete-time system x_{t+1} = F(x_t, u_t) with its task cost.
/// Implementations are immutable after construction and safe to share
/// between threads.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  virtual const ControlBounds& bounds() const = 0;
  virtual StateVector initial_state() const = 0;

  virtual StateVector step(const StateVector& x, const ControlVector& u) const = 0;
  /// l(x_t) + w_control ||u_t||^2, the summand of S for t < t_f.
  virtual double running_cost(const StateVector& x, const ControlVector& u) const = 0;
  /// l(x_{t_f}).
  virtual double terminal_cost(const StateVector& x) const = 0;
  virtual bool in_collision(const StateVector& x) const = 0;
  virtual double goal_distance(const StateVector& x) const = 0;
  /// Goal distance strictly below this counts as reaching the goal.
  virtual double success_radius() const = 0;
  /// Position (x, y) used for plotting dumps.
  virtual Eigen::Vector2d position(const StateVector& x) const = 0;

  /// Total cost S of the flattened sequence controls[t * control_dim() + j].
  /// Once a visited state is in collision the state freezes there, so the
  /// crash term keeps accruing for the rest of the horizon. Throws
  /// EnvironmentFault if the dynamics produce a non-finite state.
  virtual double sequence_cost(const StateVector& x0, const double* controls, int horizon) const;
};

}  // namespace otmpc
