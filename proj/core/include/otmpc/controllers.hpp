#pragma once

#include <memory>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "otmpc/environment.hpp"
#include "otmpc/random.hpp"
#include "otmpc/scd.hpp"
#include "otmpc/transport.hpp"

namespace otmpc {

// Control sequences are stored flattened as [t * m + j] so an ensemble or a
// proposal batch is a plain matrix with one sequence per row.

/// Reshapes a flattened sequence into a t_f x m matrix.
Eigen::MatrixXd unflatten(const Eigen::Ref<const Eigen::RowVectorXd>& flat, int control_dim);

// ---------------------------------------------------------------------------
// Rollouts

struct RolloutResult {
  Eigen::MatrixXd states;          // (t_f + 1) x n, states.row(0) == x0
  double total_cost = 0.0;
  Eigen::VectorXd per_step_costs;  // t_f running terms then the terminal term
  bool crashed = false;
};

/// S(u; x0) with full state history. Once a state is in collision the
/// remaining states repeat it. Throws EnvironmentFault on non-finite states.
RolloutResult rollout(const Environment& env, const StateVector& x0, const Eigen::MatrixXd& controls);

/// S for every row of `sequences` (flattened), optionally split over threads.
Eigen::VectorXd rollout_costs(const Environment& env, const StateVector& x0,
                              const Eigen::MatrixXd& sequences, int workers = 1);

// ---------------------------------------------------------------------------
// Weights and baseline updates

/// w_j proportional to exp(-beta (S_j - min S)).
Simplex gibbs_weights(const Eigen::VectorXd& costs, double beta);

/// mean + sum_j w_j perturbations.row(j), clamped to bounds.
Eigen::VectorXd mppi_update(const Eigen::VectorXd& mean, const Eigen::MatrixXd& perturbations,
                            const Eigen::VectorXd& costs, double beta, const ControlBounds& bounds);

struct CemParams {
  double elite_fraction = 0.1;
  double alpha = 1.0;       // weight on the elite statistics
  double std_floor = 1e-3;
};

struct CemStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

/// Elites are the floor(M * elite_fraction) lowest costs (ties by index).
/// Elite std is the population std. Throws ConfigError if no elite survives.
CemStats cem_update(const Eigen::MatrixXd& samples, const Eigen::VectorXd& costs,
                    const CemParams& params, const CemStats& prior);

// ---------------------------------------------------------------------------
// Proposal mixture

enum class GlobalKind { kUniformInBounds, kBroadGaussian };

std::string to_string(GlobalKind k);
GlobalKind global_kind_from_string(const std::string& s);

struct ProposalConfig {
  double rho = 0.1;
  Eigen::VectorXd local_sigma;   // per control dimension
  double temporal_correlation = 0.8;
  GlobalKind global_kind = GlobalKind::kUniformInBounds;
  Eigen::VectorXd global_scale;  // per control dimension, broad-gaussian only

  void validate(Eigen::Index control_dim) const;
  /// Fills empty sigma vectors: local 0.3 and global 1.0 times the bound half-width.
  ProposalConfig with_defaults(const ControlBounds& bounds) const;
};

/// Fills `out` (horizon x m, flattened per row) with zero-mean AR(1) noise of
/// stationary std sigma[j]: e_0 = sigma n_0, e_t = phi e_{t-1} + sigma sqrt(1-phi^2) n_t.
void ar1_noise(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out,
               const Eigen::VectorXd& sigma, double phi, Rng& rng);

/// M proposals from the mixture. Each proposal consumes one Bernoulli draw,
/// then either one index draw plus t_f * m normals (local) or t_f * m
/// uniforms / normals (global), so the stream depends only on M, t_f, m.
Eigen::MatrixXd sample_proposals(const Eigen::MatrixXd& particles, Eigen::Index num_proposals,
                                 const ProposalConfig& cfg, const ControlBounds& bounds, Rng& rng);

/// Drops the first control and repeats the last one (zero-order hold).
void shift_sequences(Eigen::MatrixXd& sequences, int control_dim);

// ---------------------------------------------------------------------------
// Controllers

enum class InitKind { kZeros, kRandomSmooth };

struct OtMpcConfig {
  int horizon = 70;
  int num_particles = 20;
  int num_proposals = 200;
  int inner_iterations = 8;
  double beta = 0.460;
  ScdConfig scd = default_scd();
  ProposalConfig proposal;
  InitKind init = InitKind::kRandomSmooth;
  int workers = 1;

  static ScdConfig default_scd();
  void validate(Eigen::Index control_dim) const;
};

struct MppiConfig {
  int horizon = 30;
  int num_samples = 500;
  int iterations = 8;
  double beta = 1.019;
  ProposalConfig proposal;  // rho defaults to 0 in from-config paths
  int workers = 1;

  void validate(Eigen::Index control_dim) const;
};

struct CemConfig {
  int horizon = 70;
  int num_samples = 800;
  int iterations = 5;
  CemParams cem;
  Eigen::VectorXd initial_std;  // per control dimension
  double temporal_correlation = 0.8;
  int workers = 1;

  void validate(Eigen::Index control_dim) const;
};

struct CycleDiagnostics {
  double best_cost = 0.0;
  double spread = 0.0;          // max particle distance from the ensemble mean (0 for MPPI/CEM)
  int sinkhorn_iterations = 0;  // summed over the cycle
  bool failed = false;
  std::optional<std::string> error;

  std::string to_json() const;
};

struct CycleResult {
  ControlVector action;
  CycleDiagnostics diagnostics;
  Eigen::MatrixXd planned;  // candidate rows after planning, before the warm-start shift
};

/// Receding-horizon controller. One instance belongs to one episode.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string id() const = 0;
  /// Plans from x0 and returns the control to execute; warm-starts internally.
  virtual CycleResult cycle(const Environment& env, const StateVector& x0, Rng& rng) = 0;
  /// Current candidate sequences, one flattened row each.
  virtual Eigen::MatrixXd candidates() const = 0;
};

struct OtMpcCycleOutput {
  ControlVector action;
  Eigen::MatrixXd ensemble;       // after SCD, before the warm-start shift
  Eigen::VectorXd particle_costs;
  Eigen::Index selected = 0;
  ScdTrace trace;
};

/// One OT-MPC planning step on an ensemble of flattened sequences: K SCD
/// iterations with fresh proposals weighted by gibbs_weights, then the first
/// control of the cheapest particle (lowest index on ties).
OtMpcCycleOutput otmpc_cycle(const Eigen::MatrixXd& ensemble, const StateVector& x0,
                             const Environment& env, const OtMpcConfig& cfg, Rng& rng);

class OtMpcController final : public Controller {
 public:
  OtMpcController(OtMpcConfig cfg, const Environment& env, Rng& rng);
  std::string id() const override { return "otmpc"; }
  CycleResult cycle(const Environment& env, const StateVector& x0, Rng& rng) override;
  Eigen::MatrixXd candidates() const override { return ensemble_; }
  const OtMpcConfig& config() const noexcept { return cfg_; }

 private:
  OtMpcConfig cfg_;
  Eigen::MatrixXd ensemble_;
  ControlVector last_action_;
};

class MppiController final : public Controller {
 public:
  MppiController(MppiConfig cfg, const Environment& env);
  std::string id() const override { return "mppi"; }
  CycleResult cycle(const Environment& env, const StateVector& x0, Rng& rng) override;
  Eigen::MatrixXd candidates() const override { return mean_.transpose(); }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }

 private:
  MppiConfig cfg_;
  Eigen::VectorXd mean_;
  ControlVector last_action_;
};

class CemController final : public Controller {
 public:
  CemController(CemConfig cfg, const Environment& env);
  std::string id() const override { return "cem"; }
  CycleResult cycle(const Environment& env, const StateVector& x0, Rng& rng) override;
  Eigen::MatrixXd candidates() const override { return stats_.mean.transpose(); }

 private:
  CemConfig cfg_;
  CemStats stats_;
  Eigen::VectorXd base_std_;
  ControlVector last_action_;
};

}  // namespace otmpc
