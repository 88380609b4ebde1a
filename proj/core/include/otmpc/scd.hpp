#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "otmpc/transport.hpp"

namespace otmpc {

/// N particles (rows) with simplex weights q.
struct ParticleEnsemble {
  ParticleEnsemble(Eigen::MatrixXd particles, Simplex q);
  /// Uniform weights q_i = 1/N.
  explicit ParticleEnsemble(Eigen::MatrixXd particles);

  Eigen::MatrixXd particles;
  Simplex q;

  Eigen::Index size() const noexcept { return particles.rows(); }
  Eigen::Index dim() const noexcept { return particles.cols(); }
};

/// M proposals (rows) with self-normalized weights p = softmax(raw_scores).
struct ProposalBatch {
  ProposalBatch(Eigen::MatrixXd proposals, Eigen::VectorXd raw_scores);

  Eigen::MatrixXd proposals;
  Simplex p;
  Eigen::VectorXd raw_scores;

  Eigen::Index size() const noexcept { return proposals.rows(); }
};

/// How the entropy regularization is chosen for each coupling solve.
enum class EpsilonRule {
  kAbsolute,        // epsilon as given, in cost units
  kMedianMultiple,  // epsilon = multiplier * median(C)
  kMaxMultiple,     // epsilon = multiplier * max(C)
};

struct ScdConfig {
  double epsilon = 1.0;
  EpsilonRule epsilon_rule = EpsilonRule::kAbsolute;
  double epsilon_multiplier = 0.05;
  double eta = 1.0;
  int max_outer_iterations = 100;
  double displacement_tol = 0.0;          // 0 disables
  double relative_improvement_tol = 0.0;  // 0 disables; never used when resampling
  bool resample_each_iteration = false;
  /// Re-solve the coupling after each particle move so the trace records
  /// L_eps(z^{k+1}, Gamma^{k+1}). When off, the step reports L_eps(z^k, Gamma^k)
  /// and skips the second solve.
  bool track_objective = true;
  SinkhornConfig sinkhorn;

  void validate() const;

  /// Absolute epsilon = multiplier * median pairwise half-squared distance
  /// between the ensemble and the batch.
  static ScdConfig with_median_epsilon(double multiplier, const ParticleEnsemble& ensemble,
                                       const ProposalBatch& batch, ScdConfig base);
  static ScdConfig with_median_epsilon(double multiplier, const ParticleEnsemble& ensemble,
                                       const ProposalBatch& batch);

  /// Epsilon actually used for a given cost matrix.
  double resolve_epsilon(const CostMatrix& cost) const;
};

struct ScdStepResult {
  ParticleEnsemble ensemble;  // z^{k+1}
  Coupling update_coupling;   // Gamma solved at z^k, drives the particle update
  Coupling coupling;          // Gamma^{k+1} solved at z^{k+1} (copy of update_coupling if untracked)
  double objective = 0.0;     // L_eps(z^{k+1}, Gamma^{k+1}), or L_eps(z^k, Gamma^k) if untracked
  double max_displacement = 0.0;
};

/// One alternating step: couple z^k to the proposals, move every particle
/// toward its barycenter with step eta, then re-solve the coupling at the new
/// particles. `current` may supply an already-solved coupling for z^k.
ScdStepResult scd_step(const ParticleEnsemble& ensemble, const ProposalBatch& batch,
                       const ScdConfig& cfg, const Coupling* current = nullptr);

/// L_eps(z, Gamma; y) with C rebuilt from the ensemble's particles.
double objective_of(const ParticleEnsemble& ensemble, const ProposalBatch& batch,
                    const Eigen::MatrixXd& plan, double epsilon);

struct ScdRecord {
  int iteration = 0;
  double objective = 0.0;
  double max_displacement = 0.0;
  int sinkhorn_iterations = 0;
  double row_marginal_error = 0.0;
  double col_marginal_error = 0.0;
  bool sinkhorn_converged = false;
  double epsilon = 0.0;
};

enum class StopReason { kIterationCap, kDisplacement, kRelativeImprovement, kError };

struct ScdTrace {
  std::vector<ScdRecord> records;
  StopReason stop = StopReason::kIterationCap;
  std::optional<std::string> error;

  /// One JSON object per record, newline-terminated.
  std::string to_jsonl() const;
};

/// Called before each iteration; with fixed proposals it is called once.
using ProposalSource = std::function<ProposalBatch(const ParticleEnsemble&, int iteration)>;

struct ScdRunResult {
  ParticleEnsemble ensemble;
  ScdTrace trace;
  std::optional<Coupling> last_coupling;
};

/// Iterates scd_step until a stopping rule fires. A step error after at least
/// one good iteration returns the last good ensemble with trace.error set.
ScdRunResult scd_run(ParticleEnsemble ensemble, const ProposalSource& source, const ScdConfig& cfg);

std::string to_string(StopReason r);

}  // namespace otmpc
