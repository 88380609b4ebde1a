#include "otmpc/scd.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "otmpc/barycenter.hpp"
#include "otmpc/errors.hpp"

namespace otmpc {

ParticleEnsemble::ParticleEnsemble(Eigen::MatrixXd particles_, Simplex q_)
    : particles(std::move(particles_)), q(std::move(q_)) {
  if (particles.rows() < 1) throw DomainError("ensemble needs at least one particle");
  if (!particles.allFinite()) throw DomainError("ensemble particles must be finite");
  if (q.size() != particles.rows()) {
    throw DomainError("ensemble has " + std::to_string(particles.rows()) + " particles but " +
                      std::to_string(q.size()) + " weights");
  }
}

ParticleEnsemble::ParticleEnsemble(Eigen::MatrixXd particles_)
    : ParticleEnsemble(particles_, Simplex::uniform(std::max<Eigen::Index>(particles_.rows(), 1))) {}

ProposalBatch::ProposalBatch(Eigen::MatrixXd proposals_, Eigen::VectorXd raw_scores_)
    : proposals(std::move(proposals_)),
      p(Simplex::softmax(raw_scores_)),
      raw_scores(std::move(raw_scores_)) {
  if (proposals.rows() != raw_scores.size()) {
    throw DomainError("batch has " + std::to_string(proposals.rows()) + " proposals but " +
                      std::to_string(raw_scores.size()) + " scores");
  }
  if (!proposals.allFinite()) throw DomainError("proposals must be finite");
}

void ScdConfig::validate() const {
  if (epsilon_rule == EpsilonRule::kAbsolute) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("scd epsilon must be > 0");
  } else if (!(epsilon_multiplier > 0.0)) {
    throw ConfigError("scd epsilon multiplier must be > 0");
  }
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("scd eta must lie in (0, 1]");
  if (displacement_tol < 0.0 || relative_improvement_tol < 0.0) {
    throw ConfigError("scd tolerances must be >= 0");
  }
  if (max_outer_iterations < 1) throw ConfigError("scd max_outer_iterations must be >= 1");
}

ScdConfig ScdConfig::with_median_epsilon(double multiplier, const ParticleEnsemble& ensemble,
                                         const ProposalBatch& batch, ScdConfig base) {
  base.epsilon_rule = EpsilonRule::kAbsolute;
  base.epsilon = multiplier * build_cost_matrix(ensemble.particles, batch.proposals).median();
  base.validate();
  return base;
}

ScdConfig ScdConfig::with_median_epsilon(double multiplier, const ParticleEnsemble& ensemble,
                                         const ProposalBatch& batch) {
  return with_median_epsilon(multiplier, ensemble, batch, ScdConfig{});
}

double ScdConfig::resolve_epsilon(const CostMatrix& cost) const {
  double eps = epsilon;
  switch (epsilon_rule) {
    case EpsilonRule::kAbsolute:
      return epsilon;
    case EpsilonRule::kMedianMultiple:
      eps = epsilon_multiplier * cost.median();
      if (eps > 0.0) return eps;
      [[fallthrough]];
    case EpsilonRule::kMaxMultiple:
      eps = epsilon_multiplier * cost.max();
      break;
  }
  // All-zero costs: every epsilon gives the same coupling.
  return eps > 0.0 ? eps : 1.0;
}

namespace {

Coupling solve(const CostMatrix& cost, const ParticleEnsemble& ensemble,
               const ProposalBatch& batch, const ScdConfig& cfg, double epsilon,
               const Coupling* warm) {
  SinkhornConfig s = cfg.sinkhorn;
  s.epsilon = epsilon;
  if (warm && warm->rows() == cost.rows() && warm->cols() == cost.cols() &&
      warm->epsilon == epsilon && warm->scalings.log_u.allFinite() &&
      warm->scalings.log_v.allFinite()) {
    s.warm_start = warm->scalings;
  }
  return sinkhorn(cost, ensemble.q, batch.p, s);
}

}  // namespace

ScdStepResult scd_step(const ParticleEnsemble& ensemble, const ProposalBatch& batch,
                       const ScdConfig& cfg, const Coupling* current) {
  cfg.validate();
  if (ensemble.dim() != batch.proposals.cols()) {
    throw DomainError("particle dimension " + std::to_string(ensemble.dim()) +
                      " does not match proposal dimension " +
                      std::to_string(batch.proposals.cols()));
  }

  const CostMatrix cost = build_cost_matrix(ensemble.particles, batch.proposals);
  const double eps = current ? current->epsilon : cfg.resolve_epsilon(cost);
  // Without `current`, any caller-provided warm start in cfg.sinkhorn applies.
  Coupling gamma = current ? *current : solve(cost, ensemble, batch, cfg, eps, nullptr);

  const Eigen::MatrixXd bary = barycentric_update(gamma.plan, batch.proposals);
  Eigen::MatrixXd next = cfg.eta == 1.0 ? bary : Eigen::MatrixXd((1.0 - cfg.eta) * ensemble.particles + cfg.eta * bary);

  const double disp = (next - ensemble.particles).rowwise().norm().maxCoeff();
  ParticleEnsemble moved(std::move(next), ensemble.q);

  if (!cfg.track_objective) {
    const double objective = eot_objective(cost, gamma.plan, eps);
    Coupling copy = gamma;
    return ScdStepResult{std::move(moved), std::move(gamma), std::move(copy), objective, disp};
  }
  const CostMatrix moved_cost = build_cost_matrix(moved.particles, batch.proposals);
  Coupling post = solve(moved_cost, moved, batch, cfg, eps, &gamma);
  const double objective = eot_objective(moved_cost, post.plan, eps);

  return ScdStepResult{std::move(moved), std::move(gamma), std::move(post), objective, disp};
}

double objective_of(const ParticleEnsemble& ensemble, const ProposalBatch& batch,
                    const Eigen::MatrixXd& plan, double epsilon) {
  return eot_objective(build_cost_matrix(ensemble.particles, batch.proposals), plan, epsilon);
}

ScdRunResult scd_run(ParticleEnsemble ensemble, const ProposalSource& source, const ScdConfig& cfg) {
  cfg.validate();
  ScdRunResult out{std::move(ensemble), {}, std::nullopt};
  std::optional<ProposalBatch> batch;
  std::optional<Coupling> carried;  // coupling at the current particles (fixed proposals only)

  for (int k = 0; k < cfg.max_outer_iterations; ++k) {
    std::optional<ScdStepResult> attempt;
    try {
      if (!batch || cfg.resample_each_iteration) {
        batch.emplace(source(out.ensemble, k));
        carried.reset();
      }
      attempt.emplace(scd_step(out.ensemble, *batch, cfg, carried ? &*carried : nullptr));
    } catch (const Error& e) {
      if (out.trace.records.empty()) throw;
      out.trace.error = e.what();
      out.trace.stop = StopReason::kError;
      return out;
    }
    ScdStepResult& step = *attempt;

    ScdRecord rec;
    rec.iteration = k;
    rec.objective = step.objective;
    rec.max_displacement = step.max_displacement;
    rec.sinkhorn_iterations = step.update_coupling.iterations_used;
    rec.row_marginal_error = step.update_coupling.row_marginal_error;
    rec.col_marginal_error = step.update_coupling.col_marginal_error;
    rec.sinkhorn_converged = step.update_coupling.converged;
    rec.epsilon = step.update_coupling.epsilon;
    out.trace.records.push_back(rec);

    out.ensemble = std::move(step.ensemble);
    if (!cfg.resample_each_iteration && cfg.track_objective) carried = std::move(step.coupling);
    out.last_coupling = std::move(step.update_coupling);

    if (cfg.displacement_tol > 0.0 && rec.max_displacement < cfg.displacement_tol) {
      out.trace.stop = StopReason::kDisplacement;
      return out;
    }
    if (cfg.relative_improvement_tol > 0.0 && !cfg.resample_each_iteration &&
        out.trace.records.size() >= 2) {
      const double prev = out.trace.records[out.trace.records.size() - 2].objective;
      if (prev > 0.0 && (prev - rec.objective) / prev < cfg.relative_improvement_tol) {
        out.trace.stop = StopReason::kRelativeImprovement;
        return out;
      }
    }
  }
  out.trace.stop = StopReason::kIterationCap;
  return out;
}

std::string ScdTrace::to_jsonl() const {
  std::ostringstream os;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["iteration"] = r.iteration;
    j["objective"] = r.objective;
    j["max_displacement"] = r.max_displacement;
    j["sinkhorn_iterations"] = r.sinkhorn_iterations;
    j["row_marginal_error"] = r.row_marginal_error;
    j["col_marginal_error"] = r.col_marginal_error;
    j["sinkhorn_converged"] = r.sinkhorn_converged;
    j["epsilon"] = r.epsilon;
    os << j.dump() << '\n';
  }
  if (error) {
    nlohmann::ordered_json j;
    j["error"] = *error;
    os << j.dump() << '\n';
  }
  return os.str();
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::kIterationCap: return "iteration_cap";
    case StopReason::kDisplacement: return "displacement";
    case StopReason::kRelativeImprovement: return "relative_improvement";
    case StopReason::kError: return "error";
  }
  return "unknown";
}

}  // namespace otmpc
