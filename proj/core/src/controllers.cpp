#include "otmpc/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "otmpc/errors.hpp"
#include "otmpc/parallel.hpp"

namespace otmpc {

Eigen::MatrixXd unflatten(const Eigen::Ref<const Eigen::RowVectorXd>& flat, int control_dim) {
  if (control_dim < 1 || flat.size() % control_dim != 0) {
    throw DomainError("sequence length is not a multiple of the control dimension");
  }
  const Eigen::Index horizon = flat.size() / control_dim;
  Eigen::MatrixXd u(horizon, control_dim);
  for (Eigen::Index t = 0; t < horizon; ++t) {
    for (int j = 0; j < control_dim; ++j) u(t, j) = flat[t * control_dim + j];
  }
  return u;
}

// ---------------------------------------------------------------------------
// Rollouts

RolloutResult rollout(const Environment& env, const StateVector& x0, const Eigen::MatrixXd& controls) {
  const int m = env.control_dim();
  if (controls.cols() != m) throw DomainError("control sequence has the wrong width");
  if (x0.size() != env.state_dim()) throw DomainError("initial state has the wrong size");
  const Eigen::Index horizon = controls.rows();

  RolloutResult r;
  r.states.resize(horizon + 1, x0.size());
  r.per_step_costs.resize(horizon + 1);
  StateVector x = x0;
  r.states.row(0) = x.transpose();
  ControlVector u(m);
  double total = 0.0;
  for (Eigen::Index t = 0; t < horizon; ++t) {
    u = controls.row(t).transpose();
    r.per_step_costs[t] = env.running_cost(x, u);
    total += r.per_step_costs[t];
    r.crashed = r.crashed || env.in_collision(x);
    if (!r.crashed) {
      x = env.step(x, u);
      if (!x.allFinite()) throw EnvironmentFault("non-finite state from dynamics", static_cast<int>(t));
    }
    r.states.row(t + 1) = x.transpose();
  }
  r.per_step_costs[horizon] = env.terminal_cost(x);
  r.crashed = r.crashed || env.in_collision(x);
  r.total_cost = total + r.per_step_costs[horizon];
  return r;
}

Eigen::VectorXd rollout_costs(const Environment& env, const StateVector& x0,
                              const Eigen::MatrixXd& sequences, int workers) {
  const int m = env.control_dim();
  if (sequences.cols() % m != 0) throw DomainError("sequence length is not a multiple of the control dimension");
  const int horizon = static_cast<int>(sequences.cols() / m);
  // Row-major copy so each sequence is contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = sequences;
  Eigen::VectorXd costs(sequences.rows());
  parallel_for(static_cast<std::size_t>(sequences.rows()), workers, [&](std::size_t i) {
    costs[static_cast<Eigen::Index>(i)] =
        env.sequence_cost(x0, rows.data() + i * rows.cols(), horizon);
  });
  return costs;
}

// ---------------------------------------------------------------------------
// Weights and updates

Simplex gibbs_weights(const Eigen::VectorXd& costs, double beta) {
  if (!(beta >= 0.0)) throw DomainError("beta must be >= 0");
  if (!costs.allFinite()) throw DomainError("costs must be finite");
  return Simplex::softmax(-beta * costs);
}

Eigen::VectorXd mppi_update(const Eigen::VectorXd& mean, const Eigen::MatrixXd& perturbations,
                            const Eigen::VectorXd& costs, double beta, const ControlBounds& bounds) {
  if (perturbations.rows() != costs.size() || perturbations.cols() != mean.size()) {
    throw DomainError("mppi_update: shape mismatch");
  }
  const Simplex w = gibbs_weights(costs, beta);
  Eigen::VectorXd out = mean + perturbations.transpose() * w.weights();
  bounds.clamp_sequence(out);
  return out;
}

CemStats cem_update(const Eigen::MatrixXd& samples, const Eigen::VectorXd& costs,
                    const CemParams& params, const CemStats& prior) {
  if (samples.rows() != costs.size()) throw DomainError("cem_update: shape mismatch");
  if (!(params.elite_fraction > 0.0 && params.elite_fraction <= 1.0)) {
    throw ConfigError("cem elite_fraction must lie in (0, 1]");
  }
  if (!(params.alpha >= 0.0 && params.alpha <= 1.0)) throw ConfigError("cem alpha must lie in [0, 1]");
  const auto m = samples.rows();
  const auto n_elite = static_cast<Eigen::Index>(std::floor(static_cast<double>(m) * params.elite_fraction + 1e-9));
  if (n_elite < 1) throw ConfigError("cem keeps no elites: num_samples * elite_fraction < 1");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return costs[a] < costs[b]; });

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(samples.cols());
  for (Eigen::Index k = 0; k < n_elite; ++k) mean += samples.row(order[k]).transpose();
  mean /= static_cast<double>(n_elite);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(samples.cols());
  for (Eigen::Index k = 0; k < n_elite; ++k) {
    var += (samples.row(order[k]).transpose() - mean).array().square().matrix();
  }
  var /= static_cast<double>(n_elite);

  CemStats out;
  out.mean = params.alpha * mean + (1.0 - params.alpha) * prior.mean;
  out.std = (params.alpha * var.array().sqrt() + (1.0 - params.alpha) * prior.std.array())
                .max(params.std_floor)
                .matrix();
  return out;
}

// ---------------------------------------------------------------------------
// Proposals

std::string to_string(GlobalKind k) {
  return k == GlobalKind::kUniformInBounds ? "uniform" : "broad_gaussian";
}

GlobalKind global_kind_from_string(const std::string& s) {
  if (s == "uniform") return GlobalKind::kUniformInBounds;
  if (s == "broad_gaussian") return GlobalKind::kBroadGaussian;
  throw ConfigError("unknown global proposal kind '" + s + "' (expected uniform or broad_gaussian)");
}

void ProposalConfig::validate(Eigen::Index control_dim) const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("proposal rho must lie in [0, 1]");
  if (local_sigma.size() != control_dim || !(local_sigma.array() > 0.0).all()) {
    throw ConfigError("proposal local_sigma needs one positive entry per control dimension");
  }
  if (!(temporal_correlation >= 0.0 && temporal_correlation < 1.0)) {
    throw ConfigError("proposal temporal_correlation must lie in [0, 1)");
  }
  if (global_kind == GlobalKind::kBroadGaussian &&
      (global_scale.size() != control_dim || !(global_scale.array() > 0.0).all())) {
    throw ConfigError("proposal global_scale needs one positive entry per control dimension");
  }
}

ProposalConfig ProposalConfig::with_defaults(const ControlBounds& bounds) const {
  ProposalConfig c = *this;
  const Eigen::VectorXd half = 0.5 * (bounds.upper - bounds.lower);
  if (c.local_sigma.size() == 0) c.local_sigma = 0.3 * half;
  if (c.global_scale.size() == 0) c.global_scale = half;
  return c;
}

void ar1_noise(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out,
               const Eigen::VectorXd& sigma, double phi, Rng& rng) {
  const Eigen::Index m = sigma.size();
  const Eigen::Index horizon = out.size() / m;
  const double innov = std::sqrt(1.0 - phi * phi);
  for (Eigen::Index j = 0; j < m; ++j) out[j] = sigma[j] * rng.normal();
  for (Eigen::Index t = 1; t < horizon; ++t) {
    for (Eigen::Index j = 0; j < m; ++j) {
      out[t * m + j] = phi * out[(t - 1) * m + j] + sigma[j] * innov * rng.normal();
    }
  }
}

Eigen::MatrixXd sample_proposals(const Eigen::MatrixXd& particles, Eigen::Index num_proposals,
                                 const ProposalConfig& cfg, const ControlBounds& bounds, Rng& rng) {
  const Eigen::Index m = bounds.dim();
  const Eigen::Index d = particles.cols();
  if (particles.rows() < 1) throw DomainError("sample_proposals needs at least one particle");
  if (d % m != 0) throw DomainError("particle length is not a multiple of the control dimension");
  cfg.validate(m);

  Eigen::MatrixXd out(num_proposals, d);
  Eigen::RowVectorXd noise(d);
  for (Eigen::Index k = 0; k < num_proposals; ++k) {
    if (rng.bernoulli(cfg.rho)) {
      if (cfg.global_kind == GlobalKind::kUniformInBounds) {
        for (Eigen::Index i = 0; i < d; ++i) out(k, i) = rng.uniform(bounds.lower[i % m], bounds.upper[i % m]);
      } else {
        ar1_noise(noise, cfg.global_scale, cfg.temporal_correlation, rng);
        out.row(k) = noise;
      }
    } else {
      const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(particles.rows())));
      ar1_noise(noise, cfg.local_sigma, cfg.temporal_correlation, rng);
      out.row(k) = particles.row(i) + noise;
    }
    for (Eigen::Index i = 0; i < d; ++i) out(k, i) = bounds.clamp(i % m, out(k, i));
  }
  return out;
}

void shift_sequences(Eigen::MatrixXd& sequences, int control_dim) {
  const Eigen::Index d = sequences.cols();
  if (d <= control_dim) return;
  const Eigen::MatrixXd tail = sequences.rightCols(d - control_dim);
  sequences.leftCols(d - control_dim) = tail;
  sequences.rightCols(control_dim) = tail.rightCols(control_dim);
}

// ---------------------------------------------------------------------------
// Configs

ScdConfig OtMpcConfig::default_scd() {
  ScdConfig s;
  s.epsilon_rule = EpsilonRule::kMedianMultiple;
  s.epsilon_multiplier = 0.05;
  s.eta = 0.5;
  s.resample_each_iteration = true;
  s.track_objective = false;
  return s;
}

void OtMpcConfig::validate(Eigen::Index control_dim) const {
  if (horizon < 1) throw ConfigError("controller.horizon must be >= 1");
  if (num_particles < 1) throw ConfigError("controller.num_particles must be >= 1");
  if (num_proposals < 1) throw ConfigError("controller.num_proposals must be >= 1");
  if (inner_iterations < 1) throw ConfigError("controller.iterations must be >= 1");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("controller.beta must be > 0");
  scd.validate();
  proposal.validate(control_dim);
}

void MppiConfig::validate(Eigen::Index control_dim) const {
  if (horizon < 1) throw ConfigError("controller.horizon must be >= 1");
  if (num_samples < 1) throw ConfigError("controller.num_samples must be >= 1");
  if (iterations < 1) throw ConfigError("controller.iterations must be >= 1");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("controller.beta must be > 0");
  proposal.validate(control_dim);
}

void CemConfig::validate(Eigen::Index control_dim) const {
  if (horizon < 1) throw ConfigError("controller.horizon must be >= 1");
  if (num_samples < 1) throw ConfigError("controller.num_samples must be >= 1");
  if (iterations < 1) throw ConfigError("controller.iterations must be >= 1");
  if (initial_std.size() != control_dim || !(initial_std.array() > 0.0).all()) {
    throw ConfigError("controller.initial_std needs one positive entry per control dimension");
  }
  if (!(temporal_correlation >= 0.0 && temporal_correlation < 1.0)) {
    throw ConfigError("controller.temporal_correlation must lie in [0, 1)");
  }
  if (std::floor(num_samples * cem.elite_fraction + 1e-9) < 1.0) {
    throw ConfigError("cem keeps no elites: num_samples * elite_fraction < 1");
  }
}

std::string CycleDiagnostics::to_json() const {
  nlohmann::ordered_json j;
  j["best_cost"] = best_cost;
  j["spread"] = spread;
  j["sinkhorn_iterations"] = sinkhorn_iterations;
  j["failed"] = failed;
  if (error) j["error"] = *error;
  return j.dump();
}

// ---------------------------------------------------------------------------
// OT-MPC

namespace {

Eigen::Index argmin_lowest(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] < v[best]) best = i;
  }
  return best;
}

ControlVector first_control(const Eigen::Ref<const Eigen::RowVectorXd>& seq, int m) {
  ControlVector u(m);
  for (int j = 0; j < m; ++j) u[j] = seq[j];
  return u;
}

}  // namespace

OtMpcCycleOutput otmpc_cycle(const Eigen::MatrixXd& ensemble, const StateVector& x0,
                             const Environment& env, const OtMpcConfig& cfg, Rng& rng) {
  const int m = env.control_dim();
  if (ensemble.cols() != static_cast<Eigen::Index>(cfg.horizon) * m) {
    throw DomainError("ensemble width does not match horizon * control_dim");
  }
  ScdConfig scd = cfg.scd;
  scd.max_outer_iterations = cfg.inner_iterations;
  scd.resample_each_iteration = true;

  const ControlBounds& bounds = env.bounds();
  ProposalSource source = [&](const ParticleEnsemble& ens, int) {
    Eigen::MatrixXd y = sample_proposals(ens.particles, cfg.num_proposals, cfg.proposal, bounds, rng);
    Eigen::VectorXd s = rollout_costs(env, x0, y, cfg.workers);
    // p = gibbs_weights(S, beta), written as the batch's softmax scores.
    return ProposalBatch(std::move(y), -cfg.beta * s);
  };
  ScdRunResult run = scd_run(ParticleEnsemble(ensemble), source, scd);

  OtMpcCycleOutput out;
  out.ensemble = std::move(run.ensemble.particles);
  out.particle_costs = rollout_costs(env, x0, out.ensemble, cfg.workers);
  out.selected = argmin_lowest(out.particle_costs);
  out.action = first_control(out.ensemble.row(out.selected), m);
  out.trace = std::move(run.trace);
  return out;
}

OtMpcController::OtMpcController(OtMpcConfig cfg, const Environment& env, Rng& rng)
    : cfg_(std::move(cfg)) {
  const int m = env.control_dim();
  cfg_.proposal = cfg_.proposal.with_defaults(env.bounds());
  cfg_.validate(m);
  ensemble_ = Eigen::MatrixXd::Zero(cfg_.num_particles, static_cast<Eigen::Index>(cfg_.horizon) * m);
  if (cfg_.init == InitKind::kRandomSmooth) {
    for (Eigen::Index i = 0; i < ensemble_.rows(); ++i) {
      ar1_noise(ensemble_.row(i), cfg_.proposal.local_sigma, cfg_.proposal.temporal_correlation, rng);
    }
  }
  for (Eigen::Index i = 0; i < ensemble_.rows(); ++i) {
    Eigen::VectorXd row = ensemble_.row(i).transpose();
    env.bounds().clamp_sequence(row);
    ensemble_.row(i) = row.transpose();
  }
  last_action_ = ControlVector::Zero(m);
  for (int j = 0; j < m; ++j) last_action_[j] = env.bounds().clamp(j, 0.0);
}

CycleResult OtMpcController::cycle(const Environment& env, const StateVector& x0, Rng& rng) {
  CycleResult r;
  try {
    OtMpcCycleOutput out = otmpc_cycle(ensemble_, x0, env, cfg_, rng);
    ensemble_ = std::move(out.ensemble);
    r.action = out.action;
    r.diagnostics.best_cost = out.particle_costs[out.selected];
    const Eigen::RowVectorXd mean = ensemble_.colwise().mean();
    r.diagnostics.spread = (ensemble_.rowwise() - mean).rowwise().norm().maxCoeff();
    for (const auto& rec : out.trace.records) r.diagnostics.sinkhorn_iterations += rec.sinkhorn_iterations;
    if (out.trace.error) {
      r.diagnostics.error = out.trace.error;
    }
  } catch (const Error& e) {
    r.action = last_action_;
    r.diagnostics.failed = true;
    r.diagnostics.error = e.what();
  }
  r.planned = ensemble_;
  shift_sequences(ensemble_, env.control_dim());
  last_action_ = r.action;
  return r;
}

// ---------------------------------------------------------------------------
// MPPI

MppiController::MppiController(MppiConfig cfg, const Environment& env) : cfg_(std::move(cfg)) {
  const int m = env.control_dim();
  cfg_.proposal = cfg_.proposal.with_defaults(env.bounds());
  cfg_.validate(m);
  mean_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg_.horizon) * m);
  env.bounds().clamp_sequence(mean_);
  last_action_ = first_control(mean_.transpose(), m);
}

CycleResult MppiController::cycle(const Environment& env, const StateVector& x0, Rng& rng) {
  const int m = env.control_dim();
  CycleResult r;
  try {
    Eigen::VectorXd mean = mean_;
    for (int k = 0; k < cfg_.iterations; ++k) {
      // A one-particle ensemble makes this the same draw pattern as OT-MPC.
      const Eigen::MatrixXd y = sample_proposals(mean.transpose(), cfg_.num_samples, cfg_.proposal,
                                                 env.bounds(), rng);
      const Eigen::VectorXd s = rollout_costs(env, x0, y, cfg_.workers);
      mean = mppi_update(mean, y.rowwise() - mean.transpose(), s, cfg_.beta, env.bounds());
      r.diagnostics.best_cost = s.minCoeff();
    }
    mean_ = std::move(mean);
    r.action = first_control(mean_.transpose(), m);
  } catch (const Error& e) {
    r.action = last_action_;
    r.diagnostics.failed = true;
    r.diagnostics.error = e.what();
  }
  Eigen::MatrixXd row = mean_.transpose();
  r.planned = row;
  shift_sequences(row, m);
  mean_ = row.transpose();
  last_action_ = r.action;
  return r;
}

// ---------------------------------------------------------------------------
// CEM

CemController::CemController(CemConfig cfg, const Environment& env) : cfg_(std::move(cfg)) {
  const int m = env.control_dim();
  if (cfg_.initial_std.size() == 0) cfg_.initial_std = 0.5 * (env.bounds().upper - env.bounds().lower);
  cfg_.validate(m);
  const Eigen::Index d = static_cast<Eigen::Index>(cfg_.horizon) * m;
  stats_.mean = Eigen::VectorXd::Zero(d);
  env.bounds().clamp_sequence(stats_.mean);
  base_std_.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) base_std_[i] = cfg_.initial_std[i % m];
  stats_.std = base_std_;
  last_action_ = first_control(stats_.mean.transpose(), m);
}

CycleResult CemController::cycle(const Environment& env, const StateVector& x0, Rng& rng) {
  const int m = env.control_dim();
  const Eigen::Index d = stats_.mean.size();
  const Eigen::VectorXd unit = Eigen::VectorXd::Ones(m);
  CycleResult r;
  try {
    CemStats stats = stats_;
    Eigen::MatrixXd samples(cfg_.num_samples, d);
    Eigen::RowVectorXd noise(d);
    for (int k = 0; k < cfg_.iterations; ++k) {
      for (int s = 0; s < cfg_.num_samples; ++s) {
        ar1_noise(noise, unit, cfg_.temporal_correlation, rng);
        for (Eigen::Index i = 0; i < d; ++i) {
          samples(s, i) = env.bounds().clamp(i % m, stats.mean[i] + stats.std[i] * noise[i]);
        }
      }
      const Eigen::VectorXd costs = rollout_costs(env, x0, samples, cfg_.workers);
      stats = cem_update(samples, costs, cfg_.cem, stats);
      r.diagnostics.best_cost = costs.minCoeff();
    }
    stats_.mean = std::move(stats.mean);
    r.action = first_control(stats_.mean.transpose(), m);
  } catch (const Error& e) {
    r.action = last_action_;
    r.diagnostics.failed = true;
    r.diagnostics.error = e.what();
  }
  Eigen::MatrixXd row = stats_.mean.transpose();
  r.planned = row;
  shift_sequences(row, m);
  stats_.mean = row.transpose();
  stats_.std = base_std_;
  last_action_ = r.action;
  return r;
}

}  // namespace otmpc
